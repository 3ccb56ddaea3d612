//! Seeded experiment runner, CSV output and the command-line front end.

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::env::{
    best_rank, joint_action_count, mix64, ContextSource, EnvConfig, Environment, Problem,
};
use crate::error::{Error, Result};
use crate::linalg::{beta_classic, dot};
use crate::policies::{exploration_rounds, Etc, LinUcbA, LinUcbB, Policy, Width};

pub const CSV_HEADER: &str =
    "algo,problem,m,k,d,rep,t,cumulative_regret,coordinated_frac,band_lo,band_hi";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, ValueEnum)]
pub enum Algo {
    #[serde(rename = "linucb-a")]
    #[value(name = "linucb-a")]
    LinUcbA,
    #[serde(rename = "linucb-b")]
    #[value(name = "linucb-b")]
    LinUcbB,
    #[serde(rename = "etc")]
    #[value(name = "etc")]
    Etc,
}

impl Algo {
    pub fn as_str(self) -> &'static str {
        match self {
            Algo::LinUcbA => "linucb-a",
            Algo::LinUcbB => "linucb-b",
            Algo::Etc => "etc",
        }
    }
}

impl std::fmt::Display for Algo {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Confidence-width schedule selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
pub enum WidthSchedule {
    /// Classical self-normalized schedule (`m₂ = 1`, `δ = 1/T`, `L = √d`).
    #[serde(rename = "classic")]
    #[value(name = "classic")]
    Classic,
    /// `β_T = √T`, i.e. a constant `√β = T^(1/4)`.
    #[serde(rename = "sqrtT")]
    #[value(name = "sqrtT")]
    SqrtT,
}

fn default_alpha() -> f64 {
    0.5
}

fn default_stride() -> usize {
    10
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub algo: Algo,
    pub problem: Problem,
    #[serde(rename = "m")]
    pub num_players: usize,
    #[serde(rename = "k")]
    pub num_actions: usize,
    #[serde(rename = "d")]
    pub dim: usize,
    pub horizon: usize,
    pub reps: usize,
    pub seed: u64,
    /// ETC exploration exponent.
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    /// `None` picks the per-algorithm default.
    #[serde(default)]
    pub width: Option<WidthSchedule>,
    #[serde(default = "default_stride")]
    pub stride: usize,
    #[serde(default)]
    pub contexts: ContextSource,
}

impl ExperimentConfig {
    /// Defaults for everything but the problem shape.
    pub fn new(
        algo: Algo,
        problem: Problem,
        num_players: usize,
        num_actions: usize,
        dim: usize,
        horizon: usize,
    ) -> Self {
        Self {
            algo,
            problem,
            num_players,
            num_actions,
            dim,
            horizon,
            reps: 5,
            seed: 0,
            alpha: default_alpha(),
            width: None,
            stride: default_stride(),
            contexts: ContextSource::Uniform,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let compatible = match self.algo {
            Algo::LinUcbA => self.problem == Problem::A,
            Algo::LinUcbB => self.problem == Problem::B,
            Algo::Etc => matches!(self.problem, Problem::B | Problem::C),
        };
        if !compatible {
            return Err(Error::config(format!(
                "{} cannot run on problem {} (linucb-a needs A, linucb-b needs B, etc needs B or C)",
                self.algo, self.problem
            )));
        }
        joint_action_count(self.num_players, self.num_actions)?;
        if self.dim == 0 {
            return Err(Error::config("d must be at least 1"));
        }
        if self.horizon == 0 || self.reps == 0 || self.stride == 0 {
            return Err(Error::config("horizon, reps and stride must be positive"));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::config(format!(
                "alpha must lie in (0, 1), got {}",
                self.alpha
            )));
        }
        if self.algo == Algo::Etc {
            exploration_rounds(self.horizon, self.alpha)
                .map_err(|e| Error::config(e.to_string()))?;
        }
        if let ContextSource::Adversarial { gap } = self.contexts {
            if self.num_players != 2 || self.num_actions != 2 {
                return Err(Error::config(
                    "adversarial contexts require m = 2 and k = 2",
                ));
            }
            if !(gap.is_finite() && gap > 0.0) {
                return Err(Error::config("adversarial gap must be positive"));
            }
        }
        Ok(())
    }

    pub fn width_schedule(&self) -> WidthSchedule {
        self.width.unwrap_or(match self.algo {
            Algo::LinUcbA => WidthSchedule::Classic,
            Algo::LinUcbB | Algo::Etc => WidthSchedule::SqrtT,
        })
    }

    fn context_norm_bound(&self) -> f64 {
        (self.dim as f64).sqrt()
    }

    fn build_policy(&self) -> Result<Box<dyn Policy + Send>> {
        let (m, k, d, t) = (self.num_players, self.num_actions, self.dim, self.horizon);
        let l = self.context_norm_bound();
        let policy: Box<dyn Policy + Send> = match self.algo {
            Algo::LinUcbA => {
                let lambda = 1.0;
                let width = match self.width_schedule() {
                    WidthSchedule::Classic => Width::classic(lambda, d, t, l)?,
                    WidthSchedule::SqrtT => Width::sqrt_t(t),
                };
                Box::new(LinUcbA::new(m, d, lambda, width)?)
            }
            Algo::LinUcbB => {
                let lambda = (t as f64).sqrt();
                let width = match self.width_schedule() {
                    WidthSchedule::Classic => Width::classic(lambda, d, t, l)?,
                    WidthSchedule::SqrtT => Width::sqrt_t(t),
                };
                Box::new(LinUcbB::new(m, d, lambda, width)?)
            }
            Algo::Etc => {
                let lambda = (t as f64).powf(self.alpha);
                let sqrt_beta = match self.width_schedule() {
                    WidthSchedule::Classic => match Width::classic(lambda, d, t, l)? {
                        Width::Classic(p) => beta_classic(&p, t as u64),
                        Width::Constant(w) => w,
                    },
                    WidthSchedule::SqrtT => Width::sqrt_t(t).sqrt_beta(0),
                };
                Box::new(Etc::new(m, k, d, t, self.alpha, lambda, sqrt_beta)?)
            }
        };
        Ok(policy)
    }
}

/// Seed of repetition `rep`: a SplitMix64 mix of the master seed and the
/// repetition index.
pub fn derive_seed(seed: u64, rep: usize) -> u64 {
    mix64(seed ^ mix64(rep as u64))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TracePoint {
    pub t: usize,
    pub cumulative_regret: f64,
    /// Fraction of rounds `1..=t` on which all intents agreed.
    pub coordinated_frac: f64,
}

/// Cumulative mean-level regret of one repetition, sampled every `stride`
/// rounds (and at the horizon).
#[derive(Debug, Clone, PartialEq)]
pub struct RegretTrace {
    pub rep_index: usize,
    pub points: Vec<TracePoint>,
}

impl RegretTrace {
    pub fn final_regret(&self) -> f64 {
        self.points.last().map_or(0.0, |p| p.cumulative_regret)
    }

    /// Cumulative regret at round `t`, if that round was sampled.
    pub fn regret_at(&self, t: usize) -> Option<f64> {
        self.points
            .iter()
            .find(|p| p.t == t)
            .map(|p| p.cumulative_regret)
    }
}

/// Everything recorded for one repetition.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub trace: RegretTrace,
    /// Per-round coordination flag, index `t − 1`.
    pub coordinated: Vec<bool>,
    /// Per-round realized joint-action rank, index `t − 1`.
    pub realized_ranks: Vec<usize>,
    pub theta_star: Vec<f64>,
}

impl TrialRecord {
    /// Fraction of miscoordinated rounds among rounds `from..to` (1-based,
    /// half open).
    pub fn miscoordination_rate(&self, from: usize, to: usize) -> f64 {
        let slice = &self.coordinated[from - 1..to - 1];
        slice.iter().filter(|&&c| !c).count() as f64 / slice.len() as f64
    }
}

fn sampled(t: usize, stride: usize, horizon: usize) -> bool {
    t.is_multiple_of(stride) || t == horizon
}

/// Plays one seeded repetition and records its regret trace.
pub fn run_trial(config: &ExperimentConfig, rep: usize) -> Result<RegretTrace> {
    run_trial_detailed(config, rep).map(|r| r.trace)
}

pub fn run_trial_detailed(config: &ExperimentConfig, rep: usize) -> Result<TrialRecord> {
    config.validate()?;
    let mut env_config = EnvConfig::new(
        config.num_players,
        config.num_actions,
        config.dim,
        config.problem,
        derive_seed(config.seed, rep),
    )?;
    env_config.contexts = config.contexts;
    let mut env = Environment::new(env_config)?;
    let mut policy = config.build_policy()?;
    run_with(
        &mut env,
        policy.as_mut(),
        config.horizon,
        config.stride,
        rep,
    )
}

/// Drives `policy` against `env` for `horizon` rounds.
pub fn run_with(
    env: &mut Environment,
    policy: &mut dyn Policy,
    horizon: usize,
    stride: usize,
    rep: usize,
) -> Result<TrialRecord> {
    let theta_star = env.theta_star().to_vec();
    let mut points = Vec::with_capacity(horizon / stride.max(1) + 1);
    let mut coordinated = Vec::with_capacity(horizon);
    let mut realized_ranks = Vec::with_capacity(horizon);
    let mut regret = 0.0;
    let mut n_coordinated = 0usize;
    let num_actions = env.config().num_actions;

    for t in 1..=horizon {
        let contexts = env.contexts(t);
        let record = policy.select(t, &contexts)?;
        let (_, best) = best_rank(&contexts, &theta_star);
        let chosen = dot(contexts.of(&record.realized), &theta_star);
        regret += best - chosen;

        coordinated.push(record.coordinated);
        n_coordinated += usize::from(record.coordinated);
        realized_ranks.push(crate::env::joint_action_rank(
            &record.realized,
            num_actions,
        )?);

        let feedback = env.pull(&contexts, &record.realized);
        policy.observe(t, &contexts, &feedback)?;

        if sampled(t, stride, horizon) {
            points.push(TracePoint {
                t,
                cumulative_regret: regret,
                coordinated_frac: n_coordinated as f64 / t as f64,
            });
        }
    }

    Ok(TrialRecord {
        trace: RegretTrace {
            rep_index: rep,
            points,
        },
        coordinated,
        realized_ranks,
        theta_star,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SummaryPoint {
    pub t: usize,
    pub median: f64,
    pub band_lo: f64,
    pub band_hi: f64,
    pub coordinated_frac: f64,
}

/// Per-round median and min/max band across repetitions.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Summary {
    pub points: Vec<SummaryPoint>,
}

impl Summary {
    pub fn from_traces(traces: &[RegretTrace]) -> Self {
        let Some(first) = traces.first() else {
            return Self::default();
        };
        let points = (0..first.points.len())
            .map(|i| {
                let regrets: Vec<f64> = traces
                    .iter()
                    .map(|tr| tr.points[i].cumulative_regret)
                    .collect();
                let fracs: Vec<f64> = traces
                    .iter()
                    .map(|tr| tr.points[i].coordinated_frac)
                    .collect();
                let (lo, hi) = regrets
                    .iter()
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                        (lo.min(v), hi.max(v))
                    });
                SummaryPoint {
                    t: first.points[i].t,
                    median: median(&regrets),
                    band_lo: lo,
                    band_hi: hi,
                    coordinated_frac: median(&fracs),
                }
            })
            .collect();
        Self { points }
    }

    pub fn final_median(&self) -> f64 {
        self.points.last().map_or(0.0, |p| p.median)
    }

    pub fn median_at(&self, t: usize) -> Option<f64> {
        self.points.iter().find(|p| p.t == t).map(|p| p.median)
    }
}

/// Median of a nonempty slice; the mean of the two middle values for even
/// lengths.
pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub traces: Vec<RegretTrace>,
    pub summary: Summary,
}

impl Experiment {
    pub fn from_traces(config: ExperimentConfig, traces: Vec<RegretTrace>) -> Self {
        let summary = Summary::from_traces(&traces);
        Self {
            config,
            traces,
            summary,
        }
    }

    /// CSV rows in output order: every trace in repetition order, then the
    /// summary rows.
    pub fn rows(&self) -> Vec<CsvRow> {
        let c = &self.config;
        let base = |rep: i64, t: usize, regret: f64, frac: f64| CsvRow {
            algo: c.algo,
            problem: c.problem,
            m: c.num_players,
            k: c.num_actions,
            d: c.dim,
            rep,
            t,
            cumulative_regret: regret,
            coordinated_frac: frac,
            band_lo: None,
            band_hi: None,
        };
        let mut rows = Vec::new();
        for tr in &self.traces {
            for p in &tr.points {
                rows.push(base(
                    tr.rep_index as i64,
                    p.t,
                    p.cumulative_regret,
                    p.coordinated_frac,
                ));
            }
        }
        for p in &self.summary.points {
            rows.push(CsvRow {
                band_lo: Some(p.band_lo),
                band_hi: Some(p.band_hi),
                ..base(-1, p.t, p.median, p.coordinated_frac)
            });
        }
        rows
    }
}

/// Runs every repetition on the rayon pool; results are joined in
/// repetition order.
pub fn run_experiment(config: &ExperimentConfig) -> Result<Experiment> {
    config.validate()?;
    let traces = (0..config.reps)
        .into_par_iter()
        .map(|rep| run_trial(config, rep))
        .collect::<Result<Vec<_>>>()?;
    Ok(Experiment::from_traces(config.clone(), traces))
}

pub fn run_experiment_serial(config: &ExperimentConfig) -> Result<Experiment> {
    config.validate()?;
    let traces = (0..config.reps)
        .map(|rep| run_trial(config, rep))
        .collect::<Result<Vec<_>>>()?;
    Ok(Experiment::from_traces(config.clone(), traces))
}

/// One line of the output CSV. Summary rows carry `rep = -1` and the band.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvRow {
    pub algo: Algo,
    pub problem: Problem,
    pub m: usize,
    pub k: usize,
    pub d: usize,
    pub rep: i64,
    pub t: usize,
    pub cumulative_regret: f64,
    pub coordinated_frac: f64,
    pub band_lo: Option<f64>,
    pub band_hi: Option<f64>,
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Writes the header and `rows` as UTF-8 with LF line endings. Floats use
/// the shortest representation that parses back to the same value.
pub fn write_rows<W: Write>(mut w: W, rows: &[CsvRow]) -> std::io::Result<()> {
    writeln!(w, "{CSV_HEADER}")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{}",
            r.algo,
            r.problem,
            r.m,
            r.k,
            r.d,
            r.rep,
            r.t,
            r.cumulative_regret,
            r.coordinated_frac,
            fmt_opt(r.band_lo),
            fmt_opt(r.band_hi),
        )?;
    }
    w.flush()
}

pub fn write_csv(experiment: &Experiment, path: &Path) -> Result<()> {
    let io = |source| Error::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = File::create(path).map_err(io)?;
    write_rows(BufWriter::new(file), &experiment.rows()).map_err(io)
}

/// Parses harness CSV, rejecting any header other than [`CSV_HEADER`].
pub fn read_rows<R: Read>(reader: R, origin: &Path) -> Result<Vec<CsvRow>> {
    let parse = |message: String| Error::Parse {
        path: origin.to_path_buf(),
        message,
    };
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(reader);
    let header = rdr.headers().map_err(|e| parse(e.to_string()))?;
    let got: Vec<&str> = header.iter().collect();
    let want: Vec<&str> = CSV_HEADER.split(',').collect();
    if got != want {
        return Err(parse(format!("unexpected header {got:?}")));
    }
    rdr.deserialize()
        .map(|r| r.map_err(|e| parse(e.to_string())))
        .collect()
}

pub fn read_csv(path: &Path) -> Result<Vec<CsvRow>> {
    let file = File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    read_rows(file, path)
}

/// A batch of experiments read from JSON by the `sweep` subcommand.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepFile {
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
    pub experiments: Vec<SweepEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepEntry {
    #[serde(flatten)]
    pub config: ExperimentConfig,
    /// File name inside the output directory; derived from the config when
    /// absent.
    #[serde(default)]
    pub out: Option<PathBuf>,
}

impl SweepEntry {
    pub fn file_name(&self) -> PathBuf {
        self.out.clone().unwrap_or_else(|| {
            let c = &self.config;
            PathBuf::from(format!(
                "{}_{}_m{}_k{}_d{}.csv",
                c.algo, c.problem, c.num_players, c.num_actions, c.dim
            ))
        })
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "asym-bandit",
    about = "Multiplayer information-asymmetric linear bandit simulations"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one experiment and write its CSV.
    Run(RunArgs),
    /// Run every experiment listed in a JSON file.
    Sweep(SweepArgs),
}

#[derive(Debug, clap::Args)]
struct RunArgs {
    #[arg(long, value_enum)]
    algo: Algo,
    #[arg(long, value_parser = parse_problem)]
    problem: Problem,
    #[arg(long)]
    m: usize,
    #[arg(long)]
    k: usize,
    #[arg(long)]
    d: usize,
    #[arg(long)]
    horizon: usize,
    #[arg(long, default_value_t = 5)]
    reps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0.5)]
    alpha: f64,
    /// Confidence-width schedule; defaults to classic for linucb-a and
    /// sqrtT otherwise.
    #[arg(long, value_enum)]
    width: Option<WidthSchedule>,
    #[arg(long, default_value_t = 10)]
    stride: usize,
    /// Use the two-player coordination-failure contexts with this gap.
    #[arg(long)]
    adversarial_gap: Option<f64>,
    /// Run repetitions on the calling thread.
    #[arg(long)]
    serial: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, clap::Args)]
struct SweepArgs {
    /// JSON file with an `experiments` array.
    config: PathBuf,
    /// Overrides `out_dir` from the file.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

fn parse_problem(s: &str) -> std::result::Result<Problem, String> {
    s.parse::<Problem>().map_err(|e| e.to_string())
}

fn report(experiment: &Experiment, out: &Path) {
    let c = &experiment.config;
    let last = experiment.summary.points.last();
    println!(
        "{}/{} m={} k={} d={} T={} reps={}: final median regret {} (band {}..{}) -> {}",
        c.algo,
        c.problem,
        c.num_players,
        c.num_actions,
        c.dim,
        c.horizon,
        c.reps,
        experiment.summary.final_median(),
        last.map_or(0.0, |p| p.band_lo),
        last.map_or(0.0, |p| p.band_hi),
        out.display()
    );
}

fn run_command(cmd: Command) -> Result<()> {
    match cmd {
        Command::Run(a) => {
            let config = ExperimentConfig {
                algo: a.algo,
                problem: a.problem,
                num_players: a.m,
                num_actions: a.k,
                dim: a.d,
                horizon: a.horizon,
                reps: a.reps,
                seed: a.seed,
                alpha: a.alpha,
                width: a.width,
                stride: a.stride,
                contexts: a.adversarial_gap.map_or(ContextSource::Uniform, |gap| {
                    ContextSource::Adversarial { gap }
                }),
            };
            config.validate()?;
            let experiment = if a.serial {
                run_experiment_serial(&config)?
            } else {
                run_experiment(&config)?
            };
            write_csv(&experiment, &a.out)?;
            report(&experiment, &a.out);
            Ok(())
        }
        Command::Sweep(a) => {
            let text = std::fs::read_to_string(&a.config).map_err(|source| Error::Io {
                path: a.config.clone(),
                source,
            })?;
            let sweep: SweepFile = serde_json::from_str(&text)
                .map_err(|e| Error::config(format!("{}: {e}", a.config.display())))?;
            for entry in &sweep.experiments {
                entry.config.validate()?;
            }
            let dir = a
                .out_dir
                .or(sweep.out_dir.clone())
                .unwrap_or_else(|| PathBuf::from("."));
            std::fs::create_dir_all(&dir).map_err(|source| Error::Io {
                path: dir.clone(),
                source,
            })?;
            for entry in &sweep.experiments {
                let experiment = run_experiment(&entry.config)?;
                let out = dir.join(entry.file_name());
                write_csv(&experiment, &out)?;
                report(&experiment, &out);
            }
            Ok(())
        }
    }
}

/// CLI entry point. Returns 0 on success, 2 on usage or configuration
/// errors and 1 on runtime failures.
pub fn cli_main<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run_command(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_config() {
                2
            } else {
                1
            }
        }
    }
}
