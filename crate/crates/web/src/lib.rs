//! WebAssembly bindings for the browser demo.
//!
//! Each exported function takes plain numbers or a JSON string and returns
//! JSON. The `*_json` functions hold the logic so they can be tested
//! natively.

use asym_bandit::harness::{
    median, run_experiment_serial, run_trial_detailed, Algo, Experiment, ExperimentConfig,
};
use asym_bandit::{ContextSource, Problem};
use serde::Serialize;
use wasm_bindgen::prelude::*;

/// Keeps a single call under a few seconds in the browser.
pub const MAX_WORK: usize = 400_000;

#[derive(Debug, Serialize, PartialEq)]
pub struct Curve {
    pub label: String,
    pub t: Vec<usize>,
    pub median: Vec<f64>,
    pub band_lo: Vec<f64>,
    pub band_hi: Vec<f64>,
    pub coordinated_frac: Vec<f64>,
}

impl Curve {
    fn from_experiment(label: String, exp: &Experiment) -> Self {
        let p = &exp.summary.points;
        Self {
            label,
            t: p.iter().map(|p| p.t).collect(),
            median: p.iter().map(|p| p.median).collect(),
            band_lo: p.iter().map(|p| p.band_lo).collect(),
            band_hi: p.iter().map(|p| p.band_hi).collect(),
            coordinated_frac: p.iter().map(|p| p.coordinated_frac).collect(),
        }
    }
}

fn check_budget(config: &ExperimentConfig, runs: usize) -> Result<(), String> {
    let work = config.horizon * config.reps * runs;
    if work > MAX_WORK {
        return Err(format!(
            "horizon × reps × runs = {work} exceeds the demo limit of {MAX_WORK}"
        ));
    }
    Ok(())
}

fn run(config: &ExperimentConfig, label: String) -> Result<Curve, String> {
    let exp = run_experiment_serial(config).map_err(|e| e.to_string())?;
    Ok(Curve::from_experiment(label, &exp))
}

/// Runs one experiment described by an `ExperimentConfig` JSON object.
pub fn simulate_json(config_json: &str) -> Result<String, String> {
    let config: ExperimentConfig = serde_json::from_str(config_json).map_err(|e| e.to_string())?;
    config.validate().map_err(|e| e.to_string())?;
    check_budget(&config, 1)?;
    let label = format!("{}/{}", config.algo, config.problem);
    let curve = run(&config, label)?;
    serde_json::to_string(&curve).map_err(|e| e.to_string())
}

/// Regret curves of LinUCB-A/A, LinUCB-B/B, ETC/B and ETC/C (m = K = 2).
pub fn compare_json(dim: usize, horizon: usize, reps: usize, seed: u64) -> Result<String, String> {
    let mut curves = Vec::new();
    for (algo, problem) in [
        (Algo::LinUcbA, Problem::A),
        (Algo::LinUcbB, Problem::B),
        (Algo::Etc, Problem::B),
        (Algo::Etc, Problem::C),
    ] {
        let config = ExperimentConfig {
            reps,
            seed,
            stride: (horizon / 200).max(1),
            ..ExperimentConfig::new(algo, problem, 2, 2, dim, horizon)
        };
        config.validate().map_err(|e| e.to_string())?;
        check_budget(&config, 4)?;
        curves.push(run(&config, format!("{algo}/{problem}"))?);
    }
    serde_json::to_string(&curves).map_err(|e| e.to_string())
}

#[derive(Debug, Serialize, PartialEq)]
pub struct Profile {
    pub label: String,
    /// Last round of each window.
    pub window_end: Vec<usize>,
    /// Median over repetitions of the miscoordinated fraction per window.
    pub rate: Vec<f64>,
}

/// LinUCB-B miscoordination rate per window, on stochastic and on
/// adversarial (gap) contexts.
pub fn miscoordination_json(
    horizon: usize,
    reps: usize,
    seed: u64,
    windows: usize,
    gap: f64,
) -> Result<String, String> {
    if windows == 0 || windows > horizon {
        return Err(format!("windows must lie in 1..={horizon}"));
    }
    let mut profiles = Vec::new();
    for (label, contexts) in [
        ("stochastic", ContextSource::Uniform),
        ("adversarial", ContextSource::Adversarial { gap }),
    ] {
        let config = ExperimentConfig {
            reps,
            seed,
            contexts,
            ..ExperimentConfig::new(Algo::LinUcbB, Problem::B, 2, 2, 5, horizon)
        };
        config.validate().map_err(|e| e.to_string())?;
        check_budget(&config, 2)?;
        let records = (0..reps)
            .map(|rep| run_trial_detailed(&config, rep).map_err(|e| e.to_string()))
            .collect::<Result<Vec<_>, _>>()?;
        let bounds: Vec<usize> = (0..=windows).map(|w| 1 + w * horizon / windows).collect();
        let rate = bounds
            .windows(2)
            .map(|b| {
                let per_rep: Vec<f64> = records
                    .iter()
                    .map(|r| r.miscoordination_rate(b[0], b[1]))
                    .collect();
                median(&per_rep)
            })
            .collect();
        profiles.push(Profile {
            label: label.into(),
            window_end: bounds[1..].iter().map(|b| b - 1).collect(),
            rate,
        });
    }
    serde_json::to_string(&profiles).map_err(|e| e.to_string())
}

#[wasm_bindgen]
pub fn simulate(config_json: &str) -> Result<String, JsError> {
    simulate_json(config_json).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn compare(dim: usize, horizon: usize, reps: usize, seed: u32) -> Result<String, JsError> {
    compare_json(dim, horizon, reps, u64::from(seed)).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn miscoordination(
    horizon: usize,
    reps: usize,
    seed: u32,
    windows: usize,
    gap: f64,
) -> Result<String, JsError> {
    miscoordination_json(horizon, reps, u64::from(seed), windows, gap).map_err(|e| JsError::new(&e))
}
