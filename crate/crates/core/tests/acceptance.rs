//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits nonzero if any fails. Pass criterion numbers as arguments to run a
//! subset.

mod common;

use std::process::ExitCode;
use std::time::{Duration, Instant};

use asym_bandit::env::{EnvConfig, Environment, Problem};
use asym_bandit::harness::{
    derive_seed, median, run_experiment, run_experiment_serial, run_trial_detailed, write_rows,
    Algo, ExperimentConfig, WidthSchedule,
};
use asym_bandit::linalg::DesignState;
use asym_bandit::policies::{
    coordination_gap_holds, exploration_rounds, CoordinationLemma, Etc, EtcPhase, PlayerState,
    Policy,
};
use asym_bandit::ContextSource;
use common::{gauss_solve, min_eigenvalue, norm, random_vec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SEED: u64 = 42;
const HORIZON: usize = 10_000;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

fn base_grid(algo: Algo, problem: Problem) -> ExperimentConfig {
    ExperimentConfig {
        reps: 5,
        seed: SEED,
        ..ExperimentConfig::new(algo, problem, 2, 2, 5, HORIZON)
    }
}

fn final_median(config: &ExperimentConfig) -> f64 {
    run_experiment(config).unwrap().summary.final_median()
}

fn ridge_oracle() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let d = rng.gen_range(1..=8);
        let n = rng.gen_range(0..=200);
        let lambda = rng.gen_range(0.1..10.0);
        let mut state = DesignState::new(d, lambda).unwrap();
        let mut v: Vec<f64> = (0..d * d)
            .map(|k| if k / d == k % d { lambda } else { 0.0 })
            .collect();
        let mut b = vec![0.0; d];
        for _ in 0..n {
            let x = random_vec(&mut rng, d, 1.0);
            let r = rng.gen_range(-2.0..2.0);
            state.update(&x, r).unwrap();
            for i in 0..d {
                b[i] += r * x[i];
                for j in 0..d {
                    v[i * d + j] += x[i] * x[j];
                }
            }
        }
        let want = gauss_solve(&v, &b);
        let got = state.solve_theta();
        for (g, w) in got.iter().zip(&want) {
            worst = worst.max((g - w).abs());
        }
    }
    verdict(
        worst < 1e-8,
        format!("max |Δθ| = {worst:.3e} over 100 instances (tol 1e-8)"),
    )
}

fn eigen_monotone() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst_drop = 0.0f64;
    let mut below_lambda = 0usize;
    for _ in 0..1000 {
        let d = rng.gen_range(1..=8);
        let lambda = rng.gen_range(0.1..10.0);
        let mut state = DesignState::new(d, lambda).unwrap();
        let mut prev = min_eigenvalue(state.v_matrix(), d);
        for _ in 0..rng.gen_range(1..=40) {
            let x = random_vec(&mut rng, d, 1.0);
            state.update(&x, 0.0).unwrap();
            let now = min_eigenvalue(state.v_matrix(), d);
            worst_drop = worst_drop.max(prev - now);
            below_lambda += usize::from(now < lambda - 1e-9);
            prev = now;
        }
    }
    verdict(
        worst_drop <= 1e-10 && below_lambda == 0,
        format!("largest decrease {worst_drop:.3e} (tol 1e-10), {below_lambda} steps below λ"),
    )
}

fn coordination_lemma() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut disagreements = 0usize;
    for _ in 0..10_000 {
        let d = rng.gen_range(1..=8);
        let l = rng.gen_range(0.5..3.0);
        let theta_star = random_vec(&mut rng, d, 1.0);
        let in_ball = |rng: &mut ChaCha8Rng| {
            let v = random_vec(rng, d, 1.0);
            let s = l * rng.gen_range(0.0..1.0) / norm(&v).max(1e-12);
            v.iter().map(|c| c * s).collect::<Vec<f64>>()
        };
        let (mut x, mut xp) = (in_ball(&mut rng), in_ball(&mut rng));
        let gap = common::dot(&theta_star, &x) - common::dot(&theta_star, &xp);
        if gap < 0.0 {
            std::mem::swap(&mut x, &mut xp);
        }
        let gap = gap.abs();
        if gap == 0.0 {
            continue;
        }
        // Radius strictly inside the admissible gap.
        let radius = rng.gen_range(0.01..0.99) * gap / (2.0 * l);
        let lambda = rng.gen_range(1.0..100.0);
        let lemma = CoordinationLemma {
            sqrt_beta: (radius * lambda).sqrt(),
            lambda,
            context_norm_bound: l,
        };
        let players = rng.gen_range(2..=4);
        let estimates: Vec<Vec<f64>> = (0..players)
            .map(|_| {
                let u = random_vec(&mut rng, d, 1.0);
                let s = 0.999 * lemma.radius() * rng.gen_range(0.0..1.0) / norm(&u).max(1e-12);
                theta_star.iter().zip(&u).map(|(t, c)| t + s * c).collect()
            })
            .collect();
        assert!(estimates.iter().all(|e| lemma.in_ball(e, &theta_star)));
        assert!(lemma.gap_condition(&theta_star, &x, &xp));
        disagreements += usize::from(!coordination_gap_holds(&estimates, &x, &xp));
    }
    verdict(
        disagreements == 0,
        format!("{disagreements} ranking disagreements in 10^4 instances"),
    )
}

fn linucb_a_coordination() -> Verdict {
    let config = ExperimentConfig {
        reps: 5,
        seed: SEED,
        ..ExperimentConfig::new(Algo::LinUcbA, Problem::A, 3, 3, 5, 2000)
    };
    let miscoordinated: usize = (0..5)
        .map(|rep| {
            let rec = run_trial_detailed(&config, rep).unwrap();
            rec.coordinated.iter().filter(|c| !**c).count()
        })
        .sum();
    verdict(
        miscoordinated == 0,
        format!("{miscoordinated} miscoordinated rounds over 5×2000"),
    )
}

fn sqrt_t_scaling() -> Verdict {
    let exp = run_experiment(&base_grid(Algo::LinUcbA, Problem::A)).unwrap();
    let r_full = exp.summary.median_at(10_000).unwrap();
    let r_quarter = exp.summary.median_at(2_500).unwrap();
    let ratio = r_full / r_quarter;
    verdict(
        (1.3..=3.0).contains(&ratio),
        format!("R(10000)/R(2500) = {r_full:.2}/{r_quarter:.2} = {ratio:.3} (need 1.3..3.0)"),
    )
}

fn algorithm_ordering() -> Verdict {
    let a = final_median(&base_grid(Algo::LinUcbA, Problem::A));
    let b = final_median(&base_grid(Algo::LinUcbB, Problem::B));
    let etc_b = final_median(&base_grid(Algo::Etc, Problem::B));
    let etc_c = final_median(&base_grid(Algo::Etc, Problem::C));
    // LinUCB-A with the sqrtT width, reported for context.
    let mut a_sqrt = base_grid(Algo::LinUcbA, Problem::A);
    a_sqrt.width = Some(WidthSchedule::SqrtT);
    let a_sqrt = final_median(&a_sqrt);
    let etc_rel = (etc_b - etc_c).abs() / etc_b.max(etc_c);
    let ordered = a <= b && b <= etc_c;
    verdict(
        ordered && etc_rel <= 0.25,
        format!(
            "A={a:.2} (sqrtT width {a_sqrt:.2}), B={b:.2}, ETC/C={etc_c:.2}; \
             A≤B≤ETC/C {}; ETC B vs C differ by {:.1}% (tol 25%)",
            if ordered { "holds" } else { "violated" },
            100.0 * etc_rel
        ),
    )
}

fn design_bits(players: &[PlayerState]) -> Vec<u64> {
    let mut bits = Vec::new();
    for p in players {
        let d = &p.design;
        bits.extend(d.v_matrix().iter().map(|v| v.to_bits()));
        bits.extend(d.v_inverse().iter().map(|v| v.to_bits()));
        bits.extend(d.b_vector().iter().map(|v| v.to_bits()));
        bits.extend(p.theta_hat.iter().map(|v| v.to_bits()));
        bits.push(d.lambda().to_bits());
        bits.push(d.update_count());
    }
    bits
}

fn etc_structure() -> Verdict {
    let mut problems = Vec::new();
    for horizon in [HORIZON, 10_001, 2_000] {
        let n = exploration_rounds(horizon, 0.5).unwrap();
        let expect = (horizon as f64).sqrt().ceil() as usize;
        if n != expect {
            problems.push(format!(
                "T={horizon}: {n} exploration rounds, want {expect}"
            ));
        }
        let cfg = EnvConfig::new(2, 2, 5, Problem::C, derive_seed(SEED, 0)).unwrap();
        let mut env = Environment::new(cfg).unwrap();
        let mut pol = Etc::with_defaults(2, 2, 5, horizon, 0.5).unwrap();
        let mut first_commit = None;
        for t in 1..=horizon {
            let cs = env.contexts(t);
            let rec = pol.select(t, &cs).unwrap();
            if t <= n
                && rec
                    .intended
                    .iter()
                    .any(|a| a.actions().iter().any(|&c| c != 0))
            {
                problems.push(format!(
                    "T={horizon}: non-zero intent in exploration round {t}"
                ));
            }
            if t == n + 1 {
                if pol.phase() != EtcPhase::Commit {
                    problems.push(format!("T={horizon}: still exploring at round {t}"));
                }
                first_commit = Some(design_bits(pol.players()));
            }
            let fb = env.pull(&cs, &rec.realized);
            pol.observe(t, &cs, &fb).unwrap();
        }
        if first_commit.as_deref() != Some(design_bits(pol.players()).as_slice()) {
            problems.push(format!("T={horizon}: design state changed during commit"));
        }
    }
    verdict(
        problems.is_empty(),
        if problems.is_empty() {
            "ceil(√T) rank-0 rounds for T ∈ {10000, 10001, 2000}; commit state bit-identical".into()
        } else {
            problems.join("; ")
        },
    )
}

fn miscoordination_decay() -> Verdict {
    let config = base_grid(Algo::LinUcbB, Problem::B);
    let q = HORIZON / 4;
    let (first, last): (Vec<f64>, Vec<f64>) = (0..5)
        .map(|rep| {
            let rec = run_trial_detailed(&config, rep).unwrap();
            (
                rec.miscoordination_rate(1, q + 1),
                rec.miscoordination_rate(HORIZON - q + 1, HORIZON + 1),
            )
        })
        .unzip();
    let (mf, ml) = (median(&first), median(&last));
    verdict(
        ml < mf,
        format!("median miscoordination rate first quarter {mf:.4}, final quarter {ml:.4}"),
    )
}

fn adversarial_failure() -> Verdict {
    let mut adv = base_grid(Algo::LinUcbB, Problem::B);
    adv.contexts = ContextSource::Adversarial { gap: 1e-3 };
    let exp = run_experiment(&adv).unwrap();
    let adv_ratio = exp.summary.median_at(10_000).unwrap() / exp.summary.median_at(5_000).unwrap();
    let exp = run_experiment(&base_grid(Algo::LinUcbB, Problem::B)).unwrap();
    let sto_ratio = exp.summary.median_at(10_000).unwrap() / exp.summary.median_at(5_000).unwrap();
    verdict(
        adv_ratio >= 1.7 && sto_ratio <= 1.6,
        format!("R(10000)/R(5000): adversarial {adv_ratio:.3} (need ≥ 1.7), stochastic {sto_ratio:.3} (need ≤ 1.6)"),
    )
}

fn csv_bytes(config: &ExperimentConfig, serial: bool) -> Vec<u8> {
    let exp = if serial {
        run_experiment_serial(config)
    } else {
        run_experiment(config)
    }
    .unwrap();
    let mut buf = Vec::new();
    write_rows(&mut buf, &exp.rows()).unwrap();
    buf
}

fn determinism() -> Verdict {
    let mut adv = base_grid(Algo::LinUcbB, Problem::B);
    adv.contexts = ContextSource::Adversarial { gap: 1e-3 };
    let configs = [
        base_grid(Algo::LinUcbA, Problem::A),
        base_grid(Algo::LinUcbB, Problem::B),
        base_grid(Algo::Etc, Problem::C),
        adv,
    ];
    let mut mismatched = Vec::new();
    for c in &configs {
        let reference = csv_bytes(c, false);
        if csv_bytes(c, false) != reference || csv_bytes(c, true) != reference {
            mismatched.push(format!("{}/{}", c.algo, c.problem));
        }
    }
    verdict(
        mismatched.is_empty(),
        if mismatched.is_empty() {
            "repeated and serial runs byte-identical for 4 configurations".into()
        } else {
            format!("differing CSV bytes: {}", mismatched.join(", "))
        },
    )
}

type Check = fn() -> Verdict;

fn main() -> ExitCode {
    let criteria: [(u32, &str, Check, Option<Duration>); 10] = [
        (
            1,
            "ridge oracle equivalence",
            ridge_oracle,
            Some(Duration::from_secs(10)),
        ),
        (
            2,
            "eigenvalue monotonicity",
            eigen_monotone,
            Some(Duration::from_secs(30)),
        ),
        (
            3,
            "coordination lemma",
            coordination_lemma,
            Some(Duration::from_secs(10)),
        ),
        (4, "LinUCB-A full coordination", linucb_a_coordination, None),
        (
            5,
            "√T scaling",
            sqrt_t_scaling,
            Some(Duration::from_secs(300)),
        ),
        (6, "algorithm ordering", algorithm_ordering, None),
        (7, "ETC structure", etc_structure, None),
        (8, "miscoordination decay", miscoordination_decay, None),
        (9, "adversarial failure", adversarial_failure, None),
        (10, "determinism", determinism, None),
    ];
    let selected: Vec<u32> = std::env::args()
        .skip(1)
        .filter_map(|a| a.parse().ok())
        .collect();

    let mut failed = 0;
    for (id, name, check, budget) in criteria {
        if !selected.is_empty() && !selected.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let mut v = check();
        let elapsed = start.elapsed();
        if let Some(limit) = budget {
            if elapsed > limit {
                v.pass = false;
                v.detail
                    .push_str(&format!("; exceeded {}s budget", limit.as_secs()));
            }
        }
        failed += usize::from(!v.pass);
        println!(
            "criterion {id:>2} {}: {name}: {} [{:.2}s]",
            if v.pass { "PASS" } else { "FAIL" },
            v.detail,
            elapsed.as_secs_f64()
        );
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} acceptance criteria failed");
        ExitCode::FAILURE
    }
}
