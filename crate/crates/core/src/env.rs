//! Bandit environment: the hidden parameter, per-round contexts over the
//! joint-action space, Gaussian rewards, and the per-problem feedback rules.
//!
//! Joint actions are indexed by their base-K rank with player 0 as the most
//! significant digit. Every container indexed by joint action (contexts,
//! per-arm noise levels, index vectors) uses that rank as its position.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::dot;

/// Upper limit on `K^m`; every policy enumerates the joint-action space.
pub const MAX_JOINT_ACTIONS: usize = 1_000_000;

/// Which information the players are denied.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Problem {
    /// Shared reward, hidden co-player actions.
    A,
    /// Private i.i.d. rewards, observed co-player actions.
    B,
    /// Private i.i.d. rewards, hidden co-player actions.
    C,
}

impl Problem {
    pub fn as_str(self) -> &'static str {
        match self {
            Problem::A => "A",
            Problem::B => "B",
            Problem::C => "C",
        }
    }
}

impl std::fmt::Display for Problem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Problem {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "A" | "a" => Ok(Problem::A),
            "B" | "b" => Ok(Problem::B),
            "C" | "c" => Ok(Problem::C),
            other => Err(Error::invalid(format!("unknown problem {other:?}"))),
        }
    }
}

/// One action index per player.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct JointAction(Vec<usize>);

impl JointAction {
    pub fn new(actions: Vec<usize>, num_actions: usize) -> Result<Self> {
        if actions.is_empty() {
            return Err(Error::invalid("joint action needs at least one player"));
        }
        if let Some(&bad) = actions.iter().find(|&&a| a >= num_actions) {
            return Err(Error::invalid(format!(
                "action {bad} out of range for K = {num_actions}"
            )));
        }
        Ok(Self(actions))
    }

    /// Inverse of [`joint_action_rank`].
    pub fn from_rank(rank: usize, num_players: usize, num_actions: usize) -> Self {
        let mut actions = vec![0; num_players];
        let mut rest = rank;
        for slot in actions.iter_mut().rev() {
            *slot = rest % num_actions;
            rest /= num_actions;
        }
        debug_assert_eq!(rest, 0, "rank {rank} exceeds K^m");
        Self(actions)
    }

    pub(crate) fn from_components(actions: Vec<usize>) -> Self {
        Self(actions)
    }

    pub fn actions(&self) -> &[usize] {
        &self.0
    }

    pub fn num_players(&self) -> usize {
        self.0.len()
    }

    pub(crate) fn rank_unchecked(&self, num_actions: usize) -> usize {
        self.0.iter().fold(0, |acc, &a| acc * num_actions + a)
    }
}

/// Base-K rank `N_a = Σ a_i K^(m−1−i)`; defines the shared total order on
/// joint actions used for tie-breaking.
pub fn joint_action_rank(a: &JointAction, num_actions: usize) -> Result<usize> {
    if let Some(&bad) = a.0.iter().find(|&&x| x >= num_actions) {
        return Err(Error::invalid(format!(
            "action {bad} out of range for K = {num_actions}"
        )));
    }
    Ok(a.rank_unchecked(num_actions))
}

/// `K^m`, or a configuration error past [`MAX_JOINT_ACTIONS`].
pub fn joint_action_count(num_players: usize, num_actions: usize) -> Result<usize> {
    if num_players == 0 || num_actions == 0 {
        return Err(Error::config("player and action counts must be positive"));
    }
    let mut n: usize = 1;
    for _ in 0..num_players {
        n = n
            .checked_mul(num_actions)
            .filter(|&n| n <= MAX_JOINT_ACTIONS)
            .ok_or_else(|| {
                Error::config(format!(
                    "K^m = {num_actions}^{num_players} exceeds the cap of {MAX_JOINT_ACTIONS}"
                ))
            })?;
    }
    Ok(n)
}

/// How per-round contexts are produced.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum ContextSource {
    /// I.i.d. Uniform[0, 1/√d] coordinates, fresh every round.
    #[default]
    Uniform,
    /// The 2×2 coordination-failure construction; see [`adversarial_contexts`].
    Adversarial { gap: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvConfig {
    pub num_players: usize,
    pub num_actions: usize,
    pub dim: usize,
    pub context_norm_bound: f64,
    /// Gaussian standard deviation per joint action, indexed by rank.
    pub noise_sigma: Vec<f64>,
    pub problem: Problem,
    pub seed: u64,
    pub contexts: ContextSource,
}

impl EnvConfig {
    /// Config with `L = √d` and every per-arm sigma left at zero. Use
    /// [`Environment::new`] to draw sigmas, or set them explicitly.
    pub fn new(
        num_players: usize,
        num_actions: usize,
        dim: usize,
        problem: Problem,
        seed: u64,
    ) -> Result<Self> {
        let n = joint_action_count(num_players, num_actions)?;
        if dim == 0 {
            return Err(Error::config("dimension must be at least 1"));
        }
        Ok(Self {
            num_players,
            num_actions,
            dim,
            context_norm_bound: (dim as f64).sqrt(),
            noise_sigma: vec![0.0; n],
            problem,
            seed,
            contexts: ContextSource::Uniform,
        })
    }

    pub fn joint_actions(&self) -> usize {
        self.noise_sigma.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = joint_action_count(self.num_players, self.num_actions)?;
        if self.dim == 0 {
            return Err(Error::config("dimension must be at least 1"));
        }
        if self.noise_sigma.len() != n {
            return Err(Error::config(format!(
                "expected {n} noise levels, got {}",
                self.noise_sigma.len()
            )));
        }
        if self.noise_sigma.iter().any(|s| !(0.0..=1.0).contains(s)) {
            return Err(Error::config("noise sigmas must lie in [0, 1]"));
        }
        if self.context_norm_bound.is_nan() || self.context_norm_bound <= 0.0 {
            return Err(Error::config("context norm bound must be positive"));
        }
        if let ContextSource::Adversarial { gap } = self.contexts {
            if self.num_players != 2 || self.num_actions != 2 {
                return Err(Error::config(
                    "adversarial contexts require m = 2 and K = 2",
                ));
            }
            if !(gap.is_finite() && gap > 0.0) {
                return Err(Error::config("adversarial gap must be positive"));
            }
        }
        Ok(())
    }
}

/// The `K^m` context vectors revealed in one round, indexed by rank.
#[derive(Debug, Clone, PartialEq)]
pub struct ContextSet {
    num_players: usize,
    num_actions: usize,
    dim: usize,
    data: Vec<f64>,
}

impl ContextSet {
    pub fn from_vectors(
        num_players: usize,
        num_actions: usize,
        vectors: &[Vec<f64>],
    ) -> Result<Self> {
        let n = joint_action_count(num_players, num_actions)?;
        if vectors.len() != n {
            return Err(Error::invalid(format!(
                "expected {n} context vectors, got {}",
                vectors.len()
            )));
        }
        let dim = vectors[0].len();
        if dim == 0 || vectors.iter().any(|v| v.len() != dim) {
            return Err(Error::invalid(
                "context vectors must share a positive length",
            ));
        }
        Ok(Self {
            num_players,
            num_actions,
            dim,
            data: vectors.concat(),
        })
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_players(&self) -> usize {
        self.num_players
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    /// Context of the joint action with the given rank.
    pub fn get(&self, rank: usize) -> &[f64] {
        &self.data[rank * self.dim..(rank + 1) * self.dim]
    }

    pub fn of(&self, action: &JointAction) -> &[f64] {
        self.get(action.rank_unchecked(self.num_actions))
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim)
    }
}

/// Coordinates i.i.d. Uniform[0, 1/√d], so `‖θ*‖₂ ≤ 1`.
pub fn sample_theta_star<R: Rng + ?Sized>(rng: &mut R, dim: usize) -> Vec<f64> {
    let edge = 1.0 / (dim as f64).sqrt();
    (0..dim).map(|_| rng.gen::<f64>() * edge).collect()
}

/// Fresh uniform-cube contexts for every joint action.
pub fn sample_contexts<R: Rng + ?Sized>(rng: &mut R, config: &EnvConfig) -> ContextSet {
    let n = config.joint_actions();
    let edge = 1.0 / (config.dim as f64).sqrt();
    let data = (0..n * config.dim)
        .map(|_| rng.gen::<f64>() * edge)
        .collect();
    ContextSet {
        num_players: config.num_players,
        num_actions: config.num_actions,
        dim: config.dim,
        data,
    }
}

/// Two-player, two-action contexts on which independent learners with
/// private rewards fail to coordinate.
///
/// Joint actions (0,0) and (1,1) get `v` and `v′` with
/// `⟨v, θ*⟩ − ⟨v′, θ*⟩ = gap`; the off-diagonal actions get the zero vector.
/// `v′` is a per-round point of the cube `[0, 1/(2√d)]^d` derived from
/// `round` alone, and `v = v′ + (gap/θ*_j) e_j` along the largest
/// coordinate `j` of `θ*`.
pub fn adversarial_contexts(round: usize, gap: f64, theta_star: &[f64]) -> Result<ContextSet> {
    let dim = theta_star.len();
    if dim == 0 {
        return Err(Error::invalid("theta_star must be nonempty"));
    }
    if !(gap.is_finite() && gap > 0.0) {
        return Err(Error::invalid(format!("gap must be positive, got {gap}")));
    }
    let (j, &tj) = theta_star
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
        .expect("nonempty");
    if tj == 0.0 {
        return Err(Error::invalid("theta_star must be nonzero"));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(mix64(0xad5e_7a11_u64 ^ round as u64));
    let edge = 0.5 / (dim as f64).sqrt();
    let v_prime: Vec<f64> = (0..dim).map(|_| rng.gen::<f64>() * edge).collect();
    let mut v = v_prime.clone();
    v[j] += gap / tj;

    let zero = vec![0.0; dim];
    ContextSet::from_vectors(2, 2, &[v, zero.clone(), zero, v_prime])
}

/// Same as [`adversarial_contexts`] but checks the player/action counts.
pub fn adversarial_contexts_for(
    config: &EnvConfig,
    round: usize,
    gap: f64,
    theta_star: &[f64],
) -> Result<ContextSet> {
    if config.num_players != 2 || config.num_actions != 2 {
        return Err(Error::invalid(
            "adversarial contexts require m = 2 and K = 2",
        ));
    }
    adversarial_contexts(round, gap, theta_star)
}

/// Reward draws for one pull: one shared draw replicated `m` times under
/// Problem A, `m` independent draws otherwise.
pub fn draw_rewards<R: Rng + ?Sized>(
    rng: &mut R,
    config: &EnvConfig,
    x: &[f64],
    theta_star: &[f64],
    arm_rank: usize,
) -> Vec<f64> {
    let mean = dot(x, theta_star);
    let sigma = config.noise_sigma[arm_rank];
    let normal = Normal::new(mean, sigma).expect("sigma validated to lie in [0, 1]");
    match config.problem {
        Problem::A => vec![normal.sample(rng); config.num_players],
        Problem::B | Problem::C => (0..config.num_players)
            .map(|_| normal.sample(rng))
            .collect(),
    }
}

/// Best joint action and its mean reward; exact ties go to the lowest rank.
pub fn best_action(contexts: &ContextSet, theta_star: &[f64]) -> (JointAction, f64) {
    let (rank, value) = best_rank(contexts, theta_star);
    (
        JointAction::from_rank(rank, contexts.num_players, contexts.num_actions),
        value,
    )
}

pub(crate) fn best_rank(contexts: &ContextSet, theta_star: &[f64]) -> (usize, f64) {
    let mut best = (0, f64::NEG_INFINITY);
    for (rank, x) in contexts.iter().enumerate() {
        let value = dot(x, theta_star);
        if value > best.1 {
            best = (rank, value);
        }
    }
    best
}

/// What a single player is allowed to observe after a pull.
#[derive(Debug, Clone, PartialEq)]
pub struct FeedbackView {
    pub own_reward: f64,
    pub shared_reward: Option<f64>,
    pub observed_joint_action: Option<JointAction>,
}

/// Builds the per-player views permitted by `problem`.
pub fn make_feedback(problem: Problem, rewards: &[f64], action: &JointAction) -> Vec<FeedbackView> {
    rewards
        .iter()
        .map(|&r| match problem {
            Problem::A => FeedbackView {
                own_reward: r,
                shared_reward: Some(r),
                observed_joint_action: None,
            },
            Problem::B => FeedbackView {
                own_reward: r,
                shared_reward: None,
                observed_joint_action: Some(action.clone()),
            },
            Problem::C => FeedbackView {
                own_reward: r,
                shared_reward: None,
                observed_joint_action: None,
            },
        })
        .collect()
}

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// A seeded environment instance: draws `θ*` and the per-arm noise levels
/// at construction, then serves contexts and rewards round by round.
#[derive(Debug, Clone)]
pub struct Environment {
    config: EnvConfig,
    theta_star: Vec<f64>,
    rng: ChaCha8Rng,
}

impl Environment {
    /// Draws `θ*` and one sigma per joint action from `config.seed`,
    /// overwriting `config.noise_sigma`.
    pub fn new(mut config: EnvConfig) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let theta_star = sample_theta_star(&mut rng, config.dim);
        for s in config.noise_sigma.iter_mut() {
            *s = rng.gen::<f64>();
        }
        Self::with_parts(config, theta_star, rng)
    }

    /// Uses the given `θ*` and keeps `config.noise_sigma` as provided.
    pub fn with_theta(config: EnvConfig, theta_star: Vec<f64>) -> Result<Self> {
        let rng = ChaCha8Rng::seed_from_u64(config.seed);
        Self::with_parts(config, theta_star, rng)
    }

    fn with_parts(config: EnvConfig, theta_star: Vec<f64>, rng: ChaCha8Rng) -> Result<Self> {
        config.validate()?;
        if theta_star.len() != config.dim {
            return Err(Error::invalid("theta_star length must equal the dimension"));
        }
        Ok(Self {
            config,
            theta_star,
            rng,
        })
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn theta_star(&self) -> &[f64] {
        &self.theta_star
    }

    /// Contexts for round `round` (1-based).
    pub fn contexts(&mut self, round: usize) -> ContextSet {
        match self.config.contexts {
            ContextSource::Uniform => sample_contexts(&mut self.rng, &self.config),
            ContextSource::Adversarial { gap } => {
                adversarial_contexts(round, gap, &self.theta_star)
                    .expect("adversarial configuration validated at construction")
            }
        }
    }

    /// Rewards for pulling `action` and the views each player receives.
    pub fn pull(&mut self, contexts: &ContextSet, action: &JointAction) -> Vec<FeedbackView> {
        let rank = action.rank_unchecked(self.config.num_actions);
        let rewards = draw_rewards(
            &mut self.rng,
            &self.config,
            contexts.get(rank),
            &self.theta_star,
            rank,
        );
        make_feedback(self.config.problem, &rewards, action)
    }
}
