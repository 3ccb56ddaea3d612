//! The three multiplayer learners.
//!
//! Each learner holds one [`PlayerState`] per player and drives a round in
//! two steps: [`Policy::select`] computes every player's intended joint
//! action from its own state alone, and [`Policy::observe`] hands each player
//! exactly the [`FeedbackView`] its problem allows.
//!
//! * [`LinUcbA`]: shared reward, hidden actions. Players run identical
//!   arithmetic on identical state and break ties by rank, so each one can
//!   infer the joint action it never sees.
//! * [`LinUcbB`]: private rewards, observed actions. `V` stays in lockstep,
//!   each `b` absorbs only its owner's reward; `λ = √T` keeps estimates close.
//! * [`Etc`]: private rewards, hidden actions. Forced pulls of the rank-0
//!   joint action for `⌈T^α⌉` rounds, then index play with frozen state.

use crate::env::{ContextSet, FeedbackView, JointAction};
use crate::error::{Error, Result};
use crate::linalg::{beta_classic, dot, BetaParams, DesignState};

/// Per-round confidence width `√β_t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Width {
    /// Classical schedule evaluated at the number of updates so far.
    Classic(BetaParams),
    /// Fixed `√β` for every round.
    Constant(f64),
}

impl Width {
    pub fn sqrt_beta(&self, updates: u64) -> f64 {
        match self {
            Width::Classic(params) => beta_classic(params, updates),
            Width::Constant(w) => *w,
        }
    }

    /// `√β_T = T^(1/4)`, i.e. `β_T = √T`.
    pub fn sqrt_t(horizon: usize) -> Self {
        Width::Constant((horizon as f64).sqrt().sqrt())
    }

    /// Classical schedule with `m₂ = 1`, `δ = 1/T` and context bound `L`.
    pub fn classic(
        lambda: f64,
        dim: usize,
        horizon: usize,
        context_norm_bound: f64,
    ) -> Result<Self> {
        let delta = 1.0 / (horizon.max(2) as f64);
        Ok(Width::Classic(BetaParams::new(
            lambda,
            1.0,
            delta,
            dim,
            context_norm_bound,
        )?))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlayerState {
    pub player_index: usize,
    pub design: DesignState,
    pub theta_hat: Vec<f64>,
    pub sqrt_beta: f64,
}

impl PlayerState {
    pub fn new(player_index: usize, dim: usize, lambda: f64) -> Result<Self> {
        Ok(Self {
            player_index,
            design: DesignState::new(dim, lambda)?,
            theta_hat: vec![0.0; dim],
            sqrt_beta: 0.0,
        })
    }

    pub fn refresh_theta(&mut self) {
        self.theta_hat = self.design.solve_theta();
    }

    /// UCB index of every joint action, in rank order.
    pub fn indices(&self, contexts: &ContextSet, sqrt_beta: f64) -> Vec<f64> {
        contexts
            .iter()
            .map(|x| {
                self.design
                    .ucb_index_unchecked(&self.theta_hat, x, sqrt_beta)
            })
            .collect()
    }

    /// Lowest-ranked maximizer of this player's indices.
    pub fn intent(&self, contexts: &ContextSet, sqrt_beta: f64) -> Result<JointAction> {
        select_argmax_ordered(
            &self.indices(contexts, sqrt_beta),
            contexts.num_players(),
            contexts.num_actions(),
        )
    }
}

/// Every player's intent for one round and what was actually played.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectionRecord {
    pub intended: Vec<JointAction>,
    /// Player `i` pulls component `i` of its own intent.
    pub realized: JointAction,
    pub coordinated: bool,
}

impl SelectionRecord {
    pub fn from_intents(intended: Vec<JointAction>) -> Self {
        let realized = JointAction::from_components(
            intended
                .iter()
                .enumerate()
                .map(|(i, a)| a.actions()[i])
                .collect(),
        );
        let coordinated = intended.windows(2).all(|w| w[0] == w[1]);
        Self {
            intended,
            realized,
            coordinated,
        }
    }
}

/// Joint action of minimal rank among the exact maximizers of `indices`.
///
/// Scans in rank order and keeps the first strict maximum.
pub fn select_argmax_ordered(
    indices: &[f64],
    num_players: usize,
    num_actions: usize,
) -> Result<JointAction> {
    if indices.is_empty() {
        return Err(Error::invalid("cannot select from an empty index vector"));
    }
    let mut best_rank = 0;
    let mut best = f64::NEG_INFINITY;
    for (rank, &p) in indices.iter().enumerate() {
        if !p.is_finite() {
            return Err(Error::invalid(format!("index {rank} is not finite: {p}")));
        }
        if p > best {
            best = p;
            best_rank = rank;
        }
    }
    Ok(JointAction::from_rank(best_rank, num_players, num_actions))
}

fn intents(
    players: &[PlayerState],
    contexts: &ContextSet,
    sqrt_beta: f64,
) -> Result<Vec<JointAction>> {
    players
        .iter()
        .map(|p| p.intent(contexts, sqrt_beta))
        .collect()
}

/// Selection step of LinUCB-A. Every player must land on the same joint
/// action; anything else means the arithmetic was not reproducible.
pub fn linucb_a_round(
    players: &mut [PlayerState],
    contexts: &ContextSet,
    sqrt_beta: f64,
    round: usize,
) -> Result<SelectionRecord> {
    for p in players.iter_mut() {
        p.sqrt_beta = sqrt_beta;
    }
    let record = SelectionRecord::from_intents(intents(players, contexts, sqrt_beta)?);
    if !record.coordinated {
        return Err(Error::Coordination {
            round,
            intents: record
                .intended
                .iter()
                .map(|a| a.rank_unchecked(contexts.num_actions()))
                .collect(),
        });
    }
    Ok(record)
}

/// Update step of LinUCB-A: each player credits the shared reward to the
/// joint action it inferred (its own intent).
pub fn linucb_a_update(
    players: &mut [PlayerState],
    contexts: &ContextSet,
    own_intents: &[JointAction],
    feedback: &[FeedbackView],
) -> Result<()> {
    for ((p, intent), view) in players.iter_mut().zip(own_intents).zip(feedback) {
        let r = view
            .shared_reward
            .ok_or_else(|| Error::Contract("LinUCB-A requires the shared reward".into()))?;
        p.design.update_unchecked(contexts.of(intent), r);
        p.refresh_theta();
    }
    Ok(())
}

/// Selection step of LinUCB-B: each player maximizes its own indices;
/// intents may disagree.
pub fn linucb_b_round(
    players: &mut [PlayerState],
    contexts: &ContextSet,
    sqrt_beta: f64,
) -> Result<SelectionRecord> {
    for p in players.iter_mut() {
        p.sqrt_beta = sqrt_beta;
    }
    Ok(SelectionRecord::from_intents(intents(
        players, contexts, sqrt_beta,
    )?))
}

/// Update step of LinUCB-B: `V` with the observed joint action, `bⁱ` with
/// the private reward.
pub fn linucb_b_update(
    players: &mut [PlayerState],
    contexts: &ContextSet,
    feedback: &[FeedbackView],
) -> Result<()> {
    for (p, view) in players.iter_mut().zip(feedback) {
        let observed = view
            .observed_joint_action
            .as_ref()
            .ok_or_else(|| Error::Contract("LinUCB-B requires the observed joint action".into()))?;
        let x = contexts.of(observed);
        p.design.update_design_only(x);
        p.design.accumulate_response(x, view.own_reward);
        p.refresh_theta();
    }
    Ok(())
}

/// A multiplayer learner driven one round at a time.
pub trait Policy {
    fn select(&mut self, round: usize, contexts: &ContextSet) -> Result<SelectionRecord>;

    /// Feeds back one view per player, in player order.
    fn observe(
        &mut self,
        round: usize,
        contexts: &ContextSet,
        feedback: &[FeedbackView],
    ) -> Result<()>;

    fn players(&self) -> &[PlayerState];
}

fn make_players(num_players: usize, dim: usize, lambda: f64) -> Result<Vec<PlayerState>> {
    if num_players == 0 {
        return Err(Error::invalid("need at least one player"));
    }
    (0..num_players)
        .map(|i| PlayerState::new(i, dim, lambda))
        .collect()
}

#[derive(Debug, Clone)]
pub struct LinUcbA {
    players: Vec<PlayerState>,
    width: Width,
    last_intents: Vec<JointAction>,
}

impl LinUcbA {
    pub fn new(num_players: usize, dim: usize, lambda: f64, width: Width) -> Result<Self> {
        Ok(Self {
            players: make_players(num_players, dim, lambda)?,
            width,
            last_intents: Vec::new(),
        })
    }

    /// `λ = 1` and the classical schedule with `δ = 1/T`, `L = √d`.
    pub fn with_defaults(num_players: usize, dim: usize, horizon: usize) -> Result<Self> {
        let width = Width::classic(1.0, dim, horizon, (dim as f64).sqrt())?;
        Self::new(num_players, dim, 1.0, width)
    }
}

impl Policy for LinUcbA {
    fn select(&mut self, round: usize, contexts: &ContextSet) -> Result<SelectionRecord> {
        let sqrt_beta = self.width.sqrt_beta(self.players[0].design.update_count());
        let record = linucb_a_round(&mut self.players, contexts, sqrt_beta, round)?;
        self.last_intents.clone_from(&record.intended);
        Ok(record)
    }

    fn observe(
        &mut self,
        _round: usize,
        contexts: &ContextSet,
        feedback: &[FeedbackView],
    ) -> Result<()> {
        linucb_a_update(&mut self.players, contexts, &self.last_intents, feedback)
    }

    fn players(&self) -> &[PlayerState] {
        &self.players
    }
}

#[derive(Debug, Clone)]
pub struct LinUcbB {
    players: Vec<PlayerState>,
    width: Width,
}

impl LinUcbB {
    pub fn new(num_players: usize, dim: usize, lambda: f64, width: Width) -> Result<Self> {
        Ok(Self {
            players: make_players(num_players, dim, lambda)?,
            width,
        })
    }

    /// `λ = √T`, `√β_T = T^(1/4)`.
    pub fn with_defaults(num_players: usize, dim: usize, horizon: usize) -> Result<Self> {
        Self::new(
            num_players,
            dim,
            (horizon as f64).sqrt(),
            Width::sqrt_t(horizon),
        )
    }
}

impl Policy for LinUcbB {
    fn select(&mut self, _round: usize, contexts: &ContextSet) -> Result<SelectionRecord> {
        let sqrt_beta = self.width.sqrt_beta(self.players[0].design.update_count());
        linucb_b_round(&mut self.players, contexts, sqrt_beta)
    }

    fn observe(
        &mut self,
        _round: usize,
        contexts: &ContextSet,
        feedback: &[FeedbackView],
    ) -> Result<()> {
        linucb_b_update(&mut self.players, contexts, feedback)
    }

    fn players(&self) -> &[PlayerState] {
        &self.players
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EtcPhase {
    Explore,
    Commit,
}

/// `⌈T^α⌉`, computed exactly for `α = 1/2`.
pub fn exploration_rounds(horizon: usize, alpha: f64) -> Result<usize> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::invalid(format!(
            "alpha must lie in (0, 1), got {alpha}"
        )));
    }
    if horizon < 4 {
        return Err(Error::invalid(format!(
            "ETC needs a horizon of at least 4 rounds, got {horizon}"
        )));
    }
    let n = if alpha == 0.5 {
        let mut r = (horizon as f64).sqrt() as usize;
        while r * r < horizon {
            r += 1;
        }
        while r > 0 && (r - 1) * (r - 1) >= horizon {
            r -= 1;
        }
        r
    } else {
        (horizon as f64).powf(alpha).ceil() as usize
    };
    if n >= horizon {
        return Err(Error::invalid(
            "ETC exploration would consume the whole horizon",
        ));
    }
    Ok(n)
}

/// Explore-then-commit. Never reads the observed joint action, so it runs
/// unchanged on Problems B and C.
#[derive(Debug, Clone)]
pub struct Etc {
    players: Vec<PlayerState>,
    sqrt_beta: f64,
    exploration_rounds: usize,
    phase: EtcPhase,
    num_players: usize,
    num_actions: usize,
}

impl Etc {
    pub fn new(
        num_players: usize,
        num_actions: usize,
        dim: usize,
        horizon: usize,
        alpha: f64,
        lambda: f64,
        sqrt_beta: f64,
    ) -> Result<Self> {
        let exploration_rounds = exploration_rounds(horizon, alpha)?;
        if sqrt_beta.is_nan() || sqrt_beta < 0.0 {
            return Err(Error::invalid("confidence width must be nonnegative"));
        }
        Ok(Self {
            players: make_players(num_players, dim, lambda)?,
            sqrt_beta,
            exploration_rounds,
            phase: EtcPhase::Explore,
            num_players,
            num_actions,
        })
    }

    /// `λ = T^α`, `√β_T = T^(1/4)`.
    pub fn with_defaults(
        num_players: usize,
        num_actions: usize,
        dim: usize,
        horizon: usize,
        alpha: f64,
    ) -> Result<Self> {
        let lambda = (horizon as f64).powf(alpha);
        let Width::Constant(w) = Width::sqrt_t(horizon) else {
            unreachable!()
        };
        Self::new(num_players, num_actions, dim, horizon, alpha, lambda, w)
    }

    pub fn phase(&self) -> EtcPhase {
        self.phase
    }

    pub fn exploration_rounds(&self) -> usize {
        self.exploration_rounds
    }

    /// The frozen per-player designs once committed.
    pub fn frozen_designs(&self) -> Option<Vec<&DesignState>> {
        (self.phase == EtcPhase::Commit).then(|| self.players.iter().map(|p| &p.design).collect())
    }
}

impl Policy for Etc {
    fn select(&mut self, _round: usize, contexts: &ContextSet) -> Result<SelectionRecord> {
        match self.phase {
            EtcPhase::Explore => {
                let fixed = JointAction::from_rank(0, self.num_players, self.num_actions);
                Ok(SelectionRecord::from_intents(vec![fixed; self.num_players]))
            }
            EtcPhase::Commit => {
                for p in self.players.iter_mut() {
                    p.sqrt_beta = self.sqrt_beta;
                }
                Ok(SelectionRecord::from_intents(intents(
                    &self.players,
                    contexts,
                    self.sqrt_beta,
                )?))
            }
        }
    }

    fn observe(
        &mut self,
        round: usize,
        contexts: &ContextSet,
        feedback: &[FeedbackView],
    ) -> Result<()> {
        if self.phase == EtcPhase::Commit {
            return Ok(());
        }
        let x = contexts.get(0);
        for (p, view) in self.players.iter_mut().zip(feedback) {
            p.design.update_unchecked(x, view.own_reward);
        }
        if round >= self.exploration_rounds {
            for p in self.players.iter_mut() {
                p.refresh_theta();
            }
            self.phase = EtcPhase::Commit;
        }
        Ok(())
    }

    fn players(&self) -> &[PlayerState] {
        &self.players
    }
}

/// Radius and gap threshold of the coordination lemma: if every estimate
/// lies within `β_T/λ` of `θ*` and two contexts are separated under `θ*` by
/// more than `2 β_T L / λ`, every player ranks them the same way.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoordinationLemma {
    pub sqrt_beta: f64,
    pub lambda: f64,
    pub context_norm_bound: f64,
}

impl CoordinationLemma {
    pub fn radius(&self) -> f64 {
        self.sqrt_beta * self.sqrt_beta / self.lambda
    }

    pub fn gap_threshold(&self) -> f64 {
        2.0 * self.radius() * self.context_norm_bound
    }

    pub fn in_ball(&self, theta: &[f64], theta_star: &[f64]) -> bool {
        let d2: f64 = theta
            .iter()
            .zip(theta_star)
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        d2.sqrt() <= self.radius()
    }

    pub fn gap_condition(&self, theta_star: &[f64], x: &[f64], x_prime: &[f64]) -> bool {
        dot(theta_star, x) - dot(theta_star, x_prime) > self.gap_threshold()
    }
}

/// True iff every estimate scores `x` strictly above `x_prime`.
pub fn coordination_gap_holds(theta_estimates: &[Vec<f64>], x: &[f64], x_prime: &[f64]) -> bool {
    theta_estimates
        .iter()
        .all(|th| dot(th, x) > dot(th, x_prime))
}
