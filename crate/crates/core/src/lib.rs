//! Multiplayer linear contextual bandits with information asymmetry.
//!
//! Players jointly pick one action each; the reward is linear in a feature
//! vector attached to the joint action. Three information models are
//! supported: shared rewards with hidden actions (problem A), private
//! rewards with observed actions (B) and private rewards with hidden
//! actions (C).

pub mod env;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod policies;

pub use env::{
    ContextSet, ContextSource, EnvConfig, Environment, FeedbackView, JointAction, Problem,
};
pub use error::{Error, Result};
pub use harness::{
    run_experiment, run_trial, Algo, Experiment, ExperimentConfig, RegretTrace, WidthSchedule,
};
pub use linalg::{beta_classic, BetaParams, DesignState};
pub use policies::{Etc, LinUcbA, LinUcbB, Policy};
