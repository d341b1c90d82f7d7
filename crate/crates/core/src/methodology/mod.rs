//! Train, validate and select: epochs, learning curves, scores and the
//! model-selection filter.

mod curves;
mod epoch;
mod scores;
mod select;
mod validation;

pub use curves::{learning_curves, AlgorithmCurve, CurvePoint, LearningCurves};
pub use epoch::{evaluate, run_epoch, run_epochs, EpochRecord, Schedule};
pub use scores::{learning_score, networking_score, score_reports, NetworkingInputs, ScoreReport};
pub use select::{select, SelectionConfig, Verdict, VerdictKind};
pub use validation::{validate_policy, validation_env, ValidationRun, ValidationStep};

use thiserror::Error;

use crate::agents::AgentError;
use crate::env::EnvError;
use crate::rewards::RewardError;
use crate::stats::StatsError;

#[derive(Debug, Error)]
pub enum MethodologyError {
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Reward(#[from] RewardError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),
    #[error("learning curves disagree on epoch count: {0}")]
    EpochMismatch(String),
}

/// Mean of the last three values, or of all of them when there are fewer.
pub fn plateau(performance: &[f64]) -> f64 {
    let tail = &performance[performance.len().saturating_sub(3)..];
    crate::stats::mean(tail)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plateau_uses_last_three() {
        assert!((plateau(&[0.0, 0.1, 0.6, 0.7, 0.8]) - 0.7).abs() < 1e-12);
        assert_eq!(plateau(&[0.4, 0.6]), 0.5);
        assert!(plateau(&[]).is_nan());
    }
}
