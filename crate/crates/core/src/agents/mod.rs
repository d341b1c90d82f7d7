//! Scaling policies: DQN and PPO learners plus two non-learning baselines.
//!
//! Agents see the environment through [`Environment`] and emit categorical
//! action indices (0 remove, 1 maintain, 2 add). Networks consume the
//! observation scaled by [`ObsScaler`].

pub mod baseline;
pub mod checkpoint;
pub mod dqn;
pub mod nn;
pub mod ppo;
pub mod replay;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::{EnvError, Environment, Observation};
use crate::rewards::SlaSpec;
use crate::sim::SimParams;

pub use baseline::{RandomAgent, ThresholdAgent};
pub use checkpoint::Checkpoint;
pub use dqn::{DqnAgent, DqnHyperparams};
pub use ppo::{PpoAgent, PpoHyperparams};

pub const ACTION_COUNT: usize = 3;

#[derive(Debug, Error)]
pub enum AgentError {
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error("sequence lengths differ: {0}")]
    LengthMismatch(String),
    #[error("invalid hyperparameters: {0}")]
    InvalidHyperparams(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("unknown algorithm `{0}`")]
    UnknownAlgorithm(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Dqn,
    Ppo,
    Random,
    Threshold,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Dqn => "dqn",
            Algorithm::Ppo => "ppo",
            Algorithm::Random => "random",
            Algorithm::Threshold => "threshold",
        }
    }

    pub fn is_learner(self) -> bool {
        matches!(self, Algorithm::Dqn | Algorithm::Ppo)
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = AgentError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "dqn" => Ok(Algorithm::Dqn),
            "ppo" => Ok(Algorithm::Ppo),
            "random" => Ok(Algorithm::Random),
            "threshold" => Ok(Algorithm::Threshold),
            other => Err(AgentError::UnknownAlgorithm(other.to_string())),
        }
    }
}

/// Whether a policy may explore.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActMode {
    Explore,
    Deterministic,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObsScaler {
    pub max_replicas: f64,
    pub d_terminate: f64,
}

impl ObsScaler {
    pub fn new(params: &SimParams, sla: &SlaSpec) -> Self {
        Self { max_replicas: params.max_replicas_cap as f64, d_terminate: sla.d_terminate }
    }

    /// Same mapping as [`crate::env::normalize_observation`].
    pub fn scale(&self, obs: &Observation) -> [f64; 3] {
        [
            obs.v as f64 / self.max_replicas,
            obs.c_bar / 100.0,
            obs.d.min(self.d_terminate) / self.d_terminate,
        ]
    }
}

/// One environment interaction in network coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    pub obs: [f64; 3],
    pub action_index: usize,
    pub reward: f64,
    pub next_obs: [f64; 3],
    pub terminated: bool,
}

impl Transition {
    pub fn is_finite(&self) -> bool {
        self.obs.iter().chain(&self.next_obs).all(|x| x.is_finite()) && self.reward.is_finite()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LearnStats {
    pub episodes: usize,
    pub steps: usize,
    pub terminated_episodes: usize,
    pub updates: usize,
    pub mean_loss: f64,
}

pub trait Agent: Send {
    fn algorithm(&self) -> Algorithm;

    fn act(&mut self, obs: &Observation, mode: ActMode) -> usize;

    /// Runs `episodes` full training episodes, updating the policy as it goes.
    fn learn(&mut self, env: &mut dyn Environment, episodes: usize) -> Result<LearnStats, AgentError>;

    fn checkpoint(&self) -> Checkpoint;
}

/// Index of the largest value; the lowest index wins ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Builds the agent stored in `checkpoint`.
pub fn restore(checkpoint: &Checkpoint, scaler: ObsScaler, sla: SlaSpec) -> Result<Box<dyn Agent>, AgentError> {
    let algorithm: Algorithm = checkpoint.algorithm.parse()?;
    Ok(match algorithm {
        Algorithm::Dqn => Box::new(DqnAgent::from_checkpoint(checkpoint, scaler)?),
        Algorithm::Ppo => Box::new(PpoAgent::from_checkpoint(checkpoint, scaler)?),
        Algorithm::Random => Box::new(RandomAgent::from_checkpoint(checkpoint)?),
        Algorithm::Threshold => Box::new(ThresholdAgent::new(sla)),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn argmax_breaks_ties_low() {
        assert_eq!(argmax(&[0.1, 0.9, 0.2]), 1);
        assert_eq!(argmax(&[0.5, 0.5, 0.1]), 0);
        assert_eq!(argmax(&[0.1, 0.5, 0.5]), 1);
    }

    #[test]
    fn scaler_matches_env_normalization() {
        let params = SimParams::default();
        let sla = SlaSpec::default();
        let scaler = ObsScaler::new(&params, &sla);
        let obs = Observation { v: 7, c_bar: 33.0, d: 0.2 };
        assert_eq!(scaler.scale(&obs), crate::env::normalize_observation(&obs, &params, &sla));
    }

    #[test]
    fn algorithm_names() {
        for a in [Algorithm::Dqn, Algorithm::Ppo, Algorithm::Random, Algorithm::Threshold] {
            assert_eq!(a.name().parse::<Algorithm>().unwrap(), a);
        }
        assert!("a2c".parse::<Algorithm>().is_err());
    }
}
