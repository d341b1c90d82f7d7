use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::MethodologyError;
use crate::agents::{ActMode, Agent};
use crate::env::{encode_action, EpisodeConfig, ScalingEnv};
use crate::rewards::RewardSpec;
use crate::sim::SimParams;
use crate::stats::Summary;
use crate::workload::WorkloadTrace;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValidationStep {
    pub step: usize,
    pub v: usize,
    pub c_bar: f64,
    pub d: f64,
    pub reward: f64,
}

/// One deterministic episode over the whole evaluation split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationRun {
    pub steps: Vec<ValidationStep>,
    pub accumulated_reward: f64,
    pub episode_length: usize,
    /// Length of the split, i.e. the episode length had the agent survived.
    pub full_length: usize,
    pub terminated: bool,
}

impl ValidationRun {
    pub fn terminated_early(&self) -> bool {
        self.terminated || self.episode_length < self.full_length
    }

    pub fn replica_stats(&self) -> Option<Summary> {
        Summary::of(&self.steps.iter().map(|s| s.v as f64).collect::<Vec<_>>())
    }

    pub fn latency_stats(&self) -> Option<Summary> {
        Summary::of(&self.steps.iter().map(|s| s.d).collect::<Vec<_>>())
    }
}

/// Environment whose single episode covers every slot after `train_len`.
///
/// The warm-up slot is the last training slot, so the episode has exactly
/// `trace.len() - train_len` steps. Returns the environment and its start slot.
pub fn validation_env(
    trace: Arc<WorkloadTrace>,
    params: SimParams,
    spec: RewardSpec,
    train_len: usize,
) -> Result<(ScalingEnv, usize), MethodologyError> {
    let len = trace.len();
    if train_len == 0 || train_len >= len {
        return Err(crate::env::EnvError::WindowOutOfRange { start: train_len, steps: 0, len }.into());
    }
    let episode = EpisodeConfig { max_steps: len - train_len, ..Default::default() };
    Ok((ScalingEnv::new(trace, params, spec, episode)?, train_len - 1))
}

pub fn validate_policy(agent: &mut dyn Agent, env: &mut ScalingEnv, start: usize) -> Result<ValidationRun, MethodologyError> {
    let full_length = env.episode_config().max_steps;
    let mut obs = env.reset(start)?;
    let mut steps = Vec::with_capacity(full_length);
    let mut accumulated_reward = 0.0;
    let terminated = loop {
        let out = env.step(encode_action(agent.act(&obs, ActMode::Deterministic))?)?;
        accumulated_reward += out.reward;
        steps.push(ValidationStep {
            step: steps.len() + 1,
            v: out.observation.v,
            c_bar: out.observation.c_bar,
            d: out.observation.d,
            reward: out.reward,
        });
        obs = out.observation;
        if out.done() {
            break out.terminated;
        }
    };
    Ok(ValidationRun { episode_length: steps.len(), steps, accumulated_reward, full_length, terminated })
}
