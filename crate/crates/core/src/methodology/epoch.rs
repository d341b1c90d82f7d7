use serde::{Deserialize, Serialize};

use super::MethodologyError;
use crate::agents::{ActMode, Agent};
use crate::env::{encode_action, EpisodeRunner, Environment, ScalingEnv, StartPolicy};
use crate::rewards::normalize_return;

/// N training episodes and V evaluation episodes per epoch, E epochs, one
/// agent per seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Schedule {
    pub train_episodes: usize,
    pub eval_episodes: usize,
    pub epochs: usize,
    pub seeds: Vec<u64>,
}

impl Default for Schedule {
    fn default() -> Self {
        Self { train_episodes: 24, eval_episodes: 12, epochs: 10, seeds: vec![1, 2, 3, 4, 5] }
    }
}

impl Schedule {
    pub fn validate(&self) -> Result<(), MethodologyError> {
        let bad = |m: &str| Err(MethodologyError::InvalidSchedule(m.to_string()));
        if self.train_episodes == 0 || self.eval_episodes == 0 || self.epochs == 0 {
            return bad("train_episodes, eval_episodes and epochs must be at least 1");
        }
        if self.seeds.is_empty() {
            return bad("at least one seed is required");
        }
        let mut sorted = self.seeds.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return bad("seeds must be distinct");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 0 is the evaluation before any training.
    pub epoch: usize,
    /// Mean normalized return over the evaluation episodes.
    pub mean_return: f64,
    pub episodes_terminated: usize,
    pub eval_returns: Vec<f64>,
    pub train_steps: usize,
}

/// Plays `episodes` deterministic episodes back to back from the start of
/// `env`'s trace and returns each one's normalized return.
pub fn evaluate(agent: &mut dyn Agent, env: &ScalingEnv, episodes: usize) -> Result<(Vec<f64>, usize), MethodologyError> {
    let mut runner = EpisodeRunner::new(env.clone(), StartPolicy::sequential());
    let spec = *env.reward_spec();
    let len = env.episode_config().max_steps;
    let mut returns = Vec::with_capacity(episodes);
    let mut terminated = 0;
    for _ in 0..episodes {
        let mut obs = runner.begin_episode()?;
        let mut total = 0.0;
        loop {
            let out = runner.advance(encode_action(agent.act(&obs, ActMode::Deterministic))?)?;
            total += out.reward;
            obs = out.observation;
            if out.done() {
                terminated += usize::from(out.terminated);
                break;
            }
        }
        returns.push(normalize_return(total, &spec, len)?);
    }
    Ok((returns, terminated))
}

/// Trains for `schedule.train_episodes` episodes (skipped for epoch 0), then
/// freezes the policy and evaluates it.
pub fn run_epoch(
    agent: &mut dyn Agent,
    train: &mut dyn Environment,
    eval_env: &ScalingEnv,
    schedule: &Schedule,
    epoch: usize,
) -> Result<EpochRecord, MethodologyError> {
    let train_steps = if epoch > 0 { agent.learn(train, schedule.train_episodes)?.steps } else { 0 };
    let (eval_returns, episodes_terminated) = evaluate(agent, eval_env, schedule.eval_episodes)?;
    Ok(EpochRecord {
        epoch,
        mean_return: crate::stats::mean(&eval_returns),
        episodes_terminated,
        eval_returns,
        train_steps,
    })
}

/// Epochs 0 through `schedule.epochs`. Training starts are drawn uniformly
/// from `train_env`'s trace with a stream seeded by `start_seed`.
pub fn run_epochs(
    agent: &mut dyn Agent,
    train_env: ScalingEnv,
    start_seed: u64,
    eval_env: &ScalingEnv,
    schedule: &Schedule,
) -> Result<Vec<EpochRecord>, MethodologyError> {
    schedule.validate()?;
    let mut runner = EpisodeRunner::new(train_env, StartPolicy::uniform(start_seed));
    (0..=schedule.epochs).map(|epoch| run_epoch(agent, &mut runner, eval_env, schedule, epoch)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::{RandomAgent, ThresholdAgent};
    use crate::env::EpisodeConfig;
    use crate::rewards::{RewardKind, RewardSpec, SlaSpec};
    use crate::sim::SimParams;
    use crate::workload::WorkloadTrace;
    use std::sync::Arc;

    fn env(kind: RewardKind, level: u32) -> ScalingEnv {
        let trace = Arc::new(WorkloadTrace::new((0..2000).map(|i| level + (i % 5) as u32).collect()));
        ScalingEnv::new(
            trace,
            SimParams::default(),
            RewardSpec::new(kind, SlaSpec::default()),
            EpisodeConfig { max_steps: 200, ..Default::default() },
        )
        .unwrap()
    }

    fn tiny() -> Schedule {
        Schedule { train_episodes: 2, eval_episodes: 2, epochs: 2, seeds: vec![1] }
    }

    #[test]
    fn schedule_validation() {
        assert!(Schedule::default().validate().is_ok());
        assert!(Schedule { seeds: vec![1, 1], ..Default::default() }.validate().is_err());
        assert!(Schedule { epochs: 0, ..Default::default() }.validate().is_err());
    }

    #[test]
    fn epoch_zero_evaluates_without_training() {
        let e = env(RewardKind::Rfn2, 10);
        let mut agent = RandomAgent::new(3);
        let records = run_epochs(&mut agent, e.clone(), 9, &e, &tiny()).unwrap();
        assert_eq!(records.len(), 3);
        assert_eq!(records[0].epoch, 0);
        assert_eq!(records[0].train_steps, 0);
        assert!(records[1].train_steps > 0);
        for r in &records {
            assert_eq!(r.eval_returns.len(), 2);
        }
    }

    #[test]
    fn random_rfn2_performance_in_unit_range() {
        let trace = Arc::new(WorkloadTrace::new(vec![10; 2000]));
        let spec = RewardSpec::new(RewardKind::Rfn2, SlaSpec::default());
        let e = ScalingEnv::new(trace, SimParams::default(), spec, EpisodeConfig { max_steps: 20, ..Default::default() })
            .unwrap();
        let mut agent = RandomAgent::new(5);
        let records = run_epochs(&mut agent, e.clone(), 1, &e, &tiny()).unwrap();
        for r in &records {
            assert_eq!(r.episodes_terminated, 0);
            assert!((0.0..=1.0).contains(&r.mean_return), "{}", r.mean_return);
        }
    }

    #[test]
    fn identical_seeds_identical_records() {
        let e = env(RewardKind::Rfn1, 12);
        let run = || run_epochs(&mut RandomAgent::new(4), e.clone(), 2, &e, &tiny()).unwrap();
        assert_eq!(run(), run());
    }

    #[test]
    fn threshold_never_terminates_on_light_load() {
        let e = env(RewardKind::Rfn1, 8);
        let mut agent = ThresholdAgent::new(SlaSpec::default());
        let (returns, terminated) = evaluate(&mut agent, &e, 3).unwrap();
        assert_eq!(terminated, 0);
        assert_eq!(returns.len(), 3);
    }
}
