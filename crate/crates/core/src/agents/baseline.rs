//! Non-learning reference policies.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::checkpoint::Checkpoint;
use super::{ActMode, Agent, AgentError, Algorithm, LearnStats};
use crate::env::{decode_action, encode_action, Environment, Observation};
use crate::rewards::SlaSpec;
use crate::sim::Action;

/// Plays every episode to the end so training statistics stay comparable.
fn play(agent: &mut dyn Agent, env: &mut dyn Environment, episodes: usize) -> Result<LearnStats, AgentError> {
    let mut stats = LearnStats::default();
    for _ in 0..episodes {
        let mut obs = env.begin_episode()?;
        loop {
            let out = env.advance(encode_action(agent.act(&obs, ActMode::Explore))?)?;
            stats.steps += 1;
            obs = out.observation;
            if out.done() {
                stats.terminated_episodes += usize::from(out.terminated);
                break;
            }
        }
        stats.episodes += 1;
    }
    Ok(stats)
}

/// Uniform over the three actions in both modes.
#[derive(Debug, Clone)]
pub struct RandomAgent {
    seed: u64,
    rng: ChaCha8Rng,
}

impl RandomAgent {
    pub fn new(seed: u64) -> Self {
        Self { seed, rng: ChaCha8Rng::seed_from_u64(seed) }
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self, AgentError> {
        Ok(Self::new(ck.meta("seed")?))
    }
}

impl Agent for RandomAgent {
    fn algorithm(&self) -> Algorithm {
        Algorithm::Random
    }

    fn act(&mut self, _obs: &Observation, _mode: ActMode) -> usize {
        self.rng.random_range(0..3)
    }

    fn learn(&mut self, env: &mut dyn Environment, episodes: usize) -> Result<LearnStats, AgentError> {
        play(self, env, episodes)
    }

    fn checkpoint(&self) -> Checkpoint {
        Checkpoint::new(Algorithm::Random.name()).with_meta("seed", self.seed)
    }
}

/// Adds above `c_tgt (1 + epsilon)` percent CPU, removes below `c_tgt (1 - epsilon)`.
#[derive(Debug, Clone, Copy)]
pub struct ThresholdAgent {
    upper: f64,
    lower: f64,
}

impl ThresholdAgent {
    pub fn new(sla: SlaSpec) -> Self {
        Self { upper: sla.c_tgt * (1.0 + sla.epsilon), lower: sla.c_tgt * (1.0 - sla.epsilon) }
    }

    pub fn decide(&self, c_bar: f64) -> Action {
        if c_bar > self.upper {
            Action::Add
        } else if c_bar < self.lower {
            Action::Remove
        } else {
            Action::Maintain
        }
    }
}

impl Agent for ThresholdAgent {
    fn algorithm(&self) -> Algorithm {
        Algorithm::Threshold
    }

    fn act(&mut self, obs: &Observation, _mode: ActMode) -> usize {
        decode_action(self.decide(obs.c_bar))
    }

    fn learn(&mut self, env: &mut dyn Environment, episodes: usize) -> Result<LearnStats, AgentError> {
        play(self, env, episodes)
    }

    fn checkpoint(&self) -> Checkpoint {
        Checkpoint::new(Algorithm::Threshold.name())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn threshold_examples() {
        let t = ThresholdAgent::new(SlaSpec::default());
        assert_eq!(t.decide(95.0), Action::Add);
        assert_eq!(t.decide(75.0), Action::Maintain);
        assert_eq!(t.decide(50.0), Action::Remove);
        assert_eq!(t.decide(90.0), Action::Maintain);
        assert_eq!(t.decide(60.0), Action::Maintain);
    }

    #[test]
    fn random_is_seeded_and_restorable() {
        let obs = Observation { v: 2, c_bar: 0.0, d: 0.0 };
        let mut a = RandomAgent::new(9);
        let mut b = RandomAgent::from_checkpoint(&a.checkpoint()).unwrap();
        for _ in 0..100 {
            let x = a.act(&obs, ActMode::Deterministic);
            assert!(x < 3);
            assert_eq!(x, b.act(&obs, ActMode::Deterministic));
        }
    }
}
