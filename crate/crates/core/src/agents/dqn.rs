//! Deep Q-network with experience replay and a periodically synced target.
//!
//! The online and target networks are separate `3 -> 64 -> 64 -> 3` MLPs. The
//! regression loss is the Huber loss on the TD error, averaged over the batch.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::checkpoint::Checkpoint;
use super::nn::{clip_grad_norm, Adam, Mlp};
use super::replay::ReplayBuffer;
use super::{argmax, ActMode, Agent, AgentError, Algorithm, LearnStats, ObsScaler, Transition, ACTION_COUNT};
use crate::env::{encode_action, Environment, Observation};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DqnHyperparams {
    pub gamma: f64,
    pub learning_rate: f64,
    pub hidden_layout: Vec<usize>,
    pub replay_capacity: usize,
    pub batch_size: usize,
    /// Counted in gradient updates.
    pub target_sync_interval: usize,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    pub epsilon_decay_steps: usize,
    /// Environment steps collected before the first update.
    pub learning_starts: usize,
    /// Environment steps between updates.
    pub train_freq: usize,
    pub max_grad_norm: f64,
    pub huber_delta: f64,
}

impl Default for DqnHyperparams {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            learning_rate: 1e-4,
            hidden_layout: vec![64, 64],
            replay_capacity: 50_000,
            batch_size: 64,
            target_sync_interval: 1000,
            epsilon_start: 1.0,
            epsilon_end: 0.05,
            epsilon_decay_steps: 50_000,
            learning_starts: 1000,
            train_freq: 4,
            max_grad_norm: 10.0,
            huber_delta: 1.0,
        }
    }
}

impl DqnHyperparams {
    pub fn validate(&self) -> Result<(), AgentError> {
        let bad = |m: &str| Err(AgentError::InvalidHyperparams(format!("dqn: {m}")));
        if !(0.0..=1.0).contains(&self.gamma) {
            return bad("gamma must lie in [0, 1]");
        }
        if !(self.learning_rate > 0.0) {
            return bad("learning_rate must be positive");
        }
        if self.hidden_layout.is_empty() || self.hidden_layout.contains(&0) {
            return bad("hidden_layout needs at least one non-empty layer");
        }
        if self.batch_size == 0 || self.replay_capacity < self.batch_size {
            return bad("replay_capacity must be at least batch_size > 0");
        }
        if self.target_sync_interval == 0 || self.train_freq == 0 {
            return bad("target_sync_interval and train_freq must be positive");
        }
        for e in [self.epsilon_start, self.epsilon_end] {
            if !(0.0..=1.0).contains(&e) {
                return bad("epsilon bounds must lie in [0, 1]");
            }
        }
        if !(self.huber_delta > 0.0) {
            return bad("huber_delta must be positive");
        }
        Ok(())
    }

    /// Linear decay from `epsilon_start` to `epsilon_end`, then constant.
    pub fn epsilon_at(&self, step: usize) -> f64 {
        if step >= self.epsilon_decay_steps {
            return self.epsilon_end;
        }
        let frac = step as f64 / self.epsilon_decay_steps as f64;
        self.epsilon_start + (self.epsilon_end - self.epsilon_start) * frac
    }

    fn layout(&self) -> Vec<usize> {
        let mut sizes = vec![3];
        sizes.extend(&self.hidden_layout);
        sizes.push(ACTION_COUNT);
        sizes
    }
}

/// Epsilon-greedy choice over `q`. One uniform draw decides whether to explore.
pub fn dqn_act<R: Rng + ?Sized>(q: &[f64], epsilon: f64, rng: &mut R) -> usize {
    if rng.random::<f64>() < epsilon {
        rng.random_range(0..q.len())
    } else {
        argmax(q)
    }
}

/// `y = r + gamma * max_a Q_target(s', a)`, or `r` at a terminal transition.
pub fn td_target(reward: f64, next_q_target: &[f64], terminated: bool, gamma: f64) -> f64 {
    if terminated {
        reward
    } else {
        reward + gamma * next_q_target.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

pub fn huber(err: f64, delta: f64) -> f64 {
    if err.abs() <= delta {
        0.5 * err * err
    } else {
        delta * (err.abs() - 0.5 * delta)
    }
}

fn huber_grad(err: f64, delta: f64) -> f64 {
    err.clamp(-delta, delta)
}

/// Mean Huber loss of the batch and its gradient with respect to `online`.
pub fn dqn_loss_and_grad(
    online: &Mlp,
    target: &Mlp,
    batch: &[Transition],
    gamma: f64,
    huber_delta: f64,
) -> (f64, Vec<f64>) {
    let mut grads = online.zero_grad();
    if batch.is_empty() {
        return (0.0, grads);
    }
    let scale = 1.0 / batch.len() as f64;
    let mut loss = 0.0;
    let mut grad_out = [0.0; ACTION_COUNT];
    for t in batch {
        let y = td_target(t.reward, &target.forward(&t.next_obs), t.terminated, gamma);
        let cache = online.forward_cached(&t.obs);
        let err = cache.output()[t.action_index] - y;
        loss += huber(err, huber_delta) * scale;
        grad_out.fill(0.0);
        grad_out[t.action_index] = huber_grad(err, huber_delta) * scale;
        online.backward(&cache, &grad_out, &mut grads);
    }
    (loss, grads)
}

pub struct DqnAgent {
    hp: DqnHyperparams,
    seed: u64,
    scaler: ObsScaler,
    online: Mlp,
    target: Mlp,
    optimizer: Adam,
    replay: ReplayBuffer,
    rng: ChaCha8Rng,
    env_steps: usize,
    updates: usize,
}

impl DqnAgent {
    pub fn new(hp: DqnHyperparams, seed: u64, scaler: ObsScaler) -> Result<Self, AgentError> {
        hp.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let online = Mlp::new(&hp.layout(), false, &mut rng);
        Ok(Self::assemble(hp, seed, scaler, online, rng))
    }

    fn assemble(hp: DqnHyperparams, seed: u64, scaler: ObsScaler, online: Mlp, rng: ChaCha8Rng) -> Self {
        Self {
            target: online.clone(),
            optimizer: Adam::new(online.param_count(), hp.learning_rate),
            replay: ReplayBuffer::new(hp.replay_capacity),
            online,
            hp,
            seed,
            scaler,
            rng,
            env_steps: 0,
            updates: 0,
        }
    }

    pub fn from_checkpoint(ck: &Checkpoint, scaler: ObsScaler) -> Result<Self, AgentError> {
        let hp: DqnHyperparams = ck.hyperparams_as()?;
        hp.validate()?;
        let seed: u64 = ck.meta("seed")?;
        let online = ck.net("online")?;
        if online.sizes() != hp.layout().as_slice() {
            return Err(AgentError::Checkpoint("online network does not match hidden_layout".into()));
        }
        let mut agent = Self::assemble(hp, seed, scaler, online, ChaCha8Rng::seed_from_u64(seed));
        agent.env_steps = ck.meta("env_steps").unwrap_or(0);
        Ok(agent)
    }

    pub fn hyperparams(&self) -> &DqnHyperparams {
        &self.hp
    }

    pub fn online(&self) -> &Mlp {
        &self.online
    }

    pub fn q_values(&self, obs: &Observation) -> Vec<f64> {
        self.online.forward(&self.scaler.scale(obs))
    }

    pub fn epsilon(&self) -> f64 {
        self.hp.epsilon_at(self.env_steps)
    }

    /// One gradient step on a replay sample. Returns the loss, or `None` while
    /// the buffer is empty.
    pub fn update(&mut self) -> Option<f64> {
        if self.replay.is_empty() {
            return None;
        }
        let batch = self.replay.sample(self.hp.batch_size, &mut self.rng);
        let (loss, mut grads) =
            dqn_loss_and_grad(&self.online, &self.target, &batch, self.hp.gamma, self.hp.huber_delta);
        clip_grad_norm(&mut grads, self.hp.max_grad_norm);
        self.optimizer.step(self.online.params_mut(), &grads);
        self.updates += 1;
        if self.updates % self.hp.target_sync_interval == 0 {
            self.target = self.online.clone();
        }
        Some(loss)
    }
}

impl Agent for DqnAgent {
    fn algorithm(&self) -> Algorithm {
        Algorithm::Dqn
    }

    fn act(&mut self, obs: &Observation, mode: ActMode) -> usize {
        let q = self.q_values(obs);
        match mode {
            ActMode::Deterministic => argmax(&q),
            ActMode::Explore => {
                let eps = self.epsilon();
                dqn_act(&q, eps, &mut self.rng)
            }
        }
    }

    fn learn(&mut self, env: &mut dyn Environment, episodes: usize) -> Result<LearnStats, AgentError> {
        let mut stats = LearnStats::default();
        let mut loss_sum = 0.0;
        for _ in 0..episodes {
            let mut obs = env.begin_episode()?;
            loop {
                let action_index = self.act(&obs, ActMode::Explore);
                let out = env.advance(encode_action(action_index)?)?;
                self.replay.push(Transition {
                    obs: self.scaler.scale(&obs),
                    action_index,
                    reward: out.reward,
                    next_obs: self.scaler.scale(&out.observation),
                    terminated: out.terminated,
                });
                self.env_steps += 1;
                stats.steps += 1;
                if self.env_steps >= self.hp.learning_starts && self.env_steps % self.hp.train_freq == 0 {
                    if let Some(loss) = self.update() {
                        loss_sum += loss;
                        stats.updates += 1;
                    }
                }
                obs = out.observation;
                if out.done() {
                    stats.terminated_episodes += usize::from(out.terminated);
                    break;
                }
            }
            stats.episodes += 1;
        }
        stats.mean_loss = if stats.updates > 0 { loss_sum / stats.updates as f64 } else { 0.0 };
        Ok(stats)
    }

    fn checkpoint(&self) -> Checkpoint {
        Checkpoint::new(Algorithm::Dqn.name())
            .with_hyperparams(&self.hp)
            .with_meta("seed", self.seed)
            .with_meta("env_steps", self.env_steps)
            .with_net("online", &self.online)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rewards::SlaSpec;
    use crate::sim::SimParams;

    fn scaler() -> ObsScaler {
        ObsScaler::new(&SimParams::default(), &SlaSpec::default())
    }

    #[test]
    fn td_target_examples() {
        assert!((td_target(1.0, &[1.0, 2.0, 3.0], false, 0.99) - 3.97).abs() < 1e-12);
        assert_eq!(td_target(-100.0, &[5.0, 9.0, 1.0], true, 0.99), -100.0);
        assert_eq!(td_target(0.25, &[5.0, 9.0, 1.0], false, 0.0), 0.25);
    }

    #[test]
    fn greedy_and_ties() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(dqn_act(&[0.1, 0.9, 0.2], 0.0, &mut rng), 1);
        assert_eq!(dqn_act(&[0.5, 0.5, 0.1], 0.0, &mut rng), 0);
    }

    #[test]
    fn full_exploration_is_uniform() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let n = 10_000;
        let mut counts = [0usize; 3];
        for _ in 0..n {
            counts[dqn_act(&[0.0, 10.0, 0.0], 1.0, &mut rng)] += 1;
        }
        let p = 1.0 / 3.0;
        let sigma = (n as f64 * p * (1.0 - p)).sqrt();
        for c in counts {
            assert!((c as f64 - n as f64 * p).abs() < 3.0 * sigma, "{counts:?}");
        }
    }

    #[test]
    fn argmax_ignores_positive_scaling() {
        let mut agent = DqnAgent::new(DqnHyperparams::default(), 4, scaler()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..50 {
            let obs = Observation { v: rng.random_range(1..=12), c_bar: rng.random_range(0.0..100.0), d: rng.random_range(0.0..0.2) };
            let q = agent.q_values(&obs);
            let scaled: Vec<f64> = q.iter().map(|x| x * 3.7).collect();
            assert_eq!(argmax(&scaled), agent.act(&obs, ActMode::Deterministic));
        }
    }

    #[test]
    fn epsilon_schedule() {
        let hp = DqnHyperparams::default();
        assert_eq!(hp.epsilon_at(0), 1.0);
        assert!((hp.epsilon_at(25_000) - 0.525).abs() < 1e-12);
        assert_eq!(hp.epsilon_at(50_000), 0.05);
        assert_eq!(hp.epsilon_at(90_000), 0.05);
    }

    #[test]
    fn empty_replay_update_is_a_noop() {
        let mut agent = DqnAgent::new(DqnHyperparams::default(), 4, scaler()).unwrap();
        let before = agent.online().clone();
        assert_eq!(agent.update(), None);
        assert_eq!(agent.online(), &before);
    }

    #[test]
    fn rejects_bad_hyperparams() {
        let hp = DqnHyperparams { replay_capacity: 10, batch_size: 64, ..Default::default() };
        assert!(DqnAgent::new(hp, 0, scaler()).is_err());
        let hp = DqnHyperparams { gamma: 1.5, ..Default::default() };
        assert!(hp.validate().is_err());
    }

    #[test]
    fn checkpoint_restores_greedy_policy() {
        let mut agent = DqnAgent::new(DqnHyperparams::default(), 8, scaler()).unwrap();
        let text = agent.checkpoint().to_text();
        let mut back = DqnAgent::from_checkpoint(&Checkpoint::from_text(&text).unwrap(), scaler()).unwrap();
        assert_eq!(back.online(), agent.online());
        let obs = Observation { v: 3, c_bar: 40.0, d: 0.01 };
        assert_eq!(back.act(&obs, ActMode::Deterministic), agent.act(&obs, ActMode::Deterministic));
    }
}
