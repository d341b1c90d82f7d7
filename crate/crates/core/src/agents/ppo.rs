//! Proximal policy optimization with a shared actor-critic trunk.
//!
//! The trunk is `3 -> 64 -> 64` with tanh on both layers; a linear policy head
//! produces three logits and a linear value head one scalar. The minimized
//! per-sample loss is
//!
//! ```text
//! -min(r A, clip(r, 1 - c, 1 + c) A) + value_coef (V - R)^2 - entropy_coef H
//! ```
//!
//! averaged over a minibatch, with `r = pi(a|s) / pi_old(a|s)`.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::checkpoint::Checkpoint;
use super::nn::{clip_grad_norm, Adam, ForwardCache, Mlp};
use super::{argmax, ActMode, Agent, AgentError, Algorithm, LearnStats, ObsScaler, ACTION_COUNT};
use crate::env::{encode_action, Environment, Observation, StepOutcome};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PpoHyperparams {
    pub gamma: f64,
    pub learning_rate: f64,
    pub hidden_layout: Vec<usize>,
    pub rollout_length: usize,
    pub update_epochs: usize,
    pub minibatch_size: usize,
    pub clip_ratio: f64,
    pub gae_lambda: f64,
    pub value_coef: f64,
    pub entropy_coef: f64,
    pub max_grad_norm: f64,
}

impl Default for PpoHyperparams {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            learning_rate: 3e-4,
            hidden_layout: vec![64, 64],
            rollout_length: 2048,
            update_epochs: 10,
            minibatch_size: 64,
            clip_ratio: 0.2,
            gae_lambda: 0.95,
            value_coef: 0.5,
            entropy_coef: 0.0,
            max_grad_norm: 0.5,
        }
    }
}

impl PpoHyperparams {
    pub fn validate(&self) -> Result<(), AgentError> {
        let bad = |m: &str| Err(AgentError::InvalidHyperparams(format!("ppo: {m}")));
        if !(0.0..=1.0).contains(&self.gamma) || !(0.0..=1.0).contains(&self.gae_lambda) {
            return bad("gamma and gae_lambda must lie in [0, 1]");
        }
        if !(self.learning_rate > 0.0) {
            return bad("learning_rate must be positive");
        }
        if !(self.clip_ratio > 0.0) {
            return bad("clip_ratio must be positive");
        }
        if self.hidden_layout.is_empty() || self.hidden_layout.contains(&0) {
            return bad("hidden_layout needs at least one non-empty layer");
        }
        if self.rollout_length == 0 || self.update_epochs == 0 || self.minibatch_size == 0 {
            return bad("rollout_length, update_epochs and minibatch_size must be positive");
        }
        if self.value_coef < 0.0 || self.entropy_coef < 0.0 {
            return bad("loss coefficients must be non-negative");
        }
        Ok(())
    }

    fn trunk_layout(&self) -> Vec<usize> {
        let mut sizes = vec![3];
        sizes.extend(&self.hidden_layout);
        sizes
    }
}

/// Generalized advantage estimates.
///
/// `values` holds one more entry than `rewards`: the value of the state after
/// the last step (ignored when that step is terminal).
pub fn gae(rewards: &[f64], values: &[f64], terminals: &[bool], gamma: f64, lambda: f64) -> Result<Vec<f64>, AgentError> {
    if values.len() != rewards.len() + 1 || terminals.len() != rewards.len() {
        return Err(AgentError::LengthMismatch(format!(
            "{} rewards, {} values, {} terminal flags",
            rewards.len(),
            values.len(),
            terminals.len()
        )));
    }
    let mut adv = vec![0.0; rewards.len()];
    let mut running = 0.0;
    for t in (0..rewards.len()).rev() {
        let mask = if terminals[t] { 0.0 } else { 1.0 };
        let delta = rewards[t] + gamma * values[t + 1] * mask - values[t];
        running = delta + gamma * lambda * mask * running;
        adv[t] = running;
    }
    Ok(adv)
}

/// `min(r A, clip(r, 1 - c, 1 + c) A)`.
pub fn clipped_surrogate(ratio: f64, advantage: f64, clip: f64) -> f64 {
    (ratio * advantage).min(ratio.clamp(1.0 - clip, 1.0 + clip) * advantage)
}

fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
    logits.iter().map(|z| z - lse).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActorCritic {
    pub trunk: Mlp,
    pub policy: Mlp,
    pub value: Mlp,
}

struct AcCache {
    trunk: ForwardCache,
    policy: ForwardCache,
    value: ForwardCache,
}

impl ActorCritic {
    pub fn new<R: Rng + ?Sized>(trunk_layout: &[usize], rng: &mut R) -> Self {
        let width = *trunk_layout.last().unwrap();
        Self {
            trunk: Mlp::new(trunk_layout, true, rng),
            policy: Mlp::new(&[width, ACTION_COUNT], false, rng),
            value: Mlp::new(&[width, 1], false, rng),
        }
    }

    pub fn param_count(&self) -> usize {
        self.trunk.param_count() + self.policy.param_count() + self.value.param_count()
    }

    /// Log-probabilities of the three actions and the state value.
    pub fn evaluate(&self, obs: &[f64; 3]) -> (Vec<f64>, f64) {
        let h = self.trunk.forward(obs);
        (log_softmax(&self.policy.forward(&h)), self.value.forward(&h)[0])
    }

    fn forward_cached(&self, obs: &[f64; 3]) -> AcCache {
        let trunk = self.trunk.forward_cached(obs);
        let policy = self.policy.forward_cached(trunk.output());
        let value = self.value.forward_cached(trunk.output());
        AcCache { trunk, policy, value }
    }

    /// Flat parameter view: trunk, then policy head, then value head.
    pub fn flat_params(&self) -> Vec<f64> {
        [self.trunk.params(), self.policy.params(), self.value.params()].concat()
    }

    pub fn set_flat_params(&mut self, flat: &[f64]) {
        let (a, rest) = flat.split_at(self.trunk.param_count());
        let (b, c) = rest.split_at(self.policy.param_count());
        self.trunk.params_mut().copy_from_slice(a);
        self.policy.params_mut().copy_from_slice(b);
        self.value.params_mut().copy_from_slice(c);
    }
}

/// One sample of a PPO minibatch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PpoSample {
    pub obs: [f64; 3],
    pub action: usize,
    pub old_logp: f64,
    pub advantage: f64,
    pub ret: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PpoLoss {
    pub total: f64,
    pub policy: f64,
    pub value: f64,
    pub entropy: f64,
}

/// Minibatch loss and its gradient in the layout of [`ActorCritic::flat_params`].
/// Advantages are used as given.
pub fn ppo_loss_and_grad(ac: &ActorCritic, batch: &[PpoSample], hp: &PpoHyperparams) -> (PpoLoss, Vec<f64>) {
    let mut g_trunk = ac.trunk.zero_grad();
    let mut g_policy = ac.policy.zero_grad();
    let mut g_value = ac.value.zero_grad();
    let mut loss = PpoLoss::default();
    if batch.is_empty() {
        return (loss, [g_trunk, g_policy, g_value].concat());
    }
    let scale = 1.0 / batch.len() as f64;
    for s in batch {
        let cache = ac.forward_cached(&s.obs);
        let logp = log_softmax(cache.policy.output());
        let probs: Vec<f64> = logp.iter().map(|l| l.exp()).collect();
        let v = cache.value.output()[0];

        let ratio = (logp[s.action] - s.old_logp).exp();
        let surrogate = clipped_surrogate(ratio, s.advantage, hp.clip_ratio);
        let entropy = -probs.iter().zip(&logp).map(|(p, l)| p * l).sum::<f64>();
        let verr = v - s.ret;

        loss.policy -= surrogate * scale;
        loss.value += verr * verr * scale;
        loss.entropy += entropy * scale;

        // d surrogate / d ratio is A on the unclipped branch and 0 on the clipped one.
        let unclipped = ratio * s.advantage <= ratio.clamp(1.0 - hp.clip_ratio, 1.0 + hp.clip_ratio) * s.advantage;
        let d_ratio = if unclipped { -s.advantage } else { 0.0 };
        let grad_logits: Vec<f64> = (0..ACTION_COUNT)
            .map(|j| {
                let onehot = if j == s.action { 1.0 } else { 0.0 };
                let policy_term = d_ratio * ratio * (onehot - probs[j]);
                let entropy_term = hp.entropy_coef * probs[j] * (logp[j] + entropy);
                (policy_term + entropy_term) * scale
            })
            .collect();
        let grad_v = [2.0 * hp.value_coef * verr * scale];

        let mut grad_h = ac.policy.backward(&cache.policy, &grad_logits, &mut g_policy);
        let from_value = ac.value.backward(&cache.value, &grad_v, &mut g_value);
        for (a, b) in grad_h.iter_mut().zip(from_value) {
            *a += b;
        }
        ac.trunk.backward(&cache.trunk, &grad_h, &mut g_trunk);
    }
    loss.total = loss.policy + hp.value_coef * loss.value - hp.entropy_coef * loss.entropy;
    (loss, [g_trunk, g_policy, g_value].concat())
}

/// Steps gathered for one update. `terminals[t]` marks the end of an episode
/// (termination or truncation) after step `t`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Rollout {
    pub obs: Vec<[f64; 3]>,
    pub actions: Vec<usize>,
    pub logps: Vec<f64>,
    pub values: Vec<f64>,
    pub rewards: Vec<f64>,
    pub terminals: Vec<bool>,
}

impl Rollout {
    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    fn clear(&mut self) {
        *self = Rollout::default();
    }
}

fn normalize(xs: &mut [f64]) {
    if xs.len() < 2 {
        return;
    }
    let m = crate::stats::mean(xs);
    let sd = crate::stats::variance(xs).sqrt();
    for x in xs.iter_mut() {
        *x = (*x - m) / (sd + 1e-8);
    }
}

pub struct PpoAgent {
    hp: PpoHyperparams,
    seed: u64,
    scaler: ObsScaler,
    net: ActorCritic,
    optimizer: Adam,
    rng: ChaCha8Rng,
    buffer: Rollout,
    current: Option<Observation>,
}

impl PpoAgent {
    pub fn new(hp: PpoHyperparams, seed: u64, scaler: ObsScaler) -> Result<Self, AgentError> {
        hp.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let net = ActorCritic::new(&hp.trunk_layout(), &mut rng);
        Ok(Self::assemble(hp, seed, scaler, net, rng))
    }

    fn assemble(hp: PpoHyperparams, seed: u64, scaler: ObsScaler, net: ActorCritic, rng: ChaCha8Rng) -> Self {
        Self {
            optimizer: Adam::new(net.param_count(), hp.learning_rate).with_epsilon(1e-5),
            hp,
            seed,
            scaler,
            net,
            rng,
            buffer: Rollout::default(),
            current: None,
        }
    }

    pub fn from_checkpoint(ck: &Checkpoint, scaler: ObsScaler) -> Result<Self, AgentError> {
        let hp: PpoHyperparams = ck.hyperparams_as()?;
        hp.validate()?;
        let seed: u64 = ck.meta("seed")?;
        let net = ActorCritic { trunk: ck.net("trunk")?, policy: ck.net("policy")?, value: ck.net("value")? };
        let width = *hp.hidden_layout.last().unwrap();
        if net.trunk.sizes() != hp.trunk_layout().as_slice()
            || net.policy.sizes() != [width, ACTION_COUNT]
            || net.value.sizes() != [width, 1]
        {
            return Err(AgentError::Checkpoint("actor-critic tensors do not match hidden_layout".into()));
        }
        Ok(Self::assemble(hp, seed, scaler, net, ChaCha8Rng::seed_from_u64(seed)))
    }

    pub fn hyperparams(&self) -> &PpoHyperparams {
        &self.hp
    }

    pub fn network(&self) -> &ActorCritic {
        &self.net
    }

    pub fn action_probabilities(&self, obs: &Observation) -> Vec<f64> {
        self.net.evaluate(&self.scaler.scale(obs)).0.iter().map(|l| l.exp()).collect()
    }

    fn sample(&mut self, logp: &[f64]) -> usize {
        let u: f64 = self.rng.random();
        let mut acc = 0.0;
        for (i, l) in logp.iter().enumerate() {
            acc += l.exp();
            if u < acc {
                return i;
            }
        }
        logp.len() - 1
    }

    /// Takes one environment step into `rollout`, starting an episode first if
    /// none is running.
    fn step_into(&mut self, env: &mut dyn Environment, rollout: &mut Rollout) -> Result<StepOutcome, AgentError> {
        let obs = match self.current {
            Some(o) => o,
            None => env.begin_episode()?,
        };
        let x = self.scaler.scale(&obs);
        let (logp, value) = self.net.evaluate(&x);
        let action = self.sample(&logp);
        let out = env.advance(encode_action(action)?)?;
        let mut reward = out.reward;
        if out.truncated {
            // The episode was cut by the step budget, not by the dynamics.
            reward += self.hp.gamma * self.net.evaluate(&self.scaler.scale(&out.observation)).1;
        }
        rollout.obs.push(x);
        rollout.actions.push(action);
        rollout.logps.push(logp[action]);
        rollout.values.push(value);
        rollout.rewards.push(reward);
        rollout.terminals.push(out.done());
        self.current = if out.done() { None } else { Some(out.observation) };
        Ok(out)
    }

    /// Exactly `steps` interactions, chaining episodes as needed.
    pub fn collect(&mut self, env: &mut dyn Environment, steps: usize) -> Result<Rollout, AgentError> {
        let mut rollout = Rollout::default();
        for _ in 0..steps {
            self.step_into(env, &mut rollout)?;
        }
        Ok(rollout)
    }

    fn bootstrap_value(&self) -> f64 {
        self.current.map_or(0.0, |o| self.net.evaluate(&self.scaler.scale(&o)).1)
    }

    /// Runs `update_epochs` passes of shuffled minibatches over `rollout`.
    pub fn update(&mut self, rollout: &Rollout, bootstrap: f64) -> Result<PpoLoss, AgentError> {
        if rollout.is_empty() {
            return Ok(PpoLoss::default());
        }
        let mut values = rollout.values.clone();
        values.push(bootstrap);
        let adv = gae(&rollout.rewards, &values, &rollout.terminals, self.hp.gamma, self.hp.gae_lambda)?;
        let samples: Vec<PpoSample> = (0..rollout.len())
            .map(|t| PpoSample {
                obs: rollout.obs[t],
                action: rollout.actions[t],
                old_logp: rollout.logps[t],
                advantage: adv[t],
                ret: adv[t] + rollout.values[t],
            })
            .collect();

        let mut order: Vec<usize> = (0..samples.len()).collect();
        let mut sum = PpoLoss::default();
        let mut batches = 0usize;
        for _ in 0..self.hp.update_epochs {
            order.shuffle(&mut self.rng);
            for chunk in order.chunks(self.hp.minibatch_size) {
                let mut batch: Vec<PpoSample> = chunk.iter().map(|&i| samples[i]).collect();
                let mut advs: Vec<f64> = batch.iter().map(|s| s.advantage).collect();
                normalize(&mut advs);
                for (s, a) in batch.iter_mut().zip(advs) {
                    s.advantage = a;
                }
                let (loss, mut grads) = ppo_loss_and_grad(&self.net, &batch, &self.hp);
                clip_grad_norm(&mut grads, self.hp.max_grad_norm);
                let mut flat = self.net.flat_params();
                self.optimizer.step(&mut flat, &grads);
                self.net.set_flat_params(&flat);
                sum.total += loss.total;
                sum.policy += loss.policy;
                sum.value += loss.value;
                sum.entropy += loss.entropy;
                batches += 1;
            }
        }
        let n = batches.max(1) as f64;
        Ok(PpoLoss { total: sum.total / n, policy: sum.policy / n, value: sum.value / n, entropy: sum.entropy / n })
    }
}

impl Agent for PpoAgent {
    fn algorithm(&self) -> Algorithm {
        Algorithm::Ppo
    }

    fn act(&mut self, obs: &Observation, mode: ActMode) -> usize {
        let (logp, _) = self.net.evaluate(&self.scaler.scale(obs));
        match mode {
            ActMode::Deterministic => argmax(&logp),
            ActMode::Explore => self.sample(&logp),
        }
    }

    /// Partial rollouts carry over between calls; each call ends on an
    /// episode boundary.
    fn learn(&mut self, env: &mut dyn Environment, episodes: usize) -> Result<LearnStats, AgentError> {
        let mut stats = LearnStats::default();
        let mut loss_sum = 0.0;
        let mut buffer = std::mem::take(&mut self.buffer);
        while stats.episodes < episodes {
            let out = self.step_into(env, &mut buffer)?;
            stats.steps += 1;
            if out.done() {
                stats.episodes += 1;
                stats.terminated_episodes += usize::from(out.terminated);
            }
            if buffer.len() >= self.hp.rollout_length {
                let loss = self.update(&buffer, self.bootstrap_value())?;
                loss_sum += loss.total;
                stats.updates += 1;
                buffer.clear();
            }
        }
        self.buffer = buffer;
        stats.mean_loss = if stats.updates > 0 { loss_sum / stats.updates as f64 } else { 0.0 };
        Ok(stats)
    }

    fn checkpoint(&self) -> Checkpoint {
        Checkpoint::new(Algorithm::Ppo.name())
            .with_hyperparams(&self.hp)
            .with_meta("seed", self.seed)
            .with_net("trunk", &self.net.trunk)
            .with_net("policy", &self.net.policy)
            .with_net("value", &self.net.value)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::EnvError;
    use crate::rewards::SlaSpec;
    use crate::sim::{Action, SimParams};
    use std::collections::BTreeMap;

    fn scaler() -> ObsScaler {
        ObsScaler::new(&SimParams::default(), &SlaSpec::default())
    }

    #[test]
    fn gae_examples() {
        let adv = gae(&[1.0, 1.0], &[0.5, 0.5, 0.0], &[false, false], 0.9, 0.8).unwrap();
        assert!((adv[1] - 0.5).abs() < 1e-12);
        assert!((adv[0] - 1.31).abs() < 1e-12);

        let r = [1.0, -2.0, 3.0];
        let v = [0.3, 0.1, -0.4, 0.2];
        let one_step = gae(&r, &v, &[false; 3], 0.9, 0.0).unwrap();
        for t in 0..3 {
            assert_eq!(one_step[t], r[t] + 0.9 * v[t + 1] - v[t]);
        }

        let suffix = gae(&r, &[0.0; 4], &[false; 3], 1.0, 1.0).unwrap();
        assert_eq!(suffix, vec![2.0, 1.0, 3.0]);

        assert!(matches!(gae(&r, &v[..3], &[false; 3], 0.9, 0.9), Err(AgentError::LengthMismatch(_))));
    }

    #[test]
    fn gae_stops_at_terminals() {
        let adv = gae(&[1.0, 1.0], &[0.0, 5.0, 5.0], &[true, false], 1.0, 1.0).unwrap();
        assert_eq!(adv[0], 1.0);
    }

    #[test]
    fn surrogate_examples() {
        assert!((clipped_surrogate(1.5, 1.0, 0.2) - 1.2).abs() < 1e-12);
        assert!((clipped_surrogate(0.5, -1.0, 0.2) + 0.8).abs() < 1e-12);
        for a in [-2.0, 0.3, 4.0] {
            assert_eq!(clipped_surrogate(1.0, a, 0.2), a);
        }
    }

    #[test]
    fn probabilities_sum_to_one() {
        let agent = PpoAgent::new(PpoHyperparams::default(), 5, scaler()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let obs = Observation { v: rng.random_range(1..=12), c_bar: rng.random_range(0.0..100.0), d: rng.random_range(0.0..0.3) };
            let p = agent.action_probabilities(&obs);
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-6);
        }
    }

    /// Terminates after five steps.
    struct FiveStep {
        t: usize,
    }

    impl Environment for FiveStep {
        fn begin_episode(&mut self) -> Result<Observation, EnvError> {
            self.t = 0;
            Ok(Observation { v: 2, c_bar: 10.0, d: 0.0 })
        }

        fn advance(&mut self, _action: Action) -> Result<StepOutcome, EnvError> {
            self.t += 1;
            Ok(StepOutcome {
                observation: Observation { v: 2, c_bar: 10.0 * self.t as f64, d: 0.001 },
                reward: 1.0,
                terminated: self.t == 5,
                truncated: false,
                info: BTreeMap::new(),
            })
        }
    }

    #[test]
    fn collect_marks_terminal_step() {
        let mut agent = PpoAgent::new(PpoHyperparams::default(), 3, scaler()).unwrap();
        let rollout = agent.collect(&mut FiveStep { t: 0 }, 8).unwrap();
        assert_eq!(rollout.len(), 8);
        let flags: Vec<usize> = (0..8).filter(|&i| rollout.terminals[i]).collect();
        assert_eq!(flags, vec![4]);
    }

    #[test]
    fn collection_is_seeded() {
        let run = || PpoAgent::new(PpoHyperparams::default(), 3, scaler()).unwrap().collect(&mut FiveStep { t: 0 }, 20).unwrap();
        assert_eq!(run(), run());
    }

    #[test]
    fn update_moves_parameters_and_checkpoint_round_trips() {
        let hp = PpoHyperparams { rollout_length: 16, minibatch_size: 8, update_epochs: 2, ..Default::default() };
        let mut agent = PpoAgent::new(hp, 3, scaler()).unwrap();
        let before = agent.network().clone();
        let stats = agent.learn(&mut FiveStep { t: 0 }, 8).unwrap();
        assert_eq!(stats.episodes, 8);
        assert_eq!(stats.steps, 40);
        assert_eq!(stats.updates, 2);
        assert_ne!(agent.network(), &before);

        let back = PpoAgent::from_checkpoint(&agent.checkpoint(), scaler()).unwrap();
        assert_eq!(back.network(), agent.network());
    }
}
