//! Episodic scaling environment over a workload trace.
//!
//! `reset(start)` deploys the initial pool and processes slot `start` as a
//! warm-up; step `k` then processes slot `start + k`. A window therefore needs
//! `start + max_steps <= len - 1`.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rewards::{step_reward, RewardError, RewardSpec, SlaSpec};
use crate::sim::{apply_scaling, step_slot, Action, QueueState, ReplicaPool, SimError, SimParams};
use crate::workload::WorkloadTrace;

pub const TERMINATION_PENALTY: f64 = -100.0;
pub const DEFAULT_MAX_STEPS: usize = 3600;

#[derive(Debug, Error, PartialEq)]
pub enum EnvError {
    #[error("episode window [{start}, {start} + {steps}] does not fit a trace of {len} slots")]
    WindowOutOfRange { start: usize, steps: usize, len: usize },
    #[error("episode already ended; call reset first")]
    EpisodeOver,
    #[error("environment was never reset")]
    NotReset,
    #[error("action index {0} outside 0..=2")]
    InvalidActionIndex(usize),
    #[error("action delta {0} outside -1..=1")]
    InvalidActionDelta(i64),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Reward(#[from] RewardError),
    #[error("invalid episode config: {0}")]
    InvalidEpisode(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub v: usize,
    pub c_bar: f64,
    pub d: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EpisodeConfig {
    pub max_steps: usize,
    pub penalty_on_termination: f64,
}

impl Default for EpisodeConfig {
    fn default() -> Self {
        Self { max_steps: DEFAULT_MAX_STEPS, penalty_on_termination: TERMINATION_PENALTY }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub observation: Observation,
    pub reward: f64,
    pub terminated: bool,
    pub truncated: bool,
    pub info: BTreeMap<String, f64>,
}

impl StepOutcome {
    pub fn done(&self) -> bool {
        self.terminated || self.truncated
    }
}

/// Categorical index used by agents and the wire protocol: 0, 1, 2 map to -1, 0, +1.
pub fn encode_action(index: usize) -> Result<Action, EnvError> {
    Action::ALL.get(index).copied().ok_or(EnvError::InvalidActionIndex(index))
}

pub fn decode_action(action: Action) -> usize {
    (action.delta() + 1) as usize
}

/// Scales an observation into the unit cube for network input.
pub fn normalize_observation(obs: &Observation, params: &SimParams, sla: &SlaSpec) -> [f64; 3] {
    [
        obs.v as f64 / params.max_replicas_cap as f64,
        obs.c_bar / 100.0,
        obs.d.min(sla.d_terminate) / sla.d_terminate,
    ]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Phase {
    Fresh,
    Running,
    Done,
}

#[derive(Debug, Clone)]
pub struct ScalingEnv {
    trace: Arc<WorkloadTrace>,
    params: SimParams,
    reward: RewardSpec,
    episode: EpisodeConfig,
    pool: ReplicaPool,
    queue: QueueState,
    start: usize,
    steps: usize,
    last: Observation,
    phase: Phase,
}

impl ScalingEnv {
    pub fn new(
        trace: Arc<WorkloadTrace>,
        params: SimParams,
        reward: RewardSpec,
        episode: EpisodeConfig,
    ) -> Result<Self, EnvError> {
        params.validate()?;
        reward.sla.validate()?;
        if episode.max_steps == 0 {
            return Err(EnvError::InvalidEpisode("max_steps must be at least 1".into()));
        }
        let pool = ReplicaPool::initial(&params);
        let last = Observation { v: pool.active(), c_bar: 0.0, d: 0.0 };
        Ok(Self {
            trace,
            params,
            reward,
            episode,
            pool,
            queue: QueueState::new(),
            start: 0,
            steps: 0,
            last,
            phase: Phase::Fresh,
        })
    }

    pub fn params(&self) -> &SimParams {
        &self.params
    }

    pub fn reward_spec(&self) -> &RewardSpec {
        &self.reward
    }

    pub fn episode_config(&self) -> &EpisodeConfig {
        &self.episode
    }

    pub fn trace_len(&self) -> usize {
        self.trace.len()
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    /// Warm-up slot of the current episode, if one was started.
    pub fn current_start(&self) -> Option<usize> {
        (self.phase != Phase::Fresh).then_some(self.start)
    }

    /// Largest start slot for which a full episode fits.
    pub fn last_start(&self) -> Option<usize> {
        self.trace.len().checked_sub(self.episode.max_steps + 1)
    }

    pub fn reset(&mut self, start_slot: usize) -> Result<Observation, EnvError> {
        let len = self.trace.len();
        if start_slot + self.episode.max_steps >= len {
            return Err(EnvError::WindowOutOfRange { start: start_slot, steps: self.episode.max_steps, len });
        }
        self.pool = ReplicaPool::initial(&self.params);
        self.queue = QueueState::new();
        self.start = start_slot;
        self.steps = 0;
        let arrivals = u64::from(self.trace.arrivals()[start_slot]);
        let warm = step_slot(&mut self.pool, &mut self.queue, arrivals, &self.params);
        self.last = Observation { v: self.pool.active(), c_bar: warm.mean_cpu_c, d: warm.peak_latency_d };
        self.phase = Phase::Running;
        Ok(self.last)
    }

    pub fn step(&mut self, action: Action) -> Result<StepOutcome, EnvError> {
        match self.phase {
            Phase::Fresh => return Err(EnvError::NotReset),
            Phase::Done => return Err(EnvError::EpisodeOver),
            Phase::Running => {}
        }
        self.steps += 1;
        let slot = self.start + self.steps;
        let arrivals = u64::from(self.trace.arrivals()[slot]);

        let scaling = apply_scaling(&mut self.pool, action, &self.params);
        let result = step_slot(&mut self.pool, &mut self.queue, arrivals, &self.params);
        let observation = Observation { v: self.pool.active(), c_bar: result.mean_cpu_c, d: result.peak_latency_d };

        let latency_violation = result.peak_latency_d > self.reward.sla.d_terminate;
        let terminated = scaling.cap_violation || latency_violation;
        let truncated = !terminated && self.steps >= self.episode.max_steps;
        let reward = if terminated {
            self.episode.penalty_on_termination
        } else {
            step_reward(&self.reward, self.last.d, action, observation.d, observation.c_bar)
        };

        let mut info = BTreeMap::new();
        info.insert("slot".to_string(), slot as f64);
        info.insert("arrivals".to_string(), arrivals as f64);
        info.insert("completed_jobs".to_string(), result.completed_jobs as f64);
        info.insert("queue_len".to_string(), result.queue_len as f64);
        info.insert("booting".to_string(), self.pool.booting() as f64);
        info.insert("cap_violation".to_string(), f64::from(u8::from(scaling.cap_violation)));
        info.insert("latency_violation".to_string(), f64::from(u8::from(latency_violation)));

        self.last = observation;
        if terminated || truncated {
            self.phase = Phase::Done;
        }
        Ok(StepOutcome { observation, reward, terminated, truncated, info })
    }

    pub fn normalize(&self, obs: &Observation) -> [f64; 3] {
        normalize_observation(obs, &self.params, &self.reward.sla)
    }
}

/// Episodic interface the built-in agents learn against.
pub trait Environment {
    fn begin_episode(&mut self) -> Result<Observation, EnvError>;
    fn advance(&mut self, action: Action) -> Result<StepOutcome, EnvError>;
}

/// How successive episodes pick their start slot.
#[derive(Debug, Clone)]
pub enum StartPolicy {
    /// Uniform over every start that fits, from a seeded stream.
    Uniform(ChaCha8Rng),
    /// Back-to-back windows from the beginning of the trace, wrapping when exhausted.
    Sequential { next: usize },
    Fixed(usize),
}

impl StartPolicy {
    pub fn uniform(seed: u64) -> Self {
        StartPolicy::Uniform(ChaCha8Rng::seed_from_u64(seed))
    }

    pub fn sequential() -> Self {
        StartPolicy::Sequential { next: 0 }
    }
}

#[derive(Debug, Clone)]
pub struct EpisodeRunner {
    env: ScalingEnv,
    starts: StartPolicy,
}

impl EpisodeRunner {
    pub fn new(env: ScalingEnv, starts: StartPolicy) -> Self {
        Self { env, starts }
    }

    pub fn env(&self) -> &ScalingEnv {
        &self.env
    }

    fn next_start(&mut self) -> Result<usize, EnvError> {
        let last = self.env.last_start().ok_or(EnvError::WindowOutOfRange {
            start: 0,
            steps: self.env.episode.max_steps,
            len: self.env.trace_len(),
        })?;
        Ok(match &mut self.starts {
            StartPolicy::Uniform(rng) => rng.random_range(0..=last),
            StartPolicy::Sequential { next } => {
                let start = if *next > last { 0 } else { *next };
                *next = start + self.env.episode.max_steps;
                start
            }
            StartPolicy::Fixed(start) => *start,
        })
    }
}

impl Environment for EpisodeRunner {
    fn begin_episode(&mut self) -> Result<Observation, EnvError> {
        let start = self.next_start()?;
        self.env.reset(start)
    }

    fn advance(&mut self, action: Action) -> Result<StepOutcome, EnvError> {
        self.env.step(action)
    }
}
