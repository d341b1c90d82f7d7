//! Discrete-time model of a replica pool behind a load balancer.
//!
//! Each slot the balancer hands out queued jobs (oldest first) followed by the
//! slot's new arrivals, round-robin over the serving replicas. A replica works
//! its share sequentially, so the i-th job it takes in a slot completes
//! `i * service_time` into the slot; a job that already waited `w` whole slots
//! in the queue adds `w * slot_duration` on top. Jobs beyond
//! `serving * capacity_per_slot` stay queued for the next slot.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum SimError {
    #[error("invalid simulator parameters: {0}")]
    InvalidParams(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimParams {
    pub slot_duration: f64,
    pub service_time: f64,
    pub boot_delay: usize,
    pub shutdown_delay: usize,
    pub initial_replicas: usize,
    pub max_replicas_cap: usize,
    pub min_replicas: usize,
}

impl Default for SimParams {
    fn default() -> Self {
        Self {
            slot_duration: 1.0,
            service_time: 0.003,
            boot_delay: 1,
            shutdown_delay: 1,
            initial_replicas: 2,
            max_replicas_cap: 12,
            min_replicas: 1,
        }
    }
}

impl SimParams {
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: &str| Err(SimError::InvalidParams(m.to_string()));
        if !(self.slot_duration > 0.0 && self.slot_duration.is_finite()) {
            return bad("slot_duration must be positive");
        }
        if !(self.service_time > 0.0 && self.service_time < self.slot_duration) {
            return bad("service_time must lie in (0, slot_duration)");
        }
        if self.boot_delay == 0 || self.shutdown_delay == 0 {
            return bad("boot and shutdown delays are at least one slot");
        }
        if self.min_replicas == 0 {
            return bad("min_replicas must be at least 1");
        }
        if self.min_replicas > self.max_replicas_cap {
            return bad("min_replicas exceeds max_replicas_cap");
        }
        if self.initial_replicas < self.min_replicas || self.initial_replicas > self.max_replicas_cap {
            return bad("initial_replicas outside [min_replicas, max_replicas_cap]");
        }
        Ok(())
    }

    /// Jobs one replica can finish within a slot.
    pub fn capacity_per_slot(&self) -> usize {
        // The epsilon absorbs representation error, e.g. 1.0 / 0.01.
        ((self.slot_duration / self.service_time) + 1e-9).floor() as usize
    }
}

/// One scaling decision per slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Action {
    Remove,
    Maintain,
    Add,
}

impl Action {
    pub const ALL: [Action; 3] = [Action::Remove, Action::Maintain, Action::Add];

    pub fn delta(self) -> i8 {
        match self {
            Action::Remove => -1,
            Action::Maintain => 0,
            Action::Add => 1,
        }
    }

    pub fn from_delta(delta: i8) -> Option<Self> {
        match delta {
            -1 => Some(Action::Remove),
            0 => Some(Action::Maintain),
            1 => Some(Action::Add),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReplicaPool {
    active: usize,
    /// Remaining boot slots per booting replica.
    booting: Vec<usize>,
    /// Remaining shutdown slots per draining replica.
    draining: Vec<usize>,
}

impl ReplicaPool {
    pub fn new(active: usize) -> Self {
        Self { active, booting: Vec::new(), draining: Vec::new() }
    }

    pub fn initial(params: &SimParams) -> Self {
        Self::new(params.initial_replicas)
    }

    pub fn active(&self) -> usize {
        self.active
    }

    pub fn booting(&self) -> usize {
        self.booting.len()
    }

    pub fn draining(&self) -> usize {
        self.draining.len()
    }

    /// Replicas that take jobs this slot: active ones plus those still draining.
    pub fn serving(&self) -> usize {
        self.active + self.draining.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QueueEntry {
    pub jobs: u64,
    pub waited_slots: u64,
}

/// Jobs waiting at the balancer, oldest first.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct QueueState {
    entries: VecDeque<QueueEntry>,
}

impl QueueState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn entries(&self) -> impl Iterator<Item = &QueueEntry> {
        self.entries.iter()
    }

    pub fn len(&self) -> u64 {
        self.entries.iter().map(|e| e.jobs).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SlotResult {
    pub completed_jobs: u64,
    pub peak_latency_d: f64,
    pub mean_cpu_c: f64,
    pub queue_len: u64,
    pub per_replica_load: Vec<u64>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ScalingOutcome {
    /// The pool changed.
    pub applied: bool,
    /// An add was requested with the pool already at its cap.
    pub cap_violation: bool,
}

pub fn apply_scaling(pool: &mut ReplicaPool, action: Action, params: &SimParams) -> ScalingOutcome {
    match action {
        Action::Maintain => ScalingOutcome::default(),
        Action::Add => {
            if pool.active + pool.booting.len() >= params.max_replicas_cap {
                ScalingOutcome { applied: false, cap_violation: true }
            } else {
                pool.booting.push(params.boot_delay);
                ScalingOutcome { applied: true, cap_violation: false }
            }
        }
        Action::Remove => {
            if pool.active <= params.min_replicas {
                ScalingOutcome::default()
            } else {
                pool.active -= 1;
                pool.draining.push(params.shutdown_delay);
                ScalingOutcome { applied: true, cap_violation: false }
            }
        }
    }
}

/// Advances the pool and queue by one slot with `arrivals` new jobs.
pub fn step_slot(pool: &mut ReplicaPool, queue: &mut QueueState, arrivals: u64, params: &SimParams) -> SlotResult {
    let serving = pool.serving() as u64;
    let capacity = params.capacity_per_slot() as u64;
    let mut budget = serving * capacity;

    let mut served = 0u64;
    let mut peak = 0.0f64;
    let mut leftover = VecDeque::with_capacity(queue.entries.len() + 1);

    let incoming = QueueEntry { jobs: arrivals, waited_slots: 0 };
    for entry in queue.entries.drain(..).chain(std::iter::once(incoming)) {
        if entry.jobs == 0 {
            continue;
        }
        let take = entry.jobs.min(budget);
        if take > 0 {
            // Round-robin: the group's last job lands at this position on its replica.
            let last = served + take - 1;
            let position = last / serving + 1;
            let latency = entry.waited_slots as f64 * params.slot_duration + position as f64 * params.service_time;
            peak = peak.max(latency);
            served += take;
            budget -= take;
        }
        let rest = entry.jobs - take;
        if rest > 0 {
            leftover.push_back(QueueEntry { jobs: rest, waited_slots: entry.waited_slots + 1 });
        }
    }
    queue.entries = leftover;

    let per_replica_load: Vec<u64> = if serving == 0 {
        Vec::new()
    } else {
        (0..serving)
            .map(|r| served / serving + u64::from(r < served % serving))
            .collect()
    };
    let mean_cpu_c = if per_replica_load.is_empty() {
        0.0
    } else {
        per_replica_load
            .iter()
            .map(|&load| (load as f64 * params.service_time / params.slot_duration).min(1.0) * 100.0)
            .sum::<f64>()
            / per_replica_load.len() as f64
    };

    pool.draining.retain_mut(|left| {
        *left -= 1;
        *left > 0
    });
    let before = pool.booting.len();
    pool.booting.retain_mut(|left| {
        *left -= 1;
        *left > 0
    });
    pool.active += before - pool.booting.len();

    SlotResult {
        completed_jobs: served,
        peak_latency_d: peak,
        mean_cpu_c,
        queue_len: queue.len(),
        per_replica_load,
    }
}
