//! The three reward functions and their per-episode reward ranges.
//!
//! The -100 termination penalty is not part of these functions; the
//! environment substitutes it on the terminating step for every kind.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sim::Action;

#[derive(Debug, Error, PartialEq)]
pub enum RewardError {
    #[error("invalid optimization profile: {0}")]
    InvalidProfile(String),
    #[error("unknown reward function `{0}` (expected rfn1, rfn2, rfn3_1, rfn3_2 or rfn3_3)")]
    UnknownKind(String),
    #[error("degenerate reward range [{min}, {max}]")]
    DegenerateRange { min: f64, max: f64 },
    #[error("invalid SLA: {0}")]
    InvalidSla(String),
}

/// Service-level targets shared by the reward functions and the environment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SlaSpec {
    /// Target latency, seconds.
    pub d_tgt: f64,
    /// CPU target, percent.
    pub c_tgt: f64,
    /// Relative tolerance around both targets.
    pub epsilon: f64,
    /// Latency above which the episode is terminated, seconds.
    pub d_terminate: f64,
}

impl Default for SlaSpec {
    fn default() -> Self {
        let d_tgt = 0.020;
        let epsilon = 0.20;
        Self { d_tgt, c_tgt: 75.0, epsilon, d_terminate: 5.0 * (1.0 + epsilon) * d_tgt }
    }
}

impl SlaSpec {
    /// Highest latency that still honours the SLA.
    pub fn tolerated_latency(&self) -> f64 {
        (1.0 + self.epsilon) * self.d_tgt
    }

    pub fn validate(&self) -> Result<(), RewardError> {
        if !(self.d_tgt > 0.0) {
            return Err(RewardError::InvalidSla("d_tgt must be positive".into()));
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(RewardError::InvalidSla("epsilon must lie in (0, 1)".into()));
        }
        if !(self.d_terminate > self.tolerated_latency()) {
            return Err(RewardError::InvalidSla("d_terminate must exceed (1 + epsilon) * d_tgt".into()));
        }
        if !(self.c_tgt > 0.0 && self.c_tgt <= 100.0) {
            return Err(RewardError::InvalidSla("c_tgt must lie in (0, 100]".into()));
        }
        Ok(())
    }
}

/// Weights of the performance and resource costs; they sum to one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizationProfile {
    w_perf: f64,
    w_res: f64,
}

impl OptimizationProfile {
    pub const BALANCED: Self = Self { w_perf: 0.5, w_res: 0.5 };
    pub const RESOURCE: Self = Self { w_perf: 0.01, w_res: 0.99 };
    pub const PERFORMANCE: Self = Self { w_perf: 0.99, w_res: 0.01 };

    pub fn new(w_perf: f64, w_res: f64) -> Result<Self, RewardError> {
        let in_unit = |w: f64| (0.0..=1.0).contains(&w);
        if !in_unit(w_perf) || !in_unit(w_res) || ((w_perf + w_res) - 1.0).abs() > 1e-9 {
            return Err(RewardError::InvalidProfile(format!(
                "weights ({w_perf}, {w_res}) must be in [0,1] and sum to 1"
            )));
        }
        Ok(Self { w_perf, w_res })
    }

    /// Profiles 1, 2 and 3 of the benchmark.
    pub fn preset(index: u8) -> Option<Self> {
        match index {
            1 => Some(Self::BALANCED),
            2 => Some(Self::RESOURCE),
            3 => Some(Self::PERFORMANCE),
            _ => None,
        }
    }

    pub fn w_perf(&self) -> f64 {
        self.w_perf
    }

    pub fn w_res(&self) -> f64 {
        self.w_res
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RewardKind {
    /// In-band indicator on latency or CPU.
    Rfn1,
    /// Rewarded transitions between the Above/Below latency states.
    Rfn2,
    /// Negative weighted cost of SLA violations and replica changes.
    Rfn3 { profile: OptimizationProfile, preset: Option<u8> },
}

impl RewardKind {
    pub fn rfn3_preset(index: u8) -> Option<Self> {
        OptimizationProfile::preset(index).map(|profile| RewardKind::Rfn3 { profile, preset: Some(index) })
    }

    pub fn label(&self) -> String {
        match self {
            RewardKind::Rfn1 => "RFn1".into(),
            RewardKind::Rfn2 => "RFn2".into(),
            RewardKind::Rfn3 { preset: Some(i), .. } => format!("RFn3_{i}"),
            RewardKind::Rfn3 { profile, preset: None } => format!("RFn3_w{}", profile.w_perf),
        }
    }
}

impl fmt::Display for RewardKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

impl FromStr for RewardKind {
    type Err = RewardError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "rfn1" => Ok(RewardKind::Rfn1),
            "rfn2" => Ok(RewardKind::Rfn2),
            "rfn3_1" => Ok(RewardKind::rfn3_preset(1).unwrap()),
            "rfn3_2" => Ok(RewardKind::rfn3_preset(2).unwrap()),
            "rfn3_3" => Ok(RewardKind::rfn3_preset(3).unwrap()),
            _ => Err(RewardError::UnknownKind(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RewardSpec {
    pub kind: RewardKind,
    pub sla: SlaSpec,
}

impl RewardSpec {
    pub fn new(kind: RewardKind, sla: SlaSpec) -> Self {
        Self { kind, sla }
    }

    pub fn label(&self) -> String {
        self.kind.label()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MrpState {
    Above,
    Below,
}

impl MrpState {
    /// `Below` includes a latency exactly on target.
    pub fn from_latency(d: f64, sla: &SlaSpec) -> Self {
        if d > sla.d_tgt {
            MrpState::Above
        } else {
            MrpState::Below
        }
    }
}

/// 1 when latency or mean CPU lies within the tolerance band of its target.
pub fn rfn1(d: f64, c_bar: f64, sla: &SlaSpec) -> f64 {
    let latency_ok = (d - sla.d_tgt).abs() < sla.epsilon * sla.d_tgt;
    let cpu_ok = (c_bar - sla.c_tgt).abs() < sla.epsilon * sla.c_tgt;
    if latency_ok || cpu_ok {
        1.0
    } else {
        0.0
    }
}

pub fn rfn2(prev: MrpState, action: Action, next: MrpState) -> f64 {
    match (prev, action, next) {
        (MrpState::Above, Action::Add, MrpState::Below) => 1.0,
        (MrpState::Below, Action::Remove, MrpState::Below) => 1.0,
        _ => 0.0,
    }
}

pub fn rfn3(d: f64, action: Action, profile: &OptimizationProfile, sla: &SlaSpec) -> f64 {
    let perf = if d > sla.tolerated_latency() { 1.0 } else { 0.0 };
    let res = f64::from(action.delta());
    -(profile.w_perf * perf + profile.w_res * res)
}

/// Per-step reward for the transition into an observation with latency `d`
/// and CPU `c_bar`, where `prev_d` is the latency seen before acting.
pub fn step_reward(spec: &RewardSpec, prev_d: f64, action: Action, d: f64, c_bar: f64) -> f64 {
    match &spec.kind {
        RewardKind::Rfn1 => rfn1(d, c_bar, &spec.sla),
        RewardKind::Rfn2 => rfn2(
            MrpState::from_latency(prev_d, &spec.sla),
            action,
            MrpState::from_latency(d, &spec.sla),
        ),
        RewardKind::Rfn3 { profile, .. } => rfn3(d, action, profile, &spec.sla),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RewardRange {
    pub min_per_episode: f64,
    pub max_per_episode: f64,
}

impl RewardRange {
    pub fn width(&self) -> f64 {
        self.max_per_episode - self.min_per_episode
    }
}

/// Per-step extrema times the episode length. Feasibility is ignored, e.g.
/// removing a replica on every step counts towards the RFn3 maximum.
pub fn reward_range(spec: &RewardSpec, episode_len: usize) -> RewardRange {
    let len = episode_len as f64;
    let (lo, hi) = match &spec.kind {
        RewardKind::Rfn1 | RewardKind::Rfn2 => (0.0, 1.0),
        RewardKind::Rfn3 { profile, .. } => (-(profile.w_perf + profile.w_res), profile.w_res),
    };
    RewardRange { min_per_episode: lo * len, max_per_episode: hi * len }
}

/// Min-max scales an accumulated reward into the episode's range. Not clamped.
pub fn normalize_return(raw: f64, spec: &RewardSpec, episode_len: usize) -> Result<f64, RewardError> {
    let range = reward_range(spec, episode_len);
    if !(range.width() > 0.0) {
        return Err(RewardError::DegenerateRange { min: range.min_per_episode, max: range.max_per_episode });
    }
    Ok((raw - range.min_per_episode) / range.width())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sla() -> SlaSpec {
        SlaSpec::default()
    }

    #[test]
    fn default_sla_values() {
        let s = sla();
        assert_eq!(s.d_tgt, 0.020);
        assert_eq!(s.c_tgt, 75.0);
        assert!((s.d_terminate - 0.12).abs() < 1e-15);
        assert!(s.validate().is_ok());
    }

    #[test]
    fn rfn1_bands() {
        assert_eq!(rfn1(0.019, 40.0, &sla()), 1.0);
        assert_eq!(rfn1(0.030, 75.0, &sla()), 1.0);
        assert_eq!(rfn1(0.030, 40.0, &sla()), 0.0);
    }

    #[test]
    fn rfn2_transitions() {
        use MrpState::*;
        assert_eq!(rfn2(Above, Action::Add, Below), 1.0);
        assert_eq!(rfn2(Below, Action::Remove, Below), 1.0);
        assert_eq!(rfn2(Below, Action::Remove, Above), 0.0);
        assert_eq!(rfn2(Above, Action::Maintain, Below), 0.0);
        assert_eq!(MrpState::from_latency(0.020, &sla()), Below);
        assert_eq!(MrpState::from_latency(0.0200001, &sla()), Above);
    }

    #[test]
    fn rfn3_profiles() {
        let p1 = OptimizationProfile::BALANCED;
        let p2 = OptimizationProfile::RESOURCE;
        let p3 = OptimizationProfile::PERFORMANCE;
        assert_eq!(rfn3(0.030, Action::Add, &p1, &sla()), -1.0);
        assert_eq!(rfn3(0.010, Action::Remove, &p3, &sla()), 0.01);
        assert_eq!(rfn3(0.010, Action::Maintain, &p2, &sla()), 0.0);
    }

    #[test]
    fn profile_validation() {
        assert!(OptimizationProfile::new(0.3, 0.7).is_ok());
        assert!(OptimizationProfile::new(0.3, 0.3).is_err());
        assert!(OptimizationProfile::new(-0.1, 1.1).is_err());
    }

    #[test]
    fn labels_round_trip() {
        for label in ["rfn1", "rfn2", "rfn3_1", "rfn3_2", "rfn3_3"] {
            let kind: RewardKind = label.parse().unwrap();
            assert_eq!(kind.label().to_ascii_lowercase(), label);
        }
        assert!("rfn4".parse::<RewardKind>().is_err());
    }

    #[test]
    fn normalization() {
        let rf1 = RewardSpec::new(RewardKind::Rfn1, sla());
        let rf2 = RewardSpec::new(RewardKind::Rfn2, sla());
        let rf3 = RewardSpec::new(RewardKind::rfn3_preset(1).unwrap(), sla());
        assert_eq!(normalize_return(3600.0, &rf1, 3600).unwrap(), 1.0);
        assert_eq!(normalize_return(0.0, &rf2, 3600).unwrap(), 0.0);
        assert!((normalize_return(0.0, &rf3, 3600).unwrap() - 2.0 / 3.0).abs() < 1e-12);
        assert!(matches!(normalize_return(1.0, &rf1, 0), Err(RewardError::DegenerateRange { .. })));
    }

    #[test]
    fn balanced_profile_is_symmetric() {
        let p = OptimizationProfile::BALANCED;
        let violation_only = rfn3(0.05, Action::Maintain, &p, &sla());
        let add_only = rfn3(0.01, Action::Add, &p, &sla());
        assert_eq!(violation_only, add_only);
    }

    fn any_kind() -> impl Strategy<Value = RewardKind> {
        prop_oneof![
            Just(RewardKind::Rfn1),
            Just(RewardKind::Rfn2),
            (1u8..=3).prop_map(|i| RewardKind::rfn3_preset(i).unwrap()),
            (0.0f64..=1.0).prop_map(|w| RewardKind::Rfn3 {
                profile: OptimizationProfile::new(w, 1.0 - w).unwrap(),
                preset: None
            }),
        ]
    }

    proptest! {
        #[test]
        fn step_rewards_stay_in_range(
            kind in any_kind(),
            prev_d in 0.0f64..0.2,
            d in 0.0f64..0.2,
            c_bar in 0.0f64..=100.0,
            a in 0usize..3,
        ) {
            let spec = RewardSpec::new(kind, sla());
            let r = step_reward(&spec, prev_d, Action::ALL[a], d, c_bar);
            let range = reward_range(&spec, 1);
            prop_assert!(r >= range.min_per_episode - 1e-12 && r <= range.max_per_episode + 1e-12);
        }

        #[test]
        fn rfn2_depends_only_on_buckets(
            d1 in 0.0f64..0.02, d2 in 0.0f64..0.02, a in 0usize..3,
            hi1 in 0.0201f64..1.0, hi2 in 0.0201f64..1.0,
        ) {
            let spec = RewardSpec::new(RewardKind::Rfn2, sla());
            let act = Action::ALL[a];
            prop_assert_eq!(step_reward(&spec, d1, act, d2, 0.0), step_reward(&spec, d2, act, d1, 0.0));
            prop_assert_eq!(step_reward(&spec, hi1, act, d1, 0.0), step_reward(&spec, hi2, act, d2, 50.0));
        }
    }
}
