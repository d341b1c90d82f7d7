//! Experiment configuration: a sectioned TOML file, one section per module.
//!
//! ```toml
//! output_dir = "scalebench-out"
//!
//! [experiment]
//! algorithms = ["dqn", "ppo"]
//! rewards = ["rfn1", "rfn2", "rfn3_1", "rfn3_2", "rfn3_3"]
//!
//! [workload]      # WorkloadConfig
//! [sim]           # SimParams
//! [sla]           # SlaSpec
//! [episode]       # EpisodeConfig
//! [schedule]      # Schedule
//! [selection]     # SelectionConfig
//! [dqn]           # DqnHyperparams
//! [ppo]           # PpoHyperparams
//! ```
//!
//! Every key is optional and defaults to the documented value. The only
//! environment override is `SCALEBENCH_OUT`, which replaces `output_dir`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::agents::{Algorithm, DqnHyperparams, PpoHyperparams};
use crate::env::EpisodeConfig;
use crate::methodology::{Schedule, SelectionConfig};
use crate::rewards::{RewardKind, RewardSpec, SlaSpec};
use crate::sim::SimParams;
use crate::workload::WorkloadConfig;

pub const OUTPUT_ENV_VAR: &str = "SCALEBENCH_OUT";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {error}")]
    Io { path: PathBuf, error: std::io::Error },
    #[error("cannot parse {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error("unknown preset `{0}` (available: desk, full)")]
    UnknownPreset(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSection {
    pub algorithms: Vec<Algorithm>,
    /// `rfn1`, `rfn2`, `rfn3_1`, `rfn3_2` or `rfn3_3`.
    pub rewards: Vec<String>,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        Self {
            algorithms: vec![Algorithm::Dqn, Algorithm::Ppo],
            rewards: ["rfn1", "rfn2", "rfn3_1", "rfn3_2", "rfn3_3"].map(String::from).to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub output_dir: PathBuf,
    pub experiment: ExperimentSection,
    pub workload: WorkloadConfig,
    pub sim: SimParams,
    pub sla: SlaSpec,
    pub episode: EpisodeConfig,
    pub schedule: Schedule,
    pub selection: SelectionConfig,
    pub dqn: DqnHyperparams,
    pub ppo: PpoHyperparams,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str, origin: &Path) -> Result<Self, ConfigError> {
        let cfg: Self =
            toml::from_str(text).map_err(|e| ConfigError::Parse { path: origin.to_path_buf(), message: e.to_string() })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|error| ConfigError::Io { path: path.to_path_buf(), error })?;
        Self::from_toml_str(&text, path)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// `desk`: a two-day trace with a lighter load, N=25, V=2, E=5 and three
    /// seeds, sized to finish on a laptop. `full`: the defaults.
    pub fn preset(name: &str) -> Result<Self, ConfigError> {
        match name {
            "full" => Ok(Self::default()),
            "desk" => Ok(Self::desk()),
            other => Err(ConfigError::UnknownPreset(other.to_string())),
        }
    }

    fn desk() -> Self {
        let mut cfg = Self::default();
        cfg.experiment.algorithms = vec![Algorithm::Dqn, Algorithm::Ppo, Algorithm::Random, Algorithm::Threshold];
        cfg.workload = WorkloadConfig {
            horizon_slots: 172_800,
            train_len: 86_400,
            base_level: 12.0,
            peak_level: 28.0,
            noise_std: 1.5,
            burst_rate: 0.0005,
            burst_magnitude: 3.0,
            ..WorkloadConfig::default()
        };
        cfg.schedule = Schedule { train_episodes: 25, eval_episodes: 2, epochs: 5, seeds: vec![1, 2, 3] };
        // Early episodes end within a few dozen steps under exploration, so
        // the budget is counted in episodes rather than slots.
        cfg.dqn = DqnHyperparams {
            learning_rate: 1e-3,
            epsilon_decay_steps: 5_000,
            target_sync_interval: 500,
            ..DqnHyperparams::default()
        };
        cfg
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |e: &dyn std::fmt::Display| ConfigError::Invalid(e.to_string());
        self.workload.validate().map_err(|e| invalid(&e))?;
        self.sim.validate().map_err(|e| invalid(&e))?;
        self.sla.validate().map_err(|e| invalid(&e))?;
        self.schedule.validate().map_err(|e| invalid(&e))?;
        self.dqn.validate().map_err(|e| invalid(&e))?;
        self.ppo.validate().map_err(|e| invalid(&e))?;
        if self.episode.max_steps == 0 {
            return Err(ConfigError::Invalid("episode.max_steps must be at least 1".into()));
        }
        if self.episode.max_steps + 1 > self.workload.train_len || self.episode.max_steps + 1 > self.workload.eval_len() {
            return Err(ConfigError::Invalid(format!(
                "episodes of {} steps do not fit both splits ({} and {} slots)",
                self.episode.max_steps,
                self.workload.train_len,
                self.workload.eval_len()
            )));
        }
        if self.experiment.algorithms.is_empty() {
            return Err(ConfigError::Invalid("experiment.algorithms is empty".into()));
        }
        if has_duplicates(&self.experiment.algorithms) {
            return Err(ConfigError::Invalid("experiment.algorithms lists an algorithm twice".into()));
        }
        let kinds = self.reward_kinds()?;
        if kinds.is_empty() {
            return Err(ConfigError::Invalid("experiment.rewards is empty".into()));
        }
        if has_duplicates(&kinds.iter().map(RewardKind::label).collect::<Vec<_>>()) {
            return Err(ConfigError::Invalid("experiment.rewards lists a reward twice".into()));
        }
        let s = &self.selection;
        if !(s.alpha > 0.0 && s.alpha < 1.0) || s.tol < 0.0 || s.tol_plateau < 0.0 || !(s.top_fraction > 0.0 && s.top_fraction <= 1.0)
        {
            return Err(ConfigError::Invalid("selection thresholds out of range".into()));
        }
        Ok(())
    }

    pub fn reward_kinds(&self) -> Result<Vec<RewardKind>, ConfigError> {
        self.experiment
            .rewards
            .iter()
            .map(|r| r.parse::<RewardKind>().map_err(|e| ConfigError::Invalid(e.to_string())))
            .collect()
    }

    pub fn reward_specs(&self) -> Result<Vec<RewardSpec>, ConfigError> {
        Ok(self.reward_kinds()?.into_iter().map(|k| RewardSpec::new(k, self.sla)).collect())
    }

    /// First 16 hex digits of the SHA-256 of the serialized config, with the
    /// output directory left out.
    pub fn hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.output_dir = PathBuf::new();
        let digest = Sha256::digest(canonical.to_toml().as_bytes());
        hex::encode(digest)[..16].to_string()
    }

    /// `SCALEBENCH_OUT` if set, else `output_dir`, else `scalebench-out`.
    pub fn resolved_output_dir(&self) -> PathBuf {
        match std::env::var_os(OUTPUT_ENV_VAR) {
            Some(dir) if !dir.is_empty() => PathBuf::from(dir),
            _ if self.output_dir.as_os_str().is_empty() => PathBuf::from("scalebench-out"),
            _ => self.output_dir.clone(),
        }
    }

    pub fn run_dir(&self) -> PathBuf {
        self.resolved_output_dir().join(self.hash())
    }
}

fn has_duplicates<T: PartialEq>(xs: &[T]) -> bool {
    xs.iter().enumerate().any(|(i, x)| xs[..i].contains(x))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate_and_round_trip() {
        let cfg = ExperimentConfig::default();
        cfg.validate().unwrap();
        let back = ExperimentConfig::from_toml_str(&cfg.to_toml(), Path::new("mem")).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.hash(), cfg.hash());
        assert_eq!(cfg.hash().len(), 16);
    }

    #[test]
    fn desk_preset_is_small_and_valid() {
        let cfg = ExperimentConfig::preset("desk").unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.workload.horizon_slots, 172_800);
        assert_eq!((cfg.schedule.train_episodes, cfg.schedule.eval_episodes, cfg.schedule.epochs), (25, 2, 5));
        assert_eq!(cfg.schedule.seeds.len(), 3);
        assert_ne!(cfg.hash(), ExperimentConfig::default().hash());
        assert!(ExperimentConfig::preset("huge").is_err());
    }

    #[test]
    fn partial_file_fills_defaults() {
        let text = "[schedule]\nepochs = 2\nseeds = [4, 9]\n\n[experiment]\nrewards = [\"rfn3_2\"]\n";
        let cfg = ExperimentConfig::from_toml_str(text, Path::new("mem")).unwrap();
        assert_eq!(cfg.schedule.epochs, 2);
        assert_eq!(cfg.schedule.train_episodes, 24);
        assert_eq!(cfg.reward_kinds().unwrap()[0].label(), "RFn3_2");
    }

    #[test]
    fn output_dir_does_not_change_the_hash() {
        let a = ExperimentConfig::default();
        let b = ExperimentConfig { output_dir: "elsewhere".into(), ..a.clone() };
        assert_eq!(a.hash(), b.hash());
    }

    #[test]
    fn rejects_bad_configs() {
        for text in [
            "[schedule]\nseeds = [1, 1]\n",
            "[experiment]\nrewards = [\"rfn4\"]\n",
            "[experiment]\nalgorithms = []\n",
            "[sim]\nunknown_key = 3\n",
            "[episode]\nmax_steps = 500000\n",
            "not toml at all",
        ] {
            assert!(ExperimentConfig::from_toml_str(text, Path::new("mem")).is_err(), "{text}");
        }
    }
}
