//! File-backed experiment pipeline: train, validate, select, report.
//!
//! A run directory is named after the config hash and holds
//!
//! ```text
//! config.toml                  the config the run was trained with
//! runs/<agent>.csv             epoch, mean_return, episodes_terminated, train_steps
//! checkpoints/<agent>.policy   trained policy
//! validation/<agent>.csv       step, v, c_bar, d, reward
//! scores.csv, scores.txt       learning and networking scores
//! reports.json                 score reports consumed by `select`
//! selection.json, .txt         per-reward verdicts
//! plots/<reward>.svg           learning curves
//! summary.txt                  score tables
//! ```
//!
//! Text outputs start with a `config_hash` header line and contain no
//! timestamps, so reruns produce identical bytes.

mod report;
mod select;
mod train;
mod validate;

pub use report::{report, render_svg, ReportSummary};
pub use select::{select, select_reports, SelectionSummary};
pub use train::{train, RunRecord, TrainSummary};
pub use validate::{validate, ValidationSummary};

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use thiserror::Error;

use crate::agents::{
    restore, Agent, AgentError, Algorithm, Checkpoint, DqnAgent, ObsScaler, PpoAgent, RandomAgent, ThresholdAgent,
};
use crate::config::{ConfigError, ExperimentConfig};
use crate::methodology::MethodologyError;
use crate::rewards::RewardSpec;
use crate::workload::{generate, split, WorkloadError, WorkloadTrace};

pub const CONFIG_FILE: &str = "config.toml";
pub const REPORTS_FILE: &str = "reports.json";

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Workload(#[from] WorkloadError),
    #[error(transparent)]
    Methodology(#[from] MethodologyError),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error("{path}: {error}")]
    Io { path: PathBuf, error: std::io::Error },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
    #[error("{0} is not a run directory (missing {CONFIG_FILE})")]
    NotARunDir(PathBuf),
    #[error("nothing to do: {0}")]
    Empty(String),
    #[error("{} agent(s) failed: {}", .0.len(), .0.join("; "))]
    AgentsFailed(Vec<String>),
}

pub(crate) fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |error| PipelineError::Io { path: path.to_path_buf(), error }
}

pub(crate) fn write_file(path: &Path, contents: &str) -> Result<(), PipelineError> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    std::fs::write(path, contents).map_err(io_err(path))
}

pub(crate) fn read_file(path: &Path) -> Result<String, PipelineError> {
    std::fs::read_to_string(path).map_err(io_err(path))
}

/// One algorithm x reward function x seed combination.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AgentJob {
    pub algorithm: Algorithm,
    pub reward: RewardSpec,
    pub seed: u64,
}

impl AgentJob {
    pub fn id(&self) -> String {
        format!("{}-{}-s{}", self.algorithm, self.reward.label(), self.seed)
    }
}

/// Jobs ordered by reward function, then algorithm, then seed.
pub fn jobs(cfg: &ExperimentConfig) -> Result<Vec<AgentJob>, PipelineError> {
    let mut out = Vec::new();
    for reward in cfg.reward_specs()? {
        for &algorithm in &cfg.experiment.algorithms {
            for &seed in &cfg.schedule.seeds {
                out.push(AgentJob { algorithm, reward, seed });
            }
        }
    }
    Ok(out)
}

pub fn build_agent(job: &AgentJob, cfg: &ExperimentConfig) -> Result<Box<dyn Agent>, PipelineError> {
    let scaler = ObsScaler::new(&cfg.sim, &cfg.sla);
    Ok(match job.algorithm {
        Algorithm::Dqn => Box::new(DqnAgent::new(cfg.dqn.clone(), job.seed, scaler)?),
        Algorithm::Ppo => Box::new(PpoAgent::new(cfg.ppo.clone(), job.seed, scaler)?),
        Algorithm::Random => Box::new(RandomAgent::new(job.seed)),
        Algorithm::Threshold => Box::new(ThresholdAgent::new(cfg.sla)),
    })
}

pub fn load_agent(path: &Path, cfg: &ExperimentConfig) -> Result<Box<dyn Agent>, PipelineError> {
    let ck = Checkpoint::load(path)?;
    Ok(restore(&ck, ObsScaler::new(&cfg.sim, &cfg.sla), cfg.sla)?)
}

/// Full trace plus its train and evaluation splits.
pub struct Traces {
    pub full: Arc<WorkloadTrace>,
    pub train: Arc<WorkloadTrace>,
    pub eval: Arc<WorkloadTrace>,
}

impl Traces {
    pub fn generate(cfg: &ExperimentConfig) -> Result<Self, PipelineError> {
        let full = generate(&cfg.workload)?;
        let (train, eval) = split(&full, cfg.workload.train_len)?;
        Ok(Self { full: Arc::new(full), train: Arc::new(train), eval: Arc::new(eval) })
    }
}

/// Reads the config a run directory was created with.
pub fn load_run_config(run_dir: &Path) -> Result<ExperimentConfig, PipelineError> {
    let path = run_dir.join(CONFIG_FILE);
    if !path.is_file() {
        return Err(PipelineError::NotARunDir(run_dir.to_path_buf()));
    }
    Ok(ExperimentConfig::load(&path)?)
}

pub(crate) fn hash_header(hash: &str) -> String {
    format!("# config_hash={hash}\n")
}

/// Writes `trace` as CSV with a config hash header.
pub fn write_trace(path: &Path, trace: &WorkloadTrace, cfg: &ExperimentConfig) -> Result<(), PipelineError> {
    let mut buf = Vec::new();
    trace.write_csv(&mut buf).map_err(io_err(path))?;
    let mut text = hash_header(&cfg.hash());
    text.push_str(std::str::from_utf8(&buf).expect("csv is ascii"));
    write_file(path, &text)
}

/// Simple fixed-width table for the `.txt` outputs.
pub(crate) fn text_table(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for row in rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.len());
        }
    }
    let mut out = String::new();
    let line = |cells: Vec<&str>, out: &mut String| {
        let padded: Vec<String> = cells.iter().zip(&widths).map(|(c, w)| format!("{c:<w$}")).collect();
        let _ = writeln!(out, "{}", padded.join("  ").trim_end());
    };
    line(header.to_vec(), &mut out);
    let rule: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
    let _ = writeln!(out, "{}", rule.join("  "));
    for row in rows {
        line(row.iter().map(String::as_str).collect(), &mut out);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn job_ids_and_order() {
        let mut cfg = ExperimentConfig::preset("desk").unwrap();
        cfg.experiment.rewards = vec!["rfn1".into(), "rfn3_2".into()];
        cfg.experiment.algorithms = vec![Algorithm::Dqn, Algorithm::Ppo];
        cfg.schedule.seeds = vec![1, 2];
        let js = jobs(&cfg).unwrap();
        assert_eq!(js.len(), 8);
        assert_eq!(js[0].id(), "dqn-RFn1-s1");
        assert_eq!(js[3].id(), "ppo-RFn1-s2");
        assert_eq!(js[4].id(), "dqn-RFn3_2-s1");
    }

    #[test]
    fn table_alignment() {
        let t = text_table(&["a", "long"], &[vec!["xyz".into(), "1".into()]]);
        assert_eq!(t, "a    long\n---  ----\nxyz  1\n");
    }
}
