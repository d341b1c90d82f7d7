use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::{build_agent, hash_header, jobs, read_file, write_file, AgentJob, PipelineError, Traces, CONFIG_FILE};
use crate::config::ExperimentConfig;
use crate::env::ScalingEnv;
use crate::exec::Executor;
use crate::methodology::{run_epochs, EpochRecord};

const RUN_HEADER: &str = "epoch,mean_return,episodes_terminated,train_steps";

/// Learning curve of one agent as stored in `runs/<agent>.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub job: AgentJob,
    pub epochs: Vec<EpochRecord>,
}

impl RunRecord {
    pub fn performance(&self) -> Vec<f64> {
        self.epochs.iter().map(|e| e.mean_return).collect()
    }

    pub fn to_csv(&self, config_hash: &str) -> String {
        let mut out = hash_header(config_hash);
        let _ = writeln!(out, "# agent={}", self.job.id());
        let _ = writeln!(out, "{RUN_HEADER}");
        for e in &self.epochs {
            let _ = writeln!(out, "{},{},{},{}", e.epoch, e.mean_return, e.episodes_terminated, e.train_steps);
        }
        out
    }

    /// Parses a run CSV. Per-episode evaluation returns are not stored, so
    /// `eval_returns` comes back empty.
    pub fn from_csv(job: AgentJob, text: &str, path: &Path) -> Result<Self, PipelineError> {
        let bad = |line: usize, m: &str| PipelineError::Format { path: path.to_path_buf(), message: format!("line {line}: {m}") };
        let mut epochs = Vec::new();
        let mut header_seen = false;
        for (idx, line) in text.lines().enumerate() {
            if line.starts_with('#') || line.trim().is_empty() {
                continue;
            }
            if !header_seen {
                if line.trim() != RUN_HEADER {
                    return Err(bad(idx + 1, "unexpected header"));
                }
                header_seen = true;
                continue;
            }
            let cols: Vec<&str> = line.split(',').collect();
            if cols.len() != 4 {
                return Err(bad(idx + 1, "expected 4 columns"));
            }
            let parse_err = |_| bad(idx + 1, "unparsable value");
            epochs.push(EpochRecord {
                epoch: cols[0].parse().map_err(|_| bad(idx + 1, "bad epoch"))?,
                mean_return: cols[1].parse().map_err(parse_err)?,
                episodes_terminated: cols[2].parse().map_err(|_| bad(idx + 1, "bad count"))?,
                eval_returns: Vec::new(),
                train_steps: cols[3].parse().map_err(|_| bad(idx + 1, "bad count"))?,
            });
        }
        if !header_seen {
            return Err(bad(0, "missing header"));
        }
        Ok(Self { job, epochs })
    }
}

#[derive(Debug, Clone)]
pub struct TrainSummary {
    pub run_dir: PathBuf,
    pub runs: Vec<RunRecord>,
}

pub(crate) fn run_path(run_dir: &Path, job: &AgentJob) -> PathBuf {
    run_dir.join("runs").join(format!("{}.csv", job.id()))
}

pub(crate) fn checkpoint_path(run_dir: &Path, job: &AgentJob) -> PathBuf {
    run_dir.join("checkpoints").join(format!("{}.policy", job.id()))
}

/// Reads every run CSV the config calls for; missing ones are returned by id.
pub(crate) fn load_runs(run_dir: &Path, cfg: &ExperimentConfig) -> Result<(Vec<RunRecord>, Vec<String>), PipelineError> {
    let mut runs = Vec::new();
    let mut missing = Vec::new();
    for job in jobs(cfg)? {
        let path = run_path(run_dir, &job);
        if !path.is_file() {
            missing.push(job.id());
            continue;
        }
        runs.push(RunRecord::from_csv(job, &read_file(&path)?, &path)?);
    }
    Ok((runs, missing))
}

fn train_one(job: &AgentJob, cfg: &ExperimentConfig, traces: &Traces, run_dir: &Path) -> Result<RunRecord, PipelineError> {
    let mut agent = build_agent(job, cfg)?;
    let train_env = ScalingEnv::new(traces.train.clone(), cfg.sim.clone(), job.reward, cfg.episode)
        .map_err(crate::methodology::MethodologyError::from)?;
    let eval_env = ScalingEnv::new(traces.eval.clone(), cfg.sim.clone(), job.reward, cfg.episode)
        .map_err(crate::methodology::MethodologyError::from)?;
    let epochs = run_epochs(agent.as_mut(), train_env, job.seed, &eval_env, &cfg.schedule)?;
    let record = RunRecord { job: *job, epochs };
    write_file(&run_path(run_dir, job), &record.to_csv(&cfg.hash()))?;
    let ck_path = checkpoint_path(run_dir, job);
    write_file(&ck_path, &agent.checkpoint().to_text())?;
    Ok(record)
}

/// Trains every agent the config describes and writes its learning curve and
/// checkpoint under `cfg.run_dir()`.
pub fn train(cfg: &ExperimentConfig, exec: &Executor) -> Result<TrainSummary, PipelineError> {
    cfg.validate()?;
    let run_dir = cfg.run_dir();
    let mut config_text = hash_header(&cfg.hash());
    // Stored without output_dir so the same config gives the same bytes anywhere.
    config_text.push_str(&ExperimentConfig { output_dir: PathBuf::new(), ..cfg.clone() }.to_toml());
    write_file(&run_dir.join(CONFIG_FILE), &config_text)?;

    let traces = Traces::generate(cfg)?;
    let all = jobs(cfg)?;
    let results = exec.map(&all, |job| train_one(job, cfg, &traces, &run_dir));

    let mut runs = Vec::with_capacity(results.len());
    let mut failures = Vec::new();
    for (job, result) in all.iter().zip(results) {
        match result {
            Ok(r) => runs.push(r),
            Err(e) => failures.push(format!("{}: {e}", job.id())),
        }
    }
    if !failures.is_empty() {
        return Err(PipelineError::AgentsFailed(failures));
    }
    Ok(TrainSummary { run_dir, runs })
}
