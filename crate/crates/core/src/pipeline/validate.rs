use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::train::{checkpoint_path, run_path, RunRecord};
use super::{hash_header, jobs, load_agent, load_run_config, read_file, text_table, write_file, AgentJob, PipelineError, Traces, REPORTS_FILE};
use crate::agents::Algorithm;
use crate::config::ExperimentConfig;
use crate::exec::Executor;
use crate::methodology::{learning_score, plateau, score_reports, validate_policy, validation_env, ScoreReport, ValidationRun};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportsFile {
    pub config_hash: String,
    pub reports: Vec<ScoreReport>,
}

#[derive(Debug, Clone)]
pub struct ValidationSummary {
    pub run_dir: PathBuf,
    pub reports: Vec<ScoreReport>,
    pub runs: Vec<(String, ValidationRun)>,
    /// Agents that could not be validated, with the reason.
    pub failures: Vec<String>,
}

fn validation_csv(run: &ValidationRun, hash: &str) -> String {
    let mut out = hash_header(hash);
    out.push_str("step,v,c_bar,d,reward\n");
    for s in &run.steps {
        let _ = writeln!(out, "{},{},{},{},{}", s.step, s.v, s.c_bar, s.d, s.reward);
    }
    out
}

fn validate_one(
    job: &AgentJob,
    cfg: &ExperimentConfig,
    traces: &Traces,
    run_dir: &Path,
) -> Result<(ScoreReport, ValidationRun), PipelineError> {
    let ck = checkpoint_path(run_dir, job);
    if !ck.is_file() {
        return Err(PipelineError::Format { path: ck, message: "missing checkpoint".into() });
    }
    let mut agent = load_agent(&ck, cfg)?;
    let (mut env, start) = validation_env(traces.full.clone(), cfg.sim.clone(), job.reward, cfg.workload.train_len)?;
    let run = validate_policy(agent.as_mut(), &mut env, start)?;
    write_file(&run_dir.join("validation").join(format!("{}.csv", job.id())), &validation_csv(&run, &cfg.hash()))?;

    let curve_path = run_path(run_dir, job);
    let performance =
        if curve_path.is_file() { RunRecord::from_csv(*job, &read_file(&curve_path)?, &curve_path)?.performance() } else { Vec::new() };
    let replicas = run.replica_stats().expect("validation has at least one step");
    let latency = run.latency_stats().expect("validation has at least one step");
    let report = ScoreReport {
        agent: job.id(),
        algorithm: job.algorithm.to_string(),
        reward: job.reward.label(),
        seed: job.seed,
        learning_score: learning_score(run.accumulated_reward, run.episode_length, &job.reward, run.full_length)?,
        networking_score: f64::NAN,
        plateau: plateau(&performance),
        final_performance: performance.last().copied().unwrap_or(f64::NAN),
        episode_length: run.episode_length,
        terminated: run.terminated,
        mean_replicas: replicas.mean,
        mean_latency: latency.mean,
        max_latency: latency.max,
        discarded: false,
        reason: String::new(),
    };
    Ok((report, run))
}

fn is_learner(algorithm: &str) -> bool {
    algorithm.parse::<Algorithm>().map(Algorithm::is_learner).unwrap_or(false)
}

fn scores_csv(reports: &[ScoreReport], hash: &str) -> String {
    let mut out = hash_header(hash);
    out.push_str(
        "agent,algorithm,reward,seed,learning_score,networking_score,plateau,final_performance,\
         episode_length,terminated,mean_replicas,mean_latency,max_latency,discarded,reason\n",
    );
    for r in reports {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},\"{}\"",
            r.agent,
            r.algorithm,
            r.reward,
            r.seed,
            r.learning_score,
            r.networking_score,
            r.plateau,
            r.final_performance,
            r.episode_length,
            r.terminated,
            r.mean_replicas,
            r.mean_latency,
            r.max_latency,
            r.discarded,
            r.reason.replace('"', "'")
        );
    }
    out
}

fn scores_txt(reports: &[ScoreReport], failures: &[String], hash: &str) -> String {
    let mut out = hash_header(hash);
    let mut rewards: Vec<&str> = Vec::new();
    for r in reports {
        if !rewards.contains(&r.reward.as_str()) {
            rewards.push(&r.reward);
        }
    }
    for reward in rewards {
        let rows: Vec<Vec<String>> = reports
            .iter()
            .filter(|r| r.reward == reward)
            .map(|r| {
                vec![
                    format!("{}{}", if r.discarded { "*" } else { "" }, r.agent),
                    format!("{:.4}", r.learning_score),
                    format!("{:.4}", r.networking_score),
                    format!("{:.4}", r.plateau),
                    r.episode_length.to_string(),
                    format!("{:.2}", r.mean_replicas),
                    format!("{:.4}", r.mean_latency),
                    format!("{:.4}", r.max_latency),
                ]
            })
            .collect();
        let _ = writeln!(out, "\n{reward}");
        out.push_str(&text_table(
            &["agent", "learning", "networking", "plateau", "length", "mean_v", "mean_d", "max_d"],
            &rows,
        ));
    }
    out.push_str("\n* discarded: learning score above 1 + tol (early termination)\n");
    for f in failures {
        let _ = writeln!(out, "failed: {f}");
    }
    out
}

/// Runs one validation episode over the evaluation split for every trained
/// agent and scores the results.
pub fn validate(run_dir: &Path, exec: &Executor) -> Result<ValidationSummary, PipelineError> {
    let cfg = load_run_config(run_dir)?;
    let traces = Traces::generate(&cfg)?;
    let all = jobs(&cfg)?;
    let results = exec.map(&all, |job| validate_one(job, &cfg, &traces, run_dir));

    let mut reports = Vec::new();
    let mut runs = Vec::new();
    let mut failures = Vec::new();
    for (job, result) in all.iter().zip(results) {
        match result {
            Ok((report, run)) => {
                reports.push(report);
                runs.push((job.id(), run));
            }
            Err(e) => failures.push(format!("{}: {e}", job.id())),
        }
    }
    if reports.is_empty() {
        return Err(PipelineError::Empty(format!("no agent in {} could be validated ({})", run_dir.display(), failures.join("; "))));
    }
    let s = &cfg.selection;
    score_reports(&mut reports, |r| is_learner(&r.algorithm), s.tol, s.w_v, s.w_d, s.per_reward_cohort);

    let hash = cfg.hash();
    write_file(&run_dir.join("scores.csv"), &scores_csv(&reports, &hash))?;
    write_file(&run_dir.join("scores.txt"), &scores_txt(&reports, &failures, &hash))?;
    let file = ReportsFile { config_hash: hash, reports: reports.clone() };
    let json = serde_json::to_string_pretty(&file).expect("reports serialize");
    write_file(&run_dir.join(REPORTS_FILE), &(json + "\n"))?;
    Ok(ValidationSummary { run_dir: run_dir.to_path_buf(), reports, runs, failures })
}
