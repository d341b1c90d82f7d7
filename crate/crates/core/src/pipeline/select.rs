use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::validate::ReportsFile;
use super::{hash_header, load_run_config, read_file, write_file, PipelineError, REPORTS_FILE};
use crate::agents::Algorithm;
use crate::methodology::{self, ScoreReport, SelectionConfig, Verdict, VerdictKind};

#[derive(Debug, Clone)]
pub struct SelectionSummary {
    pub run_dir: PathBuf,
    pub verdicts: Vec<Verdict>,
}

/// Verdicts for learning agents only; baselines are scored but never picked.
pub fn select_reports(reports: &[ScoreReport], cfg: &SelectionConfig) -> Vec<Verdict> {
    methodology::select(reports, cfg, |alg| alg.parse::<Algorithm>().map(Algorithm::is_learner).unwrap_or(false))
}

fn render(verdicts: &[Verdict], hash: &str) -> String {
    let mut out = hash_header(hash);
    for v in verdicts {
        let kind = match v.verdict {
            VerdictKind::Deploy => "deploy",
            VerdictKind::Refine => "refine",
        };
        let _ = writeln!(out, "\n{}: {} {}", v.reward, kind, v.agent.as_deref().unwrap_or("-"));
        for reason in &v.reasons {
            let _ = writeln!(out, "  {reason}");
        }
        let _ = writeln!(out, "  survivors: {}", if v.survivors.is_empty() { "none".into() } else { v.survivors.join(", ") });
        for (agent, reason) in &v.discarded {
            let _ = writeln!(out, "  discarded {agent}: {reason}");
        }
    }
    out
}

/// Reads `reports.json` from a validated run and writes `selection.json` and
/// `selection.txt`. `alpha` overrides the configured significance level.
pub fn select(run_dir: &Path, alpha: Option<f64>) -> Result<SelectionSummary, PipelineError> {
    let cfg = load_run_config(run_dir)?;
    let path = run_dir.join(REPORTS_FILE);
    if !path.is_file() {
        return Err(PipelineError::Empty(format!("{} has no {REPORTS_FILE}; run validate first", run_dir.display())));
    }
    let file: ReportsFile = serde_json::from_str(&read_file(&path)?)
        .map_err(|e| PipelineError::Format { path: path.clone(), message: e.to_string() })?;
    let hash = cfg.hash();
    if file.config_hash != hash {
        return Err(PipelineError::Format {
            path,
            message: format!("reports were produced with config {} but the run is {hash}", file.config_hash),
        });
    }

    let mut sel = cfg.selection.clone();
    if let Some(a) = alpha {
        sel.alpha = a;
    }
    let mut verdicts = select_reports(&file.reports, &sel);
    for spec in cfg.reward_specs()? {
        let label = spec.label();
        if !verdicts.iter().any(|v| v.reward == label) {
            verdicts.push(Verdict {
                reward: label,
                verdict: VerdictKind::Refine,
                agent: None,
                survivors: Vec::new(),
                discarded: Vec::new(),
                reasons: vec!["no validated learning agent; refine all".into()],
            });
        }
    }

    let json = serde_json::json!({ "config_hash": hash, "alpha": sel.alpha, "verdicts": verdicts });
    write_file(&run_dir.join("selection.json"), &(serde_json::to_string_pretty(&json).expect("verdicts serialize") + "\n"))?;
    write_file(&run_dir.join("selection.txt"), &render(&verdicts, &hash))?;
    Ok(SelectionSummary { run_dir: run_dir.to_path_buf(), verdicts })
}
