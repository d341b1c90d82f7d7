use serde::{Deserialize, Serialize};

use super::ScoreReport;
use crate::stats::{mean, welch_t_test};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelectionConfig {
    pub alpha: f64,
    /// Learning scores above `1 + tol` are discarded.
    pub tol: f64,
    /// Largest accepted gap between learning score and training plateau.
    pub tol_plateau: f64,
    /// The pick deploys when its learning score ranks within this leading
    /// fraction of the survivors.
    pub top_fraction: f64,
    pub w_v: f64,
    pub w_d: f64,
    /// Normalize `V'` within each reward function instead of across all.
    pub per_reward_cohort: bool,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        Self { alpha: 0.05, tol: 0.01, tol_plateau: 0.05, top_fraction: 0.4, w_v: 0.5, w_d: 0.5, per_reward_cohort: false }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VerdictKind {
    Deploy,
    Refine,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub reward: String,
    pub verdict: VerdictKind,
    /// The highest networking score among survivors, if any survived.
    pub agent: Option<String>,
    pub survivors: Vec<String>,
    /// `(agent, reason)` for every candidate filtered out.
    pub discarded: Vec<(String, String)>,
    pub reasons: Vec<String>,
}

fn rank_order(a: &ScoreReport, b: &ScoreReport) -> std::cmp::Ordering {
    b.networking_score
        .total_cmp(&a.networking_score)
        .then(b.learning_score.total_cmp(&a.learning_score))
        .then(a.seed.cmp(&b.seed))
}

/// Per reward function, in order of first appearance: filter, pick, verdict.
///
/// Only reports whose `algorithm` satisfies `eligible` take part. A candidate
/// survives unless its report is already marked discarded, its learning score
/// exceeds `1 + tol`, or it sits more than `tol_plateau` away from its
/// training plateau. The pick is the survivor with the highest networking
/// score; ties go to the higher learning score, then the lower seed. It is
/// deployed if its learning score ranks within the top `ceil(top_fraction * n)`
/// survivors, or if a Welch test on final-epoch performance finds its
/// algorithm significantly better than every other algorithm present.
pub fn select(reports: &[ScoreReport], cfg: &SelectionConfig, eligible: impl Fn(&str) -> bool) -> Vec<Verdict> {
    let mut rewards: Vec<&str> = Vec::new();
    for r in reports.iter().filter(|r| eligible(&r.algorithm)) {
        if !rewards.contains(&r.reward.as_str()) {
            rewards.push(&r.reward);
        }
    }
    rewards.into_iter().map(|reward| select_one(reward, reports, cfg, &eligible)).collect()
}

fn select_one(reward: &str, reports: &[ScoreReport], cfg: &SelectionConfig, eligible: &impl Fn(&str) -> bool) -> Verdict {
    let candidates: Vec<&ScoreReport> = reports.iter().filter(|r| r.reward == reward && eligible(&r.algorithm)).collect();
    let mut survivors = Vec::new();
    let mut discarded = Vec::new();
    for r in &candidates {
        let reason = if r.discarded || !r.learning_score.is_finite() || r.learning_score > 1.0 + cfg.tol {
            Some(if r.reason.is_empty() {
                format!("learning score {:.4} exceeds 1 + {}", r.learning_score, cfg.tol)
            } else {
                r.reason.clone()
            })
        } else if !((r.learning_score - r.plateau).abs() <= cfg.tol_plateau) {
            Some(format!(
                "learning score {:.4} is {:.4} away from the training plateau {:.4}",
                r.learning_score,
                (r.learning_score - r.plateau).abs(),
                r.plateau
            ))
        } else {
            None
        };
        match reason {
            Some(reason) => discarded.push((r.agent.clone(), reason)),
            None => survivors.push(*r),
        }
    }

    let mut verdict = Verdict {
        reward: reward.to_string(),
        verdict: VerdictKind::Refine,
        agent: None,
        survivors: survivors.iter().map(|r| r.agent.clone()).collect(),
        discarded,
        reasons: Vec::new(),
    };
    if survivors.is_empty() {
        verdict.reasons.push("no agent survived the filter; refine all".into());
        return verdict;
    }

    let pick = *survivors.iter().min_by(|a, b| rank_order(a, b)).expect("non-empty");
    verdict.agent = Some(pick.agent.clone());

    let mut by_learning = survivors.clone();
    by_learning.sort_by(|a, b| b.learning_score.total_cmp(&a.learning_score).then(a.seed.cmp(&b.seed)));
    let rank = by_learning.iter().position(|r| r.agent == pick.agent).expect("pick is a survivor");
    let top_k = ((cfg.top_fraction * survivors.len() as f64).ceil() as usize).max(1);
    let in_top = rank < top_k;
    if in_top {
        verdict.reasons.push(format!("learning score ranks {} of {} (top {})", rank + 1, survivors.len(), top_k));
    }

    let superior = algorithm_superior(&pick.algorithm, &candidates, cfg.alpha);
    if let Some(note) = &superior {
        verdict.reasons.push(note.clone());
    }

    if in_top || superior.is_some() {
        verdict.verdict = VerdictKind::Deploy;
    } else {
        verdict.reasons.push(format!(
            "learning score ranks {} of {} (top {}) and {} is not significantly better; refine",
            rank + 1,
            survivors.len(),
            top_k,
            pick.algorithm
        ));
    }
    verdict
}

/// `Some(description)` when `algorithm`'s final-epoch performance is higher
/// than, and significantly different from, every other algorithm's.
fn algorithm_superior(algorithm: &str, candidates: &[&ScoreReport], alpha: f64) -> Option<String> {
    let samples = |alg: &str| -> Vec<f64> {
        candidates.iter().filter(|r| r.algorithm == alg).map(|r| r.final_performance).collect()
    };
    let own = samples(algorithm);
    let mut others: Vec<&str> = candidates.iter().map(|r| r.algorithm.as_str()).filter(|a| *a != algorithm).collect();
    others.sort_unstable();
    others.dedup();
    if others.is_empty() {
        return None;
    }
    let mut notes = Vec::new();
    for other in others {
        let theirs = samples(other);
        let test = welch_t_test(&own, &theirs, alpha).ok()?;
        if !(test.significant && mean(&own) > mean(&theirs)) {
            return None;
        }
        notes.push(format!("{algorithm} > {other} (Welch p = {:.3e})", test.p_value));
    }
    Some(notes.join(", "))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn report(agent: &str, alg: &str, seed: u64, ls: f64, ns: f64, final_perf: f64) -> ScoreReport {
        ScoreReport {
            agent: agent.into(),
            algorithm: alg.into(),
            reward: "RFn1".into(),
            seed,
            learning_score: ls,
            networking_score: ns,
            plateau: ls,
            final_performance: final_perf,
            episode_length: 100,
            terminated: false,
            mean_replicas: 2.0,
            mean_latency: 0.01,
            max_latency: 0.02,
            discarded: false,
            reason: String::new(),
        }
    }

    #[test]
    fn ties_prefer_learning_then_seed() {
        let rs = vec![
            report("a", "dqn", 3, 0.8, 0.6, 0.8),
            report("b", "dqn", 1, 0.9, 0.6, 0.9),
            report("c", "dqn", 2, 0.9, 0.6, 0.9),
        ];
        let v = select(&rs, &SelectionConfig::default(), |_| true);
        assert_eq!(v[0].agent.as_deref(), Some("b"));
        assert_eq!(v[0].verdict, VerdictKind::Deploy);
    }

    #[test]
    fn plateau_gap_discards() {
        let mut r = report("a", "dqn", 1, 0.9, 0.6, 0.9);
        r.plateau = 0.5;
        let v = select(&[r], &SelectionConfig::default(), |_| true);
        assert_eq!(v[0].verdict, VerdictKind::Refine);
        assert!(v[0].discarded[0].1.contains("plateau"));
        assert_eq!(v[0].agent, None);
    }

    #[test]
    fn ineligible_algorithms_are_ignored() {
        let rs = vec![report("t", "threshold", 1, 1.0, 0.99, 1.0), report("d", "dqn", 1, 0.7, 0.5, 0.7)];
        let v = select(&rs, &SelectionConfig::default(), |a| a == "dqn");
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].agent.as_deref(), Some("d"));
    }
}
