use serde::{Deserialize, Serialize};

use super::MethodologyError;
use crate::rewards::{normalize_return, RewardSpec};

/// Normalized accumulated reward over normalized episode length.
///
/// The reward is normalized with the range of a `full_len`-step episode even
/// when the agent terminated earlier, which pushes the score above 1 for short
/// episodes. A zero-length episode scores `+inf`.
pub fn learning_score(
    accumulated_reward: f64,
    episode_length: usize,
    spec: &RewardSpec,
    full_len: usize,
) -> Result<f64, MethodologyError> {
    if episode_length == 0 {
        return Ok(f64::INFINITY);
    }
    let reward = normalize_return(accumulated_reward, spec, full_len)?;
    Ok(reward / (episode_length as f64 / full_len as f64))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NetworkingInputs {
    pub mean_replicas: f64,
    pub mean_latency: f64,
    pub max_latency: f64,
}

/// `w_v V' + w_d D'` for `agent`, with `V'` the inverse min-max position of its
/// mean replica count within `cohort` and `D'` its mean latency over its own
/// maximum.
///
/// An empty cohort, or one whose replica means are all equal, gives `V' = 1`; an agent whose
/// maximum latency is zero gives `D' = 1`.
pub fn networking_score(agent: &NetworkingInputs, cohort: &[NetworkingInputs], w_v: f64, w_d: f64) -> f64 {
    let lo = cohort.iter().map(|x| x.mean_replicas).fold(f64::INFINITY, f64::min);
    let hi = cohort.iter().map(|x| x.mean_replicas).fold(f64::NEG_INFINITY, f64::max);
    let v_prime = if hi > lo { 1.0 - (agent.mean_replicas - lo) / (hi - lo) } else { 1.0 };
    let d_prime = if agent.max_latency > 0.0 { agent.mean_latency / agent.max_latency } else { 1.0 };
    w_v * v_prime + w_d * d_prime
}

/// JSON has no infinities or NaN; those are written as the strings `inf`,
/// `-inf` and `nan`.
mod nonfinite {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
        if x.is_finite() {
            s.serialize_f64(*x)
        } else if x.is_nan() {
            s.serialize_str("nan")
        } else if *x > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_str("-inf")
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(x) => Ok(x),
            Repr::Text(t) => match t.as_str() {
                "inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                "nan" => Ok(f64::NAN),
                other => Err(serde::de::Error::custom(format!("expected a number, got `{other}`"))),
            },
        }
    }
}

/// Validation outcome and scores of one agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub agent: String,
    pub algorithm: String,
    pub reward: String,
    pub seed: u64,
    #[serde(with = "nonfinite")]
    pub learning_score: f64,
    #[serde(with = "nonfinite")]
    pub networking_score: f64,
    /// Mean of the last three epochs' evaluation performance.
    #[serde(with = "nonfinite")]
    pub plateau: f64,
    /// Final-epoch evaluation performance.
    #[serde(with = "nonfinite")]
    pub final_performance: f64,
    pub episode_length: usize,
    pub terminated: bool,
    pub mean_replicas: f64,
    pub mean_latency: f64,
    pub max_latency: f64,
    /// Set when the learning score exceeds `1 + tol` (or is not finite).
    pub discarded: bool,
    pub reason: String,
}

impl ScoreReport {
    pub fn networking_inputs(&self) -> NetworkingInputs {
        NetworkingInputs { mean_replicas: self.mean_replicas, mean_latency: self.mean_latency, max_latency: self.max_latency }
    }

    fn exceeds(&self, tol: f64) -> bool {
        !self.learning_score.is_finite() || self.learning_score > 1.0 + tol
    }
}

/// Marks discards and fills in networking scores.
///
/// The cohort for `V'` is every non-discarded report with `in_cohort` set,
/// restricted to the same reward function when `per_reward` is set. If that
/// cohort is empty the reports themselves are used.
pub fn score_reports(reports: &mut [ScoreReport], in_cohort: impl Fn(&ScoreReport) -> bool, tol: f64, w_v: f64, w_d: f64, per_reward: bool) {
    for r in reports.iter_mut() {
        r.discarded = r.exceeds(tol);
        r.reason = if r.discarded {
            format!("learning score {:.4} exceeds 1 + {tol}", r.learning_score)
        } else {
            String::new()
        };
    }
    let snapshot: Vec<ScoreReport> = reports.to_vec();
    for r in reports.iter_mut() {
        let pick = |x: &&ScoreReport| !per_reward || x.reward == r.reward;
        let mut cohort: Vec<NetworkingInputs> =
            snapshot.iter().filter(pick).filter(|x| !x.discarded && in_cohort(x)).map(ScoreReport::networking_inputs).collect();
        if cohort.is_empty() {
            cohort = snapshot.iter().filter(pick).map(ScoreReport::networking_inputs).collect();
        }
        r.networking_score = networking_score(&r.networking_inputs(), &cohort, w_v, w_d);
    }
}
