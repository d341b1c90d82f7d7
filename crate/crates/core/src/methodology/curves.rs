use serde::{Deserialize, Serialize};

use super::MethodologyError;
use crate::stats::{mean, percentile, welch_t_test};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub epoch: usize,
    pub mean: f64,
    pub p10: f64,
    pub p90: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlgorithmCurve {
    pub algorithm: String,
    pub points: Vec<CurvePoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearningCurves {
    pub curves: Vec<AlgorithmCurve>,
    /// The two algorithms compared per epoch, when at least two are present.
    pub compared: Option<(String, String)>,
    /// Per epoch: whether the Welch test between `compared` is significant.
    pub significant: Vec<bool>,
}

/// Mean and 10th-90th percentile band over seeds for each algorithm.
///
/// `runs` pairs an algorithm name with one performance series per seed. The
/// first two algorithms, in input order, are compared epoch by epoch; epochs
/// where either side has fewer than two seeds are never flagged.
pub fn learning_curves(runs: &[(String, Vec<Vec<f64>>)], alpha: f64) -> Result<LearningCurves, MethodologyError> {
    let epochs = runs.iter().flat_map(|(_, seeds)| seeds.iter().map(Vec::len)).next().unwrap_or(0);
    for (alg, seeds) in runs {
        if let Some(bad) = seeds.iter().find(|s| s.len() != epochs) {
            return Err(MethodologyError::EpochMismatch(format!("{alg} has a run of {} epochs, expected {epochs}", bad.len())));
        }
    }
    let column = |seeds: &[Vec<f64>], e: usize| -> Vec<f64> { seeds.iter().map(|s| s[e]).collect() };

    let mut curves = Vec::with_capacity(runs.len());
    for (alg, seeds) in runs {
        let mut points = Vec::with_capacity(epochs);
        if !seeds.is_empty() {
            for e in 0..epochs {
                let xs = column(seeds, e);
                points.push(CurvePoint { epoch: e, mean: mean(&xs), p10: percentile(&xs, 10.0)?, p90: percentile(&xs, 90.0)? });
            }
        }
        curves.push(AlgorithmCurve { algorithm: alg.clone(), points });
    }

    let (compared, significant) = match runs {
        [(a, sa), (b, sb), ..] => {
            let flags = (0..epochs)
                .map(|e| {
                    welch_t_test(&column(sa, e), &column(sb, e), alpha).map(|r| r.significant).unwrap_or(false)
                })
                .collect();
            (Some((a.clone(), b.clone())), flags)
        }
        _ => (None, Vec::new()),
    };
    Ok(LearningCurves { curves, compared, significant })
}
