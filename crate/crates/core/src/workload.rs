//! Seeded job-arrival traces.
//!
//! The generator draws from ChaCha8 (`rand_chacha::ChaCha8Rng`) seeded with
//! `seed_from_u64(seed)`. For every slot, in order, it draws two uniforms for a
//! Box-Muller normal sample followed by one uniform for the burst decision, so a
//! trace can be regenerated from its config in any language that has ChaCha8:
//!
//! ```text
//! arrivals(t) = round(max(0, base + (peak - base) * 0.5 * (1 - cos(2*pi*t / period)) * weekday(t)
//!                            + noise_std * N(0, 1) + burst(t)))
//! weekday(t)  = 1.0 on days 0..=4 of each 7-day cycle, 0.7 on days 5 and 6
//! burst(t)    = burst_magnitude with probability burst_rate, else 0
//! ```

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_HORIZON: usize = 604_800;
pub const DEFAULT_TRAIN_LEN: usize = 432_000;
pub const DEFAULT_PERIOD: usize = 86_400;

const WEEKEND_FACTOR: f64 = 0.7;

#[derive(Debug, Error)]
pub enum WorkloadError {
    #[error("invalid workload config: {0}")]
    InvalidConfig(String),
    #[error("split point {train_len} outside (0, {len})")]
    SplitOutOfRange { train_len: usize, len: usize },
    #[error("trace csv line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorkloadConfig {
    pub horizon_slots: usize,
    /// Leading slots used for training; the rest is the evaluation split.
    pub train_len: usize,
    pub base_level: f64,
    pub peak_level: f64,
    pub diurnal_period: usize,
    pub noise_std: f64,
    pub burst_rate: f64,
    pub burst_magnitude: f64,
    pub seed: u64,
}

impl Default for WorkloadConfig {
    fn default() -> Self {
        Self {
            horizon_slots: DEFAULT_HORIZON,
            train_len: DEFAULT_TRAIN_LEN,
            base_level: 12.0,
            peak_level: 55.0,
            diurnal_period: DEFAULT_PERIOD,
            noise_std: 3.0,
            burst_rate: 0.001,
            burst_magnitude: 20.0,
            seed: 7,
        }
    }
}

impl WorkloadConfig {
    pub fn eval_len(&self) -> usize {
        self.horizon_slots.saturating_sub(self.train_len)
    }

    pub fn validate(&self) -> Result<(), WorkloadError> {
        let bad = |m: &str| Err(WorkloadError::InvalidConfig(m.to_string()));
        if self.horizon_slots == 0 {
            return bad("horizon_slots must be positive");
        }
        if self.train_len == 0 || self.train_len >= self.horizon_slots {
            return bad("train_len must lie strictly inside the horizon");
        }
        if self.diurnal_period == 0 {
            return bad("diurnal_period must be positive");
        }
        if !(self.base_level.is_finite() && self.base_level >= 0.0) {
            return bad("base_level must be finite and non-negative");
        }
        if !(self.peak_level.is_finite() && self.peak_level >= self.base_level) {
            return bad("peak_level must be finite and >= base_level");
        }
        if !(self.noise_std.is_finite() && self.noise_std >= 0.0) {
            return bad("noise_std must be finite and non-negative");
        }
        if !(0.0..=1.0).contains(&self.burst_rate) {
            return bad("burst_rate must be a probability");
        }
        if !self.burst_magnitude.is_finite() {
            return bad("burst_magnitude must be finite");
        }
        Ok(())
    }

    /// Noise-free, burst-free level at slot `t` before rounding.
    pub fn mean_level(&self, t: usize) -> f64 {
        let phase = 2.0 * PI * (t % self.diurnal_period) as f64 / self.diurnal_period as f64;
        let diurnal = 0.5 * (1.0 - phase.cos());
        self.base_level + (self.peak_level - self.base_level) * diurnal * self.weekday_factor(t)
    }

    pub fn weekday_factor(&self, t: usize) -> f64 {
        match (t / self.diurnal_period) % 7 {
            5 | 6 => WEEKEND_FACTOR,
            _ => 1.0,
        }
    }
}

/// Per-slot job arrival counts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WorkloadTrace {
    arrivals: Vec<u32>,
}

impl WorkloadTrace {
    pub fn new(arrivals: Vec<u32>) -> Self {
        Self { arrivals }
    }

    pub fn arrivals(&self) -> &[u32] {
        &self.arrivals
    }

    pub fn len(&self) -> usize {
        self.arrivals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.arrivals.is_empty()
    }

    pub fn get(&self, slot: usize) -> Option<u32> {
        self.arrivals.get(slot).copied()
    }

    pub fn into_inner(self) -> Vec<u32> {
        self.arrivals
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let mut buf = String::with_capacity(self.arrivals.len() * 10 + 16);
        buf.push_str("slot,arrivals\n");
        for (slot, a) in self.arrivals.iter().enumerate() {
            let _ = writeln!(buf, "{slot},{a}");
        }
        out.write_all(buf.as_bytes())
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self, WorkloadError> {
        let reader = BufReader::new(input);
        let mut arrivals = Vec::new();
        let mut header_seen = false;
        for (idx, line) in reader.lines().enumerate() {
            let line = line?;
            let lineno = idx + 1;
            if !header_seen && line.starts_with('#') {
                continue;
            }
            if !header_seen {
                header_seen = true;
                if line.trim() != "slot,arrivals" {
                    return Err(WorkloadError::Parse {
                        line: lineno,
                        message: "expected header `slot,arrivals`".into(),
                    });
                }
                continue;
            }
            if line.trim().is_empty() {
                continue;
            }
            let parse_err = |message: String| WorkloadError::Parse { line: lineno, message };
            let (slot, count) = line
                .split_once(',')
                .ok_or_else(|| parse_err("missing comma".into()))?;
            let slot: usize = slot.trim().parse().map_err(|e| parse_err(format!("slot: {e}")))?;
            if slot != arrivals.len() {
                return Err(parse_err(format!("expected slot {}, found {slot}", arrivals.len())));
            }
            let count: u32 = count
                .trim()
                .parse()
                .map_err(|e| parse_err(format!("arrivals: {e}")))?;
            arrivals.push(count);
        }
        Ok(Self { arrivals })
    }
}

fn standard_normal(rng: &mut ChaCha8Rng) -> f64 {
    // 1 - u keeps the log argument in (0, 1].
    let u1 = 1.0 - rng.random::<f64>();
    let u2 = rng.random::<f64>();
    (-2.0 * u1.ln()).sqrt() * (2.0 * PI * u2).cos()
}

pub fn generate(config: &WorkloadConfig) -> Result<WorkloadTrace, WorkloadError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let arrivals = (0..config.horizon_slots)
        .map(|t| {
            let noise = standard_normal(&mut rng) * config.noise_std;
            let burst = if rng.random::<f64>() < config.burst_rate {
                config.burst_magnitude
            } else {
                0.0
            };
            let level = config.mean_level(t) + noise + burst;
            level.max(0.0).round() as u32
        })
        .collect();
    Ok(WorkloadTrace { arrivals })
}

/// Splits into the leading `train_len` slots and the remainder.
pub fn split(trace: &WorkloadTrace, train_len: usize) -> Result<(WorkloadTrace, WorkloadTrace), WorkloadError> {
    let len = trace.len();
    if train_len == 0 || train_len >= len {
        return Err(WorkloadError::SplitOutOfRange { train_len, len });
    }
    let (head, tail) = trace.arrivals.split_at(train_len);
    Ok((WorkloadTrace::new(head.to_vec()), WorkloadTrace::new(tail.to_vec())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn flat(level: f64, horizon: usize) -> WorkloadConfig {
        WorkloadConfig {
            horizon_slots: horizon,
            train_len: horizon / 2,
            base_level: level,
            peak_level: level,
            noise_std: 0.0,
            burst_rate: 0.0,
            ..WorkloadConfig::default()
        }
    }

    #[test]
    fn default_trace_has_full_horizon() {
        let trace = generate(&WorkloadConfig::default()).unwrap();
        assert_eq!(trace.len(), 604_800);
        let (train, eval) = split(&trace, DEFAULT_TRAIN_LEN).unwrap();
        assert_eq!(train.len(), 432_000);
        assert_eq!(eval.len(), 172_800);
    }

    #[test]
    fn constant_generator() {
        let trace = generate(&flat(100.0, 1000)).unwrap();
        assert!(trace.arrivals().iter().all(|&a| a == 100));
    }

    #[test]
    fn same_seed_same_trace() {
        let cfg = WorkloadConfig { horizon_slots: 20_000, train_len: 10_000, ..Default::default() };
        assert_eq!(generate(&cfg).unwrap(), generate(&cfg).unwrap());
        let other = WorkloadConfig { seed: 8, ..cfg.clone() };
        assert_ne!(generate(&cfg).unwrap(), generate(&other).unwrap());
    }

    #[test]
    fn rejects_bad_configs() {
        let inverted = WorkloadConfig { base_level: 10.0, peak_level: 5.0, ..Default::default() };
        assert!(matches!(generate(&inverted), Err(WorkloadError::InvalidConfig(_))));
        let empty = WorkloadConfig { horizon_slots: 0, train_len: 0, ..Default::default() };
        assert!(matches!(generate(&empty), Err(WorkloadError::InvalidConfig(_))));
    }

    #[test]
    fn daily_means_stay_in_envelope() {
        let cfg = WorkloadConfig::default();
        let trace = generate(&cfg).unwrap();
        for day in trace.arrivals().chunks(cfg.diurnal_period) {
            let mean = day.iter().map(|&a| a as f64).sum::<f64>() / day.len() as f64;
            assert!(mean >= cfg.base_level && mean <= cfg.peak_level, "day mean {mean}");
        }
    }

    #[test]
    fn noise_free_weekdays_are_periodic() {
        // The weekend dip breaks day-over-day correlation, so measure over the five weekdays.
        let cfg = WorkloadConfig {
            horizon_slots: 5 * DEFAULT_PERIOD,
            train_len: 4 * DEFAULT_PERIOD,
            noise_std: 0.0,
            burst_rate: 0.0,
            ..Default::default()
        };
        let xs: Vec<f64> = generate(&cfg).unwrap().arrivals().iter().map(|&a| a as f64).collect();
        let lag = cfg.diurnal_period;
        let (a, b) = (&xs[..xs.len() - lag], &xs[lag..]);
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        let (ma, mb) = (mean(a), mean(b));
        let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
        let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
        let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
        let r = cov / (va * vb).sqrt();
        assert!(r >= 0.99, "autocorrelation {r}");
    }

    #[test]
    fn split_bounds() {
        let t = WorkloadTrace::new((0..10).collect());
        let (a, b) = split(&t, 5).unwrap();
        assert_eq!((a.len(), b.len()), (5, 5));
        assert!(split(&t, 0).is_err());
        assert!(split(&t, 10).is_err());
    }

    #[test]
    fn csv_round_trip_and_header_check() {
        let t = generate(&flat(3.0, 50)).unwrap();
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        assert!(buf.starts_with(b"slot,arrivals\n0,3\n"));
        assert_eq!(WorkloadTrace::read_csv(&buf[..]).unwrap(), t);
        assert!(WorkloadTrace::read_csv(&b"t,a\n0,1\n"[..]).is_err());
        let commented = WorkloadTrace::read_csv(&b"# config_hash=ab\nslot,arrivals\n0,4\n"[..]).unwrap();
        assert_eq!(commented.arrivals(), &[4]);
    }

    proptest! {
        #[test]
        fn split_is_a_partition(v in prop::collection::vec(0u32..500, 2..200), cut in 1usize..199) {
            prop_assume!(cut < v.len());
            let t = WorkloadTrace::new(v.clone());
            let (a, b) = split(&t, cut).unwrap();
            prop_assert_eq!(a.len(), cut);
            let mut joined = a.into_inner();
            joined.extend(b.into_inner());
            prop_assert_eq!(joined, v);
        }
    }
}
