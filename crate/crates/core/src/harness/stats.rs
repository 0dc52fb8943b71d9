use serde::{Deserialize, Serialize};

use crate::dlp::RunRecord;

/// z for a two-sided 95% interval.
pub const Z95: f64 = 1.959_963_984_540_054;

/// Wilson score interval for `successes` out of `trials`.
pub fn wilson_interval(successes: u64, trials: u64, z: f64) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let centre = (p + z2 / (2.0 * n)) / (1.0 + z2 / n);
    let half = z / (1.0 + z2 / n) * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub trials: u64,
    pub successes: u64,
    pub success_rate: f64,
    pub wilson_low: f64,
    pub wilson_high: f64,
    pub mean_retries: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub correct_fallbacks: Option<u64>,
}

impl Summary {
    pub fn from_records(records: &[RunRecord]) -> Self {
        let trials = records.len() as u64;
        let successes = records.iter().filter(|r| r.success).count() as u64;
        let (wilson_low, wilson_high) = wilson_interval(successes, trials, Z95);
        let retries: u64 = records.iter().map(|r| r.retries as u64).sum();
        let fallbacks: Vec<bool> = records.iter().filter_map(|r| r.correct_fallback).collect();
        Self {
            trials,
            successes,
            success_rate: if trials == 0 { 0.0 } else { successes as f64 / trials as f64 },
            wilson_low,
            wilson_high,
            mean_retries: if trials == 0 { 0.0 } else { retries as f64 / trials as f64 },
            correct_fallbacks: (!fallbacks.is_empty())
                .then(|| fallbacks.iter().filter(|f| **f).count() as u64),
        }
    }
}
