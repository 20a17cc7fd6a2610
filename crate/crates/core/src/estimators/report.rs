use std::time::Duration;

use serde::{Deserialize, Serialize};

pub const Z95: f64 = 1.959_963_984_540_054;
pub const Z99: f64 = 2.575_829_303_548_900_4;

/// Slack applied when checking coverage of a degenerate (zero-width) interval.
const COVER_SLACK: f64 = 1e-12;

/// Monte Carlo estimate with normal-approximation confidence intervals.
///
/// Wall time is kept out of serialized output so reports are reproducible
/// byte for byte.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub label: String,
    pub estimate: f64,
    pub std_error: f64,
    pub ci95: [f64; 2],
    pub ci99: [f64; 2],
    pub replicates: u64,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub target: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub covers_target: Option<bool>,
    #[serde(skip)]
    pub wall_time: Duration,
}

impl EstimateReport {
    /// Summarizes samples in order (Welford), so equal inputs give equal bits.
    pub fn from_samples(label: impl Into<String>, samples: &[f64], seed: u64, wall_time: Duration) -> Self {
        let mut mean = 0.0;
        let mut m2 = 0.0;
        for (i, x) in samples.iter().enumerate() {
            let delta = x - mean;
            mean += delta / (i + 1) as f64;
            m2 += delta * (x - mean);
        }
        let n = samples.len();
        let var = if n > 1 { m2 / (n - 1) as f64 } else { 0.0 };
        let se = if n > 0 { (var / n as f64).sqrt() } else { f64::NAN };
        EstimateReport {
            label: label.into(),
            estimate: mean,
            std_error: se,
            ci95: [mean - Z95 * se, mean + Z95 * se],
            ci99: [mean - Z99 * se, mean + Z99 * se],
            replicates: n as u64,
            seed,
            target: None,
            covers_target: None,
            wall_time,
        }
    }

    /// Records `target` and whether the 99% interval covers it.
    pub fn with_target(mut self, target: f64) -> Self {
        self.covers_target = Some(self.covers99(target));
        self.target = Some(target);
        self
    }

    pub fn covers99(&self, x: f64) -> bool {
        let slack = COVER_SLACK * x.abs().max(1.0);
        self.ci99[0] - slack <= x && x <= self.ci99[1] + slack
    }

    pub fn covers95(&self, x: f64) -> bool {
        let slack = COVER_SLACK * x.abs().max(1.0);
        self.ci95[0] - slack <= x && x <= self.ci95[1] + slack
    }

    pub fn overlaps99(&self, other: &EstimateReport) -> bool {
        let slack = COVER_SLACK * self.estimate.abs().max(other.estimate.abs()).max(1.0);
        self.ci99[0] <= other.ci99[1] + slack && other.ci99[0] <= self.ci99[1] + slack
    }

    pub const CSV_HEADER: &'static str = "label,estimate,std_error,ci95_lo,ci95_hi,ci99_lo,ci99_hi,replicates,seed,target,covers_target";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{}",
            self.label,
            self.estimate,
            self.std_error,
            self.ci95[0],
            self.ci95[1],
            self.ci99[0],
            self.ci99[1],
            self.replicates,
            self.seed,
            self.target.map_or(String::new(), |t| t.to_string()),
            self.covers_target.map_or(String::new(), |c| c.to_string()),
        )
    }
}
