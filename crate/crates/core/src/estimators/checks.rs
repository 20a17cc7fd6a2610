//! Statistical checks of the spine machinery: unit means of the weight
//! processes, Gibbs weights, and the split-time law.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::report::EstimateReport;
use crate::error::Result;
use crate::parallel::{replicate_rng, run_replicates, Execution};
use crate::sim_ct::{
    attach_spines, gibbs_weights, simulate_p, simulate_skeleton_q, z_process, zeta_tilde, ContinuousModel, QMode,
    SimOptions,
};
use crate::tree::{spine_probability, SpineAssignment};

/// Sample mean of `tilde zeta^k(t)` under `P^k`; the target is 1.
pub fn zeta_tilde_mean(
    model: &ContinuousModel,
    k: usize,
    t: f64,
    replicates: u64,
    seed: u64,
    exec: &Execution,
) -> Result<EstimateReport> {
    let opts = SimOptions::default();
    let clock = Instant::now();
    let samples = run_replicates(replicates, seed, exec, |rng, _| {
        let tree = simulate_p(model, t, &opts, rng)?;
        let spines = attach_spines(&tree, k, rng)?;
        zeta_tilde(&tree, &spines, model, t)
    })?;
    Ok(EstimateReport::from_samples(format!("zeta-tilde k={k} t={t}"), &samples, seed, clock.elapsed()).with_target(1.0))
}

/// Sample mean of `Z^k(t)` under `P`; the target is 1.
pub fn z_mean(
    model: &ContinuousModel,
    k: usize,
    t: f64,
    replicates: u64,
    seed: u64,
    exec: &Execution,
    tuple_cap: f64,
) -> Result<EstimateReport> {
    let opts = SimOptions::default();
    let clock = Instant::now();
    let samples = run_replicates(replicates, seed, exec, |rng, _| {
        let tree = simulate_p(model, t, &opts, rng)?;
        z_process(&tree, model, t, k, tuple_cap)
    })?;
    Ok(EstimateReport::from_samples(format!("z k={k} t={t}"), &samples, seed, clock.elapsed()).with_target(1.0))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GibbsCheck {
    pub trees: u64,
    /// Largest `|sum of Gibbs weights - 1|` over the trees.
    pub max_normalization_error: f64,
    /// Largest difference between a Gibbs weight and
    /// `tilde zeta^k(u) * spine_probability(u) / Z^k` over all tuples.
    pub max_projection_error: f64,
    pub tolerance: f64,
}

impl GibbsCheck {
    pub fn passed(&self) -> bool {
        self.max_normalization_error <= self.tolerance && self.max_projection_error <= self.tolerance
    }
}

/// Gibbs weights of `k`-tuples on simulated trees: they must sum to one, and
/// each must equal the `P^k`-conditional projection of `tilde zeta^k` onto
/// that tuple, normalized by `Z^k`. Trees with no particle alive at `t` are
/// redrawn.
pub fn gibbs_check(model: &ContinuousModel, k: usize, t: f64, trees: u64, seed: u64, tuple_cap: f64) -> Result<GibbsCheck> {
    let opts = SimOptions::default();
    let mut max_norm: f64 = 0.0;
    let mut max_proj: f64 = 0.0;
    let mut done = 0;
    let mut stream = 0;
    while done < trees {
        let mut rng = replicate_rng(seed, stream);
        stream += 1;
        let tree = simulate_p(model, t, &opts, &mut rng)?;
        let (weights, z) = gibbs_weights(&tree, model, t, k, tuple_cap)?;
        if weights.is_empty() {
            continue;
        }
        done += 1;
        let total: f64 = weights.iter().map(|w| w.1).sum();
        max_norm = max_norm.max((total - 1.0).abs());
        for (tuple, g) in &weights {
            let spines = SpineAssignment::new(tuple.clone())?;
            let projected = zeta_tilde(&tree, &spines, model, t)? * spine_probability(&tree, tuple, t)? / z;
            max_proj = max_proj.max((g - projected).abs());
        }
    }
    Ok(GibbsCheck {
        trees,
        max_normalization_error: max_norm,
        max_projection_error: max_proj,
        tolerance: 1e-10,
    })
}

/// First split time of two spines under `Q^2` for `model`, simulated to
/// `horizon`; `+inf` if the spines never split.
pub fn split_times(
    model: &ContinuousModel,
    horizon: f64,
    replicates: u64,
    seed: u64,
    exec: &Execution,
    opts: &SimOptions,
) -> Result<Vec<f64>> {
    run_replicates(replicates, seed, exec, |rng, _| {
        let q = simulate_skeleton_q(model, horizon, 2, QMode::SkeletonOnly, opts, rng)?;
        Ok(q.weighted.skeleton.split_time(0, 1))
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
    pub samples: usize,
}

impl KsResult {
    pub fn passes(&self, level: f64) -> bool {
        self.p_value > level
    }
}

/// Asymptotic Kolmogorov survival function `P(K > x)`.
fn kolmogorov_survival(x: f64) -> f64 {
    if x < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    for j in 1..=100 {
        let j = j as f64;
        let term = (-2.0 * j * j * x * x).exp();
        sum += if j as u64 % 2 == 1 { term } else { -term };
        if term < 1e-17 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// One-sample Kolmogorov-Smirnov test against `Exp(rate)`.
pub fn ks_exponential(samples: &[f64], rate: f64) -> KsResult {
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    let mut d: f64 = 0.0;
    for (i, x) in xs.iter().enumerate() {
        let cdf = if x.is_finite() { 1.0 - (-rate * x.max(0.0)).exp() } else { 1.0 };
        d = d.max((i + 1) as f64 / n - cdf).max(cdf - i as f64 / n);
    }
    let sn = n.sqrt();
    KsResult {
        statistic: d,
        p_value: kolmogorov_survival((sn + 0.12 + 0.11 / sn) * d),
        samples: xs.len(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::laws::MotionModel;
    use rand::Rng;

    #[test]
    fn kolmogorov_reference_values() {
        assert!((kolmogorov_survival(1.358) - 0.05).abs() < 1e-3);
        assert!((kolmogorov_survival(1.628) - 0.01).abs() < 1e-3);
    }

    #[test]
    fn ks_accepts_exponential_and_rejects_wrong_rate() {
        let mut rng = replicate_rng(1, 0);
        let xs: Vec<f64> = (0..5000).map(|_| -rng.random::<f64>().ln() / 2.0).collect();
        assert!(ks_exponential(&xs, 2.0).passes(0.01));
        assert!(!ks_exponential(&xs, 1.5).passes(0.01));
    }

    #[test]
    fn split_time_is_exponential_two() {
        let model = ContinuousModel::binary_bbm(MotionModel::Brownian);
        let xs = split_times(&model, 10.0, 5000, 2, &Execution::parallel(0), &SimOptions::default()).unwrap();
        assert!(ks_exponential(&xs, 2.0).passes(0.01));
    }

    #[test]
    fn gibbs_check_passes() {
        let model = ContinuousModel::binary_bbm(MotionModel::BrownianTilt { lambda: 0.5 });
        let c = gibbs_check(&model, 2, 1.0, 20, 3, 1e6).unwrap();
        assert!(c.passed(), "{c:?}");
    }

    #[test]
    fn unit_means_at_time_zero_are_exact() {
        let model = ContinuousModel::binary_bbm(MotionModel::Brownian);
        let exec = Execution::sequential();
        let a = zeta_tilde_mean(&model, 2, 0.0, 100, 1, &exec).unwrap();
        let b = z_mean(&model, 2, 0.0, 100, 1, &exec, 1e6).unwrap();
        assert_eq!((a.estimate, b.estimate), (1.0, 1.0));
        assert_eq!(a.covers_target, Some(true));
    }
}
