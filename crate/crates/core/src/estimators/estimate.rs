use std::time::Instant;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::report::EstimateReport;
use super::statistic::{Measurability, Statistic};
use crate::error::{Error, Result};
use crate::laws::MotionModel;
use crate::parallel::{run_replicates, Execution};
use crate::sim_ct::{many_to_few_weight, simulate_p, simulate_skeleton_q, ContinuousModel, QMode, SimOptions};
use crate::sim_dt::{many_to_few_weight_dt, simulate_p_dt, simulate_skeleton_q_dt, DiscreteModel, MomentConvention};
use crate::tree::{for_each_tuple, MarkedTree};

/// What to simulate and up to when.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "time", rename_all = "kebab-case")]
pub enum ModelSpec {
    Continuous { model: ContinuousModel, horizon: f64 },
    Discrete { model: DiscreteModel },
}

impl ModelSpec {
    fn check(&self, stat: &Statistic) -> Result<()> {
        let k = stat.arity();
        if k == 0 {
            return Err(Error::InvalidModel("statistic needs arity at least 1".into()));
        }
        if let ModelSpec::Discrete { model } = self {
            if model.k != k {
                return Err(Error::InvalidModel(format!(
                    "statistic has arity {k} but the model has k = {}",
                    model.k
                )));
            }
        }
        Ok(())
    }

    fn horizon(&self) -> f64 {
        match self {
            ModelSpec::Continuous { horizon, .. } => *horizon,
            ModelSpec::Discrete { model } => model.generations as f64,
        }
    }
}

#[derive(Clone, Debug)]
pub struct RunConfig {
    pub replicates: u64,
    pub seed: u64,
    pub exec: Execution,
    pub sim: SimOptions,
    /// Largest number of tuples enumerated for one tree.
    pub tuple_cap: f64,
    pub convention: MomentConvention,
}

impl RunConfig {
    pub fn new(replicates: u64, seed: u64) -> Self {
        RunConfig {
            replicates,
            seed,
            exec: Execution::sequential(),
            sim: SimOptions::default(),
            tuple_cap: 1e7,
            convention: MomentConvention::PerNode,
        }
    }

    pub fn with_exec(mut self, exec: Execution) -> Self {
        self.exec = exec;
        self
    }
}

/// `sum over ordered k-tuples of N(t) with zeta > 0 of Y`, for one tree.
pub fn tuple_sum(tree: &MarkedTree, t: f64, stat: &Statistic, cap: f64) -> Result<f64> {
    let mut alive = Vec::new();
    for i in tree.alive_indices(t)? {
        let s = tree.record(i).state_at(t)?;
        if s.zeta > 0.0 {
            alive.push((i, s.position));
        }
    }
    let k = stat.arity();
    if let Statistic::Factored {
        factors,
        distinct: false,
    } = stat
    {
        return Ok(factors
            .iter()
            .map(|f| alive.iter().map(|(_, y)| f.eval(*y)).sum::<f64>())
            .product());
    }
    let needed = (alive.len() as f64).powi(k as i32);
    if needed > cap {
        return Err(Error::EnumerationCap { needed, cap });
    }
    let distinct = matches!(stat, Statistic::Factored { distinct: true, .. });
    let mut total = 0.0;
    let mut positions = vec![0.0; k];
    let mut indices = vec![0usize; k];
    for_each_tuple(&alive, k, |tuple| {
        for (slot, (i, y)) in tuple.iter().enumerate() {
            indices[slot] = *i;
            positions[slot] = *y;
        }
        if distinct && !all_distinct(&indices) {
            return;
        }
        total += match stat {
            Statistic::FullTree { f, .. } => f(tree, &indices),
            _ => stat.eval_terminal(&positions).expect("spine-measurable"),
        };
    });
    Ok(total)
}

fn all_distinct<T: PartialEq>(xs: &[T]) -> bool {
    xs.iter().enumerate().all(|(i, x)| xs[..i].iter().all(|y| y != x))
}

fn direct_replicate<R: Rng + ?Sized>(spec: &ModelSpec, stat: &Statistic, cfg: &RunConfig, rng: &mut R) -> Result<f64> {
    let tree = match spec {
        ModelSpec::Continuous { model, horizon } => simulate_p(model, *horizon, &cfg.sim, rng)?,
        ModelSpec::Discrete { model } => simulate_p_dt(model, &cfg.sim, rng)?,
    };
    tuple_sum(&tree, spec.horizon(), stat, cfg.tuple_cap)
}

/// Monte Carlo mean of the `k`-fold sum over full `P` simulations.
pub fn estimate_direct(spec: &ModelSpec, stat: &Statistic, cfg: &RunConfig) -> Result<EstimateReport> {
    spec.check(stat)?;
    let clock = Instant::now();
    let samples = run_replicates(cfg.replicates, cfg.seed, &cfg.exec, |rng, _| {
        direct_replicate(spec, stat, cfg, rng)
    })?;
    Ok(EstimateReport::from_samples("direct", &samples, cfg.seed, clock.elapsed()))
}

fn spine_replicate<R: Rng + ?Sized>(spec: &ModelSpec, stat: &Statistic, cfg: &RunConfig, rng: &mut R) -> Result<f64> {
    let full = stat.measurability() == Measurability::FullTree;
    let (weight, skeleton, tree) = match spec {
        ModelSpec::Continuous { model, horizon } => {
            let mode = if full { QMode::FullTree } else { QMode::SkeletonOnly };
            let q = simulate_skeleton_q(model, *horizon, stat.arity(), mode, &cfg.sim, rng)?;
            (many_to_few_weight(&q.weighted), q.weighted.skeleton, q.tree)
        }
        ModelSpec::Discrete { model } => {
            let q = simulate_skeleton_q_dt(model, full, &cfg.sim, rng)?;
            (many_to_few_weight_dt(&q.skeleton, &model.law, cfg.convention), q.skeleton, q.tree)
        }
    };
    if weight == 0.0 {
        return Ok(0.0);
    }
    if let Statistic::Factored { distinct: true, .. } = stat {
        if !all_distinct(skeleton.carriers()) {
            return Ok(0.0);
        }
    }
    let y = match stat {
        Statistic::FullTree { f, .. } => {
            let tree = tree.expect("full-tree mode");
            let idx: Vec<usize> = skeleton
                .carriers()
                .iter()
                .map(|c| tree.index_of(c).expect("carrier in tree"))
                .collect();
            f(&tree, &idx)
        }
        _ => {
            let mut positions = Vec::with_capacity(stat.arity());
            for s in skeleton.spine_states()? {
                match s {
                    Some(s) if s.zeta > 0.0 => positions.push(s.position),
                    _ => return Ok(0.0),
                }
            }
            stat.eval_terminal(&positions).expect("spine-measurable")
        }
    };
    Ok(weight * y)
}

/// Monte Carlo mean of `weight * Y` over `Q^k` skeletons.
pub fn estimate_spine(spec: &ModelSpec, stat: &Statistic, cfg: &RunConfig) -> Result<EstimateReport> {
    spec.check(stat)?;
    let clock = Instant::now();
    let samples = run_replicates(cfg.replicates, cfg.seed, &cfg.exec, |rng, _| {
        spine_replicate(spec, stat, cfg, rng)
    })?;
    Ok(EstimateReport::from_samples("spine", &samples, cfg.seed, clock.elapsed()))
}

/// Seed offset separating the spine run from the direct run in a comparison.
pub const SPINE_SEED_OFFSET: u64 = 0x9e37_79b9_7f4a_7c15;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VarianceComparison {
    pub direct: EstimateReport,
    pub spine: EstimateReport,
    pub overlap99: bool,
    #[serde(skip)]
    pub wall_time_ratio: f64,
}

/// Runs both estimators with the same replicate budget.
pub fn compare_variance(spec: &ModelSpec, stat: &Statistic, cfg: &RunConfig) -> Result<VarianceComparison> {
    let direct = estimate_direct(spec, stat, cfg)?;
    let mut spine_cfg = cfg.clone();
    spine_cfg.seed = cfg.seed.wrapping_add(SPINE_SEED_OFFSET);
    let spine = estimate_spine(spec, stat, &spine_cfg)?;
    let ratio = direct.wall_time.as_secs_f64() / spine.wall_time.as_secs_f64().max(1e-12);
    Ok(VarianceComparison {
        overlap99: direct.overlaps99(&spine),
        direct,
        spine,
        wall_time_ratio: ratio,
    })
}

/// Monte Carlo estimate of `P(A(x, t) >= 1)` for binary branching Brownian
/// motion at rate 1, `A(x, t)` being the number of particles above `x`.
pub fn tail_probability(x: f64, t: f64, replicates: u64, seed: u64, exec: &Execution) -> Result<EstimateReport> {
    let model = ContinuousModel::binary_bbm(MotionModel::Brownian);
    let opts = SimOptions::default();
    let clock = Instant::now();
    let samples = run_replicates(replicates, seed, exec, |rng, _| {
        let tree = simulate_p(&model, t, &opts, rng)?;
        for i in tree.alive_indices(t)? {
            if tree.record(i).state_at(t)?.position > x {
                return Ok(1.0);
            }
        }
        Ok(0.0)
    })?;
    Ok(EstimateReport::from_samples(format!("tail x={x} t={t}"), &samples, seed, clock.elapsed()))
}

/// One row of the bounds table, columns in plotting order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundsRow {
    pub x: f64,
    pub t: f64,
    pub lower: f64,
    pub estimate: f64,
    pub std_error: f64,
    /// Markov bound capped at 1.
    pub upper: f64,
}

impl BoundsRow {
    /// Whether the estimate lies between the bounds with `slack` standard errors.
    pub fn sandwiched(&self, slack: f64) -> bool {
        let s = slack * self.std_error;
        self.lower <= self.estimate + s && self.estimate <= self.upper + s
    }
}

/// Bounds and a Monte Carlo estimate of `P(A(x, t) >= 1)` on a grid; the
/// cell at position `i` uses replicate seed `seed + i`.
pub fn bounds_table(xs: &[f64], ts: &[f64], replicates: u64, seed: u64, exec: &Execution) -> Result<Vec<BoundsRow>> {
    let mut rows = Vec::with_capacity(xs.len() * ts.len());
    for &t in ts {
        for &x in xs {
            let cell_seed = seed.wrapping_add(rows.len() as u64);
            let mc = tail_probability(x, t, replicates, cell_seed, exec)?;
            rows.push(BoundsRow {
                x,
                t,
                lower: super::closed_form::tail_lower_bound(x, t)?,
                estimate: mc.estimate,
                std_error: mc.std_error,
                upper: super::closed_form::tail_upper_bound(x, t)?.min(1.0),
            });
        }
    }
    Ok(rows)
}

