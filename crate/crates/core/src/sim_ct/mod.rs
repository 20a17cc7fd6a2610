//! Continuous-time branching: full trees under `P`, spines under `P^k`,
//! skeletons under `Q^k`, and the weight processes built on them.

mod weights;

use rand::Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::laws::{BranchRate, MotionModel, OffspringLaw};
use crate::tree::{
    MarkedTree, MotionState, ParticleLabel, ParticleRecord, PathPoint, SkeletonRealization, SpineAssignment,
};

pub use weights::{gibbs_weights, rate_integral, tuple_weight, z_process, zeta_tilde, TupleWeights};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContinuousModel {
    pub motion: MotionModel,
    pub rate: BranchRate,
    pub law: OffspringLaw,
    pub origin: f64,
}

impl ContinuousModel {
    /// Binary branching Brownian motion from 0 at rate 1 with the given motion preset.
    pub fn binary_bbm(motion: MotionModel) -> Self {
        ContinuousModel {
            motion,
            rate: BranchRate::constant(1.0).expect("valid rate"),
            law: OffspringLaw::point_mass(2),
            origin: 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimOptions {
    /// Maximum number of particles in one realization.
    pub population_cap: usize,
    /// Grid step for thinning and rate quadrature when `R` is not constant.
    /// Defaults to `horizon / 1000`.
    pub quad_step: Option<f64>,
    /// Extra times at which every living particle's state is recorded.
    pub record_times: Vec<f64>,
    /// Diagnostic: spine particles branch at `R` instead of `m^j R`.
    pub unsound_spine_rate: bool,
}

impl Default for SimOptions {
    fn default() -> Self {
        SimOptions {
            population_cap: 1_000_000,
            quad_step: None,
            record_times: Vec::new(),
            unsound_spine_rate: false,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QMode {
    SkeletonOnly,
    FullTree,
}

/// A `Q^k` skeleton with the two factors of its many-to-few weight.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightedSkeleton {
    pub skeleton: SkeletonRealization,
    /// Product over skeleton particles of `zeta(sigma_v(t)) / zeta(tau_v(t))`.
    pub zeta_ratio_product: f64,
    /// Product over skeleton particles of `exp(int (m^{D(v)} - 1) R ds)`.
    pub rate_integral_product: f64,
}

#[derive(Clone, Debug)]
pub struct QRealization {
    pub weighted: WeightedSkeleton,
    /// Whole tree (skeleton plus `P`-distributed side branches) in full-tree mode.
    pub tree: Option<MarkedTree>,
}

/// The many-to-few weight of a `Q^k` skeleton.
pub fn many_to_few_weight(ws: &WeightedSkeleton) -> f64 {
    let w = ws.zeta_ratio_product * ws.rate_integral_product;
    if w.is_finite() {
        w
    } else {
        0.0
    }
}

struct Grid {
    record: Vec<f64>,
    step: Option<f64>,
}

impl Grid {
    fn new(rate: &BranchRate, horizon: f64, opts: &SimOptions) -> Result<Self> {
        let mut record: Vec<f64> = opts
            .record_times
            .iter()
            .copied()
            .filter(|t| *t > 0.0 && *t < horizon)
            .collect();
        record.sort_by(f64::total_cmp);
        let step = match rate.constant_value() {
            Some(_) => None,
            None => {
                let h = opts.quad_step.unwrap_or(horizon / 1000.0);
                if !(h > 0.0) {
                    return Err(Error::InvalidModel(format!("quadrature step {h} must be positive")));
                }
                Some(h)
            }
        };
        Ok(Grid { record, step })
    }

    /// Next grid time strictly after `t`.
    fn after(&self, t: f64) -> f64 {
        let rec = self
            .record
            .get(self.record.partition_point(|r| *r <= t))
            .copied()
            .unwrap_or(f64::INFINITY);
        let quad = match self.step {
            Some(h) => {
                let mut next = ((t / h).floor() + 1.0) * h;
                if next <= t {
                    next += h;
                }
                next
            }
            None => f64::INFINITY,
        };
        rec.min(quad)
    }
}

struct Life {
    path: Vec<PathPoint>,
    death: Option<f64>,
}

/// Moves one particle from `birth` until it branches or reaches `horizon`.
/// Branch events occur at rate `mult * R(position)`.
#[allow(clippy::too_many_arguments)]
fn live<R: Rng + ?Sized>(
    rng: &mut R,
    model: &ContinuousModel,
    tilted: bool,
    mult: f64,
    birth: f64,
    state: MotionState,
    horizon: f64,
    grid: &Grid,
) -> Life {
    let mut path = vec![PathPoint { time: birth, state }];
    let mut cur = birth;
    let mut s = state;
    let advance = |rng: &mut R, to: f64, path: &mut Vec<PathPoint>, cur: &mut f64, s: &mut MotionState| {
        loop {
            let g = grid.after(*cur);
            let target = if g < to { g } else { to };
            let dt = target - *cur;
            *s = if tilted {
                model.motion.step_q(rng, *s, dt)
            } else {
                model.motion.step_p(rng, *s, dt)
            };
            *cur = target;
            path.push(PathPoint { time: target, state: *s });
            if target >= to {
                break;
            }
        }
    };

    match model.rate.constant_value() {
        Some(r) => {
            let total = mult * r;
            let clock = if total > 0.0 {
                birth + Exp::new(total).expect("positive rate").sample(rng)
            } else {
                f64::INFINITY
            };
            let end = clock.min(horizon);
            advance(rng, end, &mut path, &mut cur, &mut s);
            Life {
                path,
                death: (clock < horizon).then_some(clock),
            }
        }
        None => {
            let bound = mult * model.rate.max();
            loop {
                let proposal = if bound > 0.0 {
                    cur + Exp::new(bound).expect("positive bound").sample(rng)
                } else {
                    f64::INFINITY
                };
                let target = proposal.min(horizon);
                advance(rng, target, &mut path, &mut cur, &mut s);
                if proposal >= horizon {
                    return Life { path, death: None };
                }
                let accept = mult * model.rate.eval(s.position) / bound;
                if rng.random::<f64>() < accept {
                    return Life {
                        path,
                        death: Some(proposal),
                    };
                }
            }
        }
    }
}

fn explosion(count: usize, time: f64, cap: usize) -> Error {
    Error::Explosion {
        particles: count,
        time,
        cap,
    }
}

struct Pending {
    label: ParticleLabel,
    birth: f64,
    state: MotionState,
    marks: Vec<usize>,
}

/// Grows `P`-distributed subtrees from every pending particle.
#[allow(clippy::too_many_arguments)]
fn grow_p<R: Rng + ?Sized>(
    rng: &mut R,
    model: &ContinuousModel,
    horizon: f64,
    opts: &SimOptions,
    grid: &Grid,
    stack: &mut Vec<Pending>,
    records: &mut Vec<ParticleRecord>,
    already: usize,
) -> Result<()> {
    while let Some(p) = stack.pop() {
        let count = already + records.len() + stack.len() + 1;
        if count > opts.population_cap {
            return Err(explosion(count, p.birth, opts.population_cap));
        }
        let life = live(rng, model, false, 1.0, p.birth, p.state, horizon, grid);
        let end = life.path.last().expect("nonempty path").state;
        let (death, children) = match life.death {
            Some(d) => {
                let a = model.law.sample(rng);
                for j in (1..=a as u32).rev() {
                    stack.push(Pending {
                        label: p.label.child(j),
                        birth: d,
                        state: end,
                        marks: Vec::new(),
                    });
                }
                (d, Some(a as u32))
            }
            None => (f64::INFINITY, None),
        };
        records.push(ParticleRecord {
            label: p.label,
            birth: p.birth,
            death,
            children,
            path: life.path,
        });
    }
    Ok(())
}

/// Simulates the branching process under `P_x` up to `horizon`.
pub fn simulate_p<R: Rng + ?Sized>(
    model: &ContinuousModel,
    horizon: f64,
    opts: &SimOptions,
    rng: &mut R,
) -> Result<MarkedTree> {
    if !(horizon >= 0.0 && horizon.is_finite()) {
        return Err(Error::InvalidModel(format!("horizon {horizon} must be finite and nonnegative")));
    }
    let start = model.motion.initial_state(model.origin)?;
    let grid = Grid::new(&model.rate, horizon, opts)?;
    let mut stack = vec![Pending {
        label: ParticleLabel::root(),
        birth: 0.0,
        state: start,
        marks: Vec::new(),
    }];
    let mut records = Vec::new();
    grow_p(rng, model, horizon, opts, &grid, &mut stack, &mut records, 0)?;
    MarkedTree::from_records(records, horizon, model.origin)
}

/// Lets `k` marks follow uniformly chosen children at every branch event,
/// realizing `P^k` given the tree.
pub fn attach_spines<R: Rng + ?Sized>(tree: &MarkedTree, k: usize, rng: &mut R) -> Result<SpineAssignment> {
    let terminals = (0..k)
        .map(|_| {
            let mut idx = tree.root_index();
            loop {
                let kids = tree.children_of(idx);
                if kids.is_empty() {
                    break;
                }
                idx = kids[rng.random_range(0..kids.len())];
            }
            tree.record(idx).label.clone()
        })
        .collect();
    SpineAssignment::new(terminals)
}

/// Simulates `k` spines under `Q^k_x` up to `horizon`.
///
/// A particle carrying `j` marks moves under the tilted dynamics (once,
/// whatever `j` is), branches at rate `m^j R`, and has a `j`-size-biased number
/// of children among which each mark picks one uniformly. Unmarked children are
/// dropped in skeleton-only mode and grown as independent `P` subtrees in
/// full-tree mode.
pub fn simulate_skeleton_q<R: Rng + ?Sized>(
    model: &ContinuousModel,
    horizon: f64,
    k: usize,
    mode: QMode,
    opts: &SimOptions,
    rng: &mut R,
) -> Result<QRealization> {
    if k == 0 {
        return Err(Error::InvalidModel("need at least one spine".into()));
    }
    if !(horizon >= 0.0 && horizon.is_finite()) {
        return Err(Error::InvalidModel(format!("horizon {horizon} must be finite and nonnegative")));
    }
    let start = model.motion.initial_state(model.origin)?;
    let grid = Grid::new(&model.rate, horizon, opts)?;
    let moments: Vec<f64> = (0..=k as u32).map(|j| model.law.moment(j)).collect();
    let biased = (1..=k as u32)
        .map(|j| model.law.size_bias(j))
        .collect::<Result<Vec<_>>>()?;

    let mut skeleton: Vec<ParticleRecord> = Vec::new();
    let mut side: Vec<ParticleRecord> = Vec::new();
    let mut side_stack: Vec<Pending> = Vec::new();
    let mut carriers = vec![ParticleLabel::root(); k];
    let mut zeta_ratio = 1.0;
    let mut log_rate = 0.0;
    let mut stack = vec![Pending {
        label: ParticleLabel::root(),
        birth: 0.0,
        state: start,
        marks: (0..k).collect(),
    }];

    while let Some(p) = stack.pop() {
        let count = skeleton.len() + side.len() + stack.len() + side_stack.len() + 1;
        if count > opts.population_cap {
            return Err(explosion(count, p.birth, opts.population_cap));
        }
        let j = p.marks.len();
        let mult = if opts.unsound_spine_rate { 1.0 } else { moments[j] };
        let life = live(rng, model, true, mult, p.birth, p.state, horizon, &grid);
        let end = life.path.last().expect("nonempty path").state;
        let end_time = life.death.unwrap_or(horizon);
        if end.zeta > 0.0 && zeta_ratio > 0.0 {
            zeta_ratio *= p.state.zeta / end.zeta;
        } else {
            zeta_ratio = 0.0;
        }
        log_rate += (moments[j] - 1.0) * rate_integral(&model.rate, &life.path, p.birth, end_time);

        let children = match life.death {
            Some(d) => {
                let a = biased[j - 1].sample(rng);
                let mut groups: Vec<Vec<usize>> = vec![Vec::new(); a];
                for &mark in &p.marks {
                    groups[rng.random_range(0..a)].push(mark);
                }
                for (c, marks) in groups.into_iter().enumerate().rev() {
                    let label = p.label.child(c as u32 + 1);
                    let pending = Pending {
                        label,
                        birth: d,
                        state: end,
                        marks,
                    };
                    if !pending.marks.is_empty() {
                        stack.push(pending);
                    } else if mode == QMode::FullTree {
                        side_stack.push(pending);
                    }
                }
                Some(a as u32)
            }
            None => {
                for &mark in &p.marks {
                    carriers[mark] = p.label.clone();
                }
                None
            }
        };
        skeleton.push(ParticleRecord {
            label: p.label,
            birth: p.birth,
            death: life.death.unwrap_or(f64::INFINITY),
            children,
            path: life.path,
        });
    }

    let tree = match mode {
        QMode::SkeletonOnly => None,
        QMode::FullTree => {
            let already = skeleton.len();
            grow_p(rng, model, horizon, opts, &grid, &mut side_stack, &mut side, already)?;
            let mut all = skeleton.clone();
            all.append(&mut side);
            Some(MarkedTree::from_records(all, horizon, model.origin)?)
        }
    };
    let skeleton = SkeletonRealization::from_nodes(horizon, skeleton, carriers)?;
    Ok(QRealization {
        weighted: WeightedSkeleton {
            skeleton,
            zeta_ratio_product: zeta_ratio,
            rate_integral_product: log_rate.exp(),
        },
        tree,
    })
}

#[cfg(test)]
mod tests;
