//! Discrete-time branching: Galton-Watson trees whose particles carry a
//! finite-chain state, the `Q^k` spine skeleton, its weight, and exact
//! enumeration oracles for both sides of the discrete many-to-few identity.
//!
//! Particle `u` lives on `[|u|, |u| + 1)`; generation-`n` particles are alive
//! at the horizon. Each record's path is a single point holding the chain
//! state and the running value of `zeta` at birth.

mod oracle;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::laws::{ChainKind, FiniteChain, OffspringLaw};
use crate::sim_ct::SimOptions;
use crate::tree::{MarkedTree, MotionState, ParticleLabel, ParticleRecord, PathPoint, SkeletonRealization};

pub use oracle::{
    builtin_grid, oracle_lhs, oracle_rhs, run_grid, GridCase, GridResult, GridStatus, SpineStatistic,
    ORACLE_BUDGET, ORACLE_TOL,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscreteModel {
    pub chain: FiniteChain,
    pub law: OffspringLaw,
    pub generations: usize,
    pub k: usize,
    pub initial_state: usize,
}

impl DiscreteModel {
    pub fn new(chain: FiniteChain, law: OffspringLaw, generations: usize, k: usize, initial_state: usize) -> Result<Self> {
        if chain.kind() != ChainKind::Transition {
            return Err(Error::InvalidModel("discrete time needs a transition matrix".into()));
        }
        if generations == 0 {
            return Err(Error::InvalidModel("need at least one generation".into()));
        }
        if k == 0 {
            return Err(Error::InvalidModel("need at least one spine".into()));
        }
        chain.check_state(initial_state as f64)?;
        Ok(DiscreteModel {
            chain,
            law,
            generations,
            k,
            initial_state,
        })
    }

    fn horizon(&self) -> f64 {
        self.generations as f64
    }
}

/// How the offspring-moment factor enters the discrete weight.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MomentConvention {
    /// One factor `m^{D(v)}` per skeleton node below the horizon.
    PerNode,
    /// Diagnostic: one factor `m^{D(p(v))}` per skeleton edge, which counts a
    /// node once per spine-carrying child.
    PerEdge,
}

#[derive(Clone, Debug)]
pub struct DiscreteQRealization {
    pub skeleton: SkeletonRealization,
    pub tree: Option<MarkedTree>,
}

fn record(label: ParticleLabel, state: usize, zeta: f64, n: usize, children: Option<u32>) -> ParticleRecord {
    let g = label.generation();
    ParticleRecord {
        label,
        birth: g as f64,
        death: if g < n { (g + 1) as f64 } else { f64::INFINITY },
        children,
        path: vec![PathPoint {
            time: g as f64,
            state: MotionState::new(state as f64, zeta),
        }],
    }
}

struct Pending {
    label: ParticleLabel,
    state: usize,
    zeta: f64,
    marks: Vec<usize>,
}

fn check_cap(count: usize, generation: usize, opts: &SimOptions) -> Result<()> {
    if count > opts.population_cap {
        return Err(Error::Explosion {
            particles: count,
            time: generation as f64,
            cap: opts.population_cap,
        });
    }
    Ok(())
}

fn grow_p<R: Rng + ?Sized>(
    rng: &mut R,
    model: &DiscreteModel,
    opts: &SimOptions,
    stack: &mut Vec<Pending>,
    records: &mut Vec<ParticleRecord>,
    already: usize,
) -> Result<()> {
    let n = model.generations;
    while let Some(p) = stack.pop() {
        let g = p.label.generation();
        check_cap(already + records.len() + stack.len() + 1, g, opts)?;
        let children = if g < n {
            let a = model.law.sample(rng);
            for j in (1..=a as u32).rev() {
                let s = model.chain.step(rng, p.state, false);
                stack.push(Pending {
                    label: p.label.child(j),
                    state: s,
                    zeta: p.zeta * model.chain.step_factor(p.state, s),
                    marks: Vec::new(),
                });
            }
            Some(a as u32)
        } else {
            None
        };
        records.push(record(p.label, p.state, p.zeta, n, children));
    }
    Ok(())
}

/// Simulates `n` generations under `P`.
pub fn simulate_p_dt<R: Rng + ?Sized>(model: &DiscreteModel, opts: &SimOptions, rng: &mut R) -> Result<MarkedTree> {
    let mut stack = vec![Pending {
        label: ParticleLabel::root(),
        state: model.initial_state,
        zeta: 1.0,
        marks: Vec::new(),
    }];
    let mut records = Vec::new();
    grow_p(rng, model, opts, &mut stack, &mut records, 0)?;
    MarkedTree::from_records(records, model.horizon(), model.initial_state as f64)
}

/// Simulates the `Q^k` skeleton over `n` generations.
///
/// A node carrying `j` marks has a `j`-size-biased number of children, each
/// mark picks a child uniformly, and each spine child's state follows the
/// tilted chain. In full-tree mode the other children grow `P` subtrees, with
/// states from the original chain.
pub fn simulate_skeleton_q_dt<R: Rng + ?Sized>(
    model: &DiscreteModel,
    full_tree: bool,
    opts: &SimOptions,
    rng: &mut R,
) -> Result<DiscreteQRealization> {
    let n = model.generations;
    let k = model.k;
    let biased = (1..=k as u32)
        .map(|j| model.law.size_bias(j))
        .collect::<Result<Vec<_>>>()?;
    let mut skeleton = Vec::new();
    let mut side = Vec::new();
    let mut side_stack = Vec::new();
    let mut carriers = vec![ParticleLabel::root(); k];
    let mut stack = vec![Pending {
        label: ParticleLabel::root(),
        state: model.initial_state,
        zeta: 1.0,
        marks: (0..k).collect(),
    }];
    while let Some(p) = stack.pop() {
        let g = p.label.generation();
        check_cap(skeleton.len() + stack.len() + side_stack.len() + 1, g, opts)?;
        let children = if g < n {
            let a = biased[p.marks.len() - 1].sample(rng);
            let mut groups: Vec<Vec<usize>> = vec![Vec::new(); a];
            for &mark in &p.marks {
                groups[rng.random_range(0..a)].push(mark);
            }
            for (c, marks) in groups.into_iter().enumerate().rev() {
                let tilted = !marks.is_empty();
                if !tilted && !full_tree {
                    continue;
                }
                let s = model.chain.step(rng, p.state, tilted);
                let child = Pending {
                    label: p.label.child(c as u32 + 1),
                    state: s,
                    zeta: p.zeta * model.chain.step_factor(p.state, s),
                    marks,
                };
                if tilted {
                    stack.push(child);
                } else {
                    side_stack.push(child);
                }
            }
            Some(a as u32)
        } else {
            for &mark in &p.marks {
                carriers[mark] = p.label.clone();
            }
            None
        };
        skeleton.push(record(p.label, p.state, p.zeta, n, children));
    }
    let tree = if full_tree {
        grow_p(rng, model, opts, &mut side_stack, &mut side, skeleton.len())?;
        let mut all = skeleton.clone();
        all.append(&mut side);
        Some(MarkedTree::from_records(all, model.horizon(), model.initial_state as f64)?)
    } else {
        None
    };
    skeleton.sort_by(|a, b| {
        a.label
            .generation()
            .cmp(&b.label.generation())
            .then_with(|| a.label.cmp(&b.label))
    });
    Ok(DiscreteQRealization {
        skeleton: SkeletonRealization::from_nodes(model.horizon(), skeleton, carriers)?,
        tree,
    })
}

/// The discrete many-to-few weight of a skeleton at generation `n`:
/// `prod_{v != root} zeta(p(v)) / zeta(v)` over skeleton edges times the
/// offspring-moment factor chosen by `convention`.
pub fn many_to_few_weight_dt(skeleton: &SkeletonRealization, law: &OffspringLaw, convention: MomentConvention) -> f64 {
    let n = skeleton.time();
    let mut w = 1.0;
    for (node, &d) in skeleton.nodes().iter().zip(skeleton.mark_counts()) {
        if node.birth < n && convention == MomentConvention::PerNode {
            w *= law.moment(d);
        }
        if let Some(parent) = node.label.parent() {
            let (p, dp) = skeleton.node(&parent).expect("skeleton is prefix-closed");
            w *= p.birth_state().zeta / node.birth_state().zeta;
            if convention == MomentConvention::PerEdge {
                w *= law.moment(dp);
            }
        }
    }
    w
}

#[cfg(test)]
mod tests;
