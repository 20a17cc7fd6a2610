//! Exact expectations of both sides of the discrete many-to-few identity.
//!
//! The left side enumerates every way the population can evolve, lumping
//! realizations with the same per-state counts in each generation; a
//! product statistic of the tuple only sees those counts. The right side
//! enumerates skeleton evolutions (size-biased counts, mark placements and
//! tilted spine states); disjoint skeleton subtrees evolve independently and
//! carry multiplicative weight, so each `(generation, state, marks)` subtree
//! is evaluated once.
//!
//! Both chains' `zeta` values are strictly positive (the Perron vector is), so
//! the `zeta > 0` indicator on the left side is identically 1.

use std::collections::{BTreeMap, HashMap};

use serde::Serialize;

use super::{DiscreteModel, MomentConvention};
use crate::error::{Error, Result};
use crate::laws::{ChainKind, FiniteChain, OffspringLaw};
use crate::parallel::{map_indices, Execution};
use crate::util::KahanSum;

/// Default cap on enumeration work per oracle evaluation.
pub const ORACLE_BUDGET: f64 = 1e7;
/// `|lhs - rhs| <= ORACLE_TOL * (1 + |lhs|)` counts as agreement.
pub const ORACLE_TOL: f64 = 1e-10;

/// `Y(v_1..v_k) = prod_i f_i(X_{v_i})` with `factors[i][s] = f_i(s)`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SpineStatistic {
    factors: Vec<Vec<f64>>,
}

impl SpineStatistic {
    pub fn new(factors: Vec<Vec<f64>>) -> Result<Self> {
        if factors.is_empty() {
            return Err(Error::InvalidModel("statistic needs at least one factor".into()));
        }
        let states = factors[0].len();
        if factors.iter().any(|f| f.len() != states) {
            return Err(Error::InvalidModel("factors disagree on the number of states".into()));
        }
        Ok(SpineStatistic { factors })
    }

    pub fn one(k: usize, states: usize) -> Self {
        SpineStatistic {
            factors: vec![vec![1.0; states]; k],
        }
    }

    /// `prod_i 1{X_{v_i} = targets[i]}`.
    pub fn indicators(targets: &[usize], states: usize) -> Result<Self> {
        if let Some(t) = targets.iter().find(|t| **t >= states) {
            return Err(Error::InvalidModel(format!("target state {t} out of range")));
        }
        Ok(SpineStatistic {
            factors: targets
                .iter()
                .map(|&t| (0..states).map(|s| if s == t { 1.0 } else { 0.0 }).collect())
                .collect(),
        })
    }

    pub fn k(&self) -> usize {
        self.factors.len()
    }

    pub fn states(&self) -> usize {
        self.factors[0].len()
    }

    pub fn eval(&self, states: &[usize]) -> f64 {
        self.factors.iter().zip(states).map(|(f, &s)| f[s]).product()
    }

    fn check(&self, model: &DiscreteModel) -> Result<()> {
        if self.k() != model.k || self.states() != model.chain.states() {
            return Err(Error::InvalidModel(format!(
                "statistic has arity {} over {} states, model has k={} over {} states",
                self.k(),
                self.states(),
                model.k,
                model.chain.states()
            )));
        }
        Ok(())
    }
}

type Counts = Vec<u32>;
type CountLaw = BTreeMap<Counts, f64>;

struct Work {
    spent: f64,
    budget: f64,
}

impl Work {
    fn charge(&mut self, units: f64) -> Result<()> {
        self.spent += units;
        if self.spent > self.budget {
            return Err(Error::BudgetExceeded {
                leaves: self.spent,
                budget: self.budget,
            });
        }
        Ok(())
    }
}

fn convolve(a: &CountLaw, b: &CountLaw, work: &mut Work) -> Result<CountLaw> {
    work.charge((a.len() * b.len()) as f64)?;
    let mut out: BTreeMap<Counts, KahanSum> = BTreeMap::new();
    for (ca, pa) in a {
        for (cb, pb) in b {
            let c: Counts = ca.iter().zip(cb).map(|(x, y)| x + y).collect();
            out.entry(c).or_default().add(pa * pb);
        }
    }
    Ok(out.into_iter().map(|(c, s)| (c, s.total())).collect())
}

/// Law of the per-state child counts of one particle in state `s`.
fn offspring_counts(chain: &FiniteChain, law: &OffspringLaw, s: usize) -> CountLaw {
    let states = chain.states();
    let row = &chain.matrix()[s];
    let mut out: BTreeMap<Counts, KahanSum> = BTreeMap::new();
    for (a, pa) in law.support() {
        // Children's states are i.i.d. draws from the row: a multinomial.
        let mut single: CountLaw = BTreeMap::new();
        single.insert(vec![0; states], 1.0);
        for _ in 0..a {
            let mut next: BTreeMap<Counts, KahanSum> = BTreeMap::new();
            for (c, p) in &single {
                for (t, q) in row.iter().enumerate().filter(|(_, q)| **q > 0.0) {
                    let mut c2 = c.clone();
                    c2[t] += 1;
                    next.entry(c2).or_default().add(p * q);
                }
            }
            single = next.into_iter().map(|(c, s)| (c, s.total())).collect();
        }
        for (c, p) in single {
            out.entry(c).or_default().add(pa * p);
        }
    }
    out.into_iter().map(|(c, s)| (c, s.total())).collect()
}

/// Exact law of the per-state counts of generation `n` under `P`.
pub(crate) fn generation_law(model: &DiscreteModel, budget: f64) -> Result<BTreeMap<Counts, f64>> {
    let states = model.chain.states();
    let mut work = Work { spent: 0.0, budget };
    let single: Vec<CountLaw> = (0..states)
        .map(|s| offspring_counts(&model.chain, &model.law, s))
        .collect();
    let mut unit: CountLaw = BTreeMap::new();
    unit.insert(vec![0; states], 1.0);
    // powers[s][m]: counts produced by m particles in state s.
    let mut powers: Vec<Vec<CountLaw>> = vec![vec![unit.clone()]; states];

    let mut current: CountLaw = BTreeMap::new();
    let mut start = vec![0; states];
    start[model.initial_state] = 1;
    current.insert(start, 1.0);
    for _ in 0..model.generations {
        let mut next: BTreeMap<Counts, KahanSum> = BTreeMap::new();
        for (c, p) in &current {
            let mut acc = unit.clone();
            for (s, &m) in c.iter().enumerate() {
                while powers[s].len() <= m as usize {
                    let last = powers[s].last().expect("unit power");
                    let grown = convolve(last, &single[s], &mut work)?;
                    powers[s].push(grown);
                }
                if m > 0 {
                    acc = convolve(&acc, &powers[s][m as usize], &mut work)?;
                }
            }
            for (c2, q) in acc {
                next.entry(c2).or_default().add(p * q);
            }
        }
        current = next.into_iter().map(|(c, s)| (c, s.total())).collect();
    }
    Ok(current)
}

fn lhs_from_law(law: &BTreeMap<Counts, f64>, stat: &SpineStatistic) -> f64 {
    let mut total = KahanSum::default();
    for (c, p) in law {
        let y: f64 = stat
            .factors
            .iter()
            .map(|f| f.iter().zip(c).map(|(fs, &cs)| fs * cs as f64).sum::<f64>())
            .product();
        total.add(p * y);
    }
    total.total()
}

/// `E[sum over ordered k-tuples of generation n of Y]`, exactly.
pub fn oracle_lhs(model: &DiscreteModel, stat: &SpineStatistic, budget: f64) -> Result<f64> {
    stat.check(model)?;
    Ok(lhs_from_law(&generation_law(model, budget)?, stat))
}

struct Rhs<'a> {
    model: &'a DiscreteModel,
    stat: &'a SpineStatistic,
    convention: MomentConvention,
    moments: Vec<f64>,
    nodes: HashMap<(usize, usize, u32), f64>,
    edges: HashMap<(usize, usize, u32), f64>,
}

impl Rhs<'_> {
    /// Weighted `Q`-expectation of `Y` restricted to the marks in `mask`,
    /// for a skeleton node in generation `g` and state `s`.
    fn node(&mut self, g: usize, s: usize, mask: u32) -> f64 {
        if let Some(v) = self.nodes.get(&(g, s, mask)) {
            return *v;
        }
        let marks: Vec<usize> = (0..self.model.k).filter(|i| mask >> i & 1 == 1).collect();
        let v = if g == self.model.generations {
            marks.iter().map(|&i| self.stat.factors[i][s]).product()
        } else {
            let j = marks.len();
            let mj = self.moments[j];
            let mut total = KahanSum::default();
            for (a, pa) in self.model.law.support().filter(|(a, _)| *a > 0).collect::<Vec<_>>() {
                let q = (a as f64).powi(j as i32) * pa / mj;
                let placements = a.pow(j as u32);
                let each = q / placements as f64;
                for code in 0..placements {
                    let mut blocks = vec![0u32; a];
                    let mut rest = code;
                    for &i in &marks {
                        blocks[rest % a] |= 1 << i;
                        rest /= a;
                    }
                    let used: Vec<u32> = blocks.into_iter().filter(|b| *b != 0).collect();
                    let factor = match self.convention {
                        MomentConvention::PerNode => mj,
                        MomentConvention::PerEdge => mj.powi(used.len() as i32),
                    };
                    let mut value = each * factor;
                    for b in used {
                        value *= self.edge(g, s, b);
                    }
                    total.add(value);
                }
            }
            total.total()
        };
        self.nodes.insert((g, s, mask), v);
        v
    }

    /// Expectation over the tilted step to a spine child carrying `mask`,
    /// including the edge's `zeta(parent) / zeta(child)` factor.
    fn edge(&mut self, g: usize, s: usize, mask: u32) -> f64 {
        if let Some(v) = self.edges.get(&(g, s, mask)) {
            return *v;
        }
        let row = self.model.chain.tilted_matrix()[s].clone();
        let mut total = KahanSum::default();
        for (t, q) in row.into_iter().enumerate().filter(|(_, q)| *q > 0.0) {
            let ratio = 1.0 / self.model.chain.step_factor(s, t);
            total.add(q * ratio * self.node(g + 1, t, mask));
        }
        let v = total.total();
        self.edges.insert((g, s, mask), v);
        v
    }
}

/// `Q^k[weight * Y]` over skeleton evolutions, exactly.
pub fn oracle_rhs(model: &DiscreteModel, stat: &SpineStatistic, convention: MomentConvention, budget: f64) -> Result<f64> {
    stat.check(model)?;
    if model.k > 16 {
        return Err(Error::InvalidModel("at most 16 spines".into()));
    }
    let states = model.chain.states();
    let placements: f64 = model
        .law
        .support()
        .map(|(a, _)| (a as f64).powi(model.k as i32))
        .sum();
    let leaves = model.generations as f64 * states as f64 * 2f64.powi(model.k as i32) * placements * states as f64;
    if leaves > budget {
        return Err(Error::BudgetExceeded { leaves, budget });
    }
    let moments: Vec<f64> = (0..=model.k as u32).map(|j| model.law.moment(j)).collect();
    if moments.iter().any(|m| !(*m > 0.0)) {
        return Err(Error::DegenerateLaw("size-biased law undefined: a moment vanishes".into()));
    }
    let mut rhs = Rhs {
        model,
        stat,
        convention,
        moments,
        nodes: HashMap::new(),
        edges: HashMap::new(),
    };
    Ok(rhs.node(0, model.initial_state, (1u32 << model.k) - 1))
}

/// One cell of the oracle grid.
#[derive(Clone, Debug)]
pub struct GridCase {
    pub law_name: String,
    pub chain_name: String,
    pub statistic_name: String,
    pub tilted: bool,
    pub model: DiscreteModel,
    pub statistic: SpineStatistic,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GridResult {
    pub law: String,
    pub k: usize,
    pub n: usize,
    pub chain: String,
    pub zeta: String,
    pub statistic: String,
    pub lhs: Option<f64>,
    pub rhs: Option<f64>,
    pub abs_diff: Option<f64>,
    pub status: GridStatus,
    pub note: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum GridStatus {
    Pass,
    Fail,
    Skipped,
}

impl GridResult {
    pub fn passed(&self) -> bool {
        self.status == GridStatus::Pass
    }
}

const TILT_THETA: f64 = 0.5;

fn grid_laws() -> Vec<(&'static str, OffspringLaw)> {
    let third = 1.0 / 3.0;
    vec![
        ("point-2", OffspringLaw::point_mass(2)),
        ("0-or-2", OffspringLaw::new(vec![0.5, 0.0, 0.5]).expect("valid")),
        ("1-or-2", OffspringLaw::new(vec![0.0, 0.5, 0.5]).expect("valid")),
        ("0-1-or-3", OffspringLaw::new(vec![third, third, 0.0, 1.0 - 2.0 * third]).expect("valid")),
    ]
}

fn grid_chains() -> Vec<(&'static str, Vec<Vec<f64>>)> {
    vec![
        ("one-state", vec![vec![1.0]]),
        ("two-state", vec![vec![0.7, 0.3], vec![0.4, 0.6]]),
    ]
}

/// Every offspring law, `k` in 1..=3, `n` in 1..=4, both chains, with and
/// without the eigen-tilt, for `Y = 1` and `Y = prod_i 1{X_{v_i} = i mod |S|}`.
pub fn builtin_grid() -> Vec<GridCase> {
    let mut cases = Vec::new();
    for (law_name, law) in grid_laws() {
        for (chain_name, matrix) in grid_chains() {
            for tilted in [false, true] {
                let chain = FiniteChain::new(ChainKind::Transition, matrix.clone(), tilted.then_some(TILT_THETA))
                    .expect("grid chain is valid");
                let states = chain.states();
                for n in 1..=4 {
                    for k in 1..=3 {
                        let model = DiscreteModel::new(chain.clone(), law.clone(), n, k, 0).expect("grid model is valid");
                        let targets: Vec<usize> = (0..k).map(|i| i % states).collect();
                        for (statistic_name, statistic) in [
                            ("one".to_string(), SpineStatistic::one(k, states)),
                            (
                                format!("states-{}", targets.iter().map(|t| t.to_string()).collect::<Vec<_>>().join("")),
                                SpineStatistic::indicators(&targets, states).expect("targets in range"),
                            ),
                        ] {
                            cases.push(GridCase {
                                law_name: law_name.to_string(),
                                chain_name: chain_name.to_string(),
                                statistic_name,
                                tilted,
                                model: model.clone(),
                                statistic,
                            });
                        }
                    }
                }
            }
        }
    }
    cases
}

/// Evaluates both oracles on every case. Cases whose enumeration exceeds
/// `budget` are reported as skipped.
pub fn run_grid(cases: &[GridCase], convention: MomentConvention, budget: f64, exec: &Execution) -> Result<Vec<GridResult>> {
    // The left side only depends on the law, chain, horizon and start state,
    // so its count law is shared between cases.
    let mut keys: Vec<(String, String, usize)> = Vec::new();
    let mut representatives = Vec::new();
    let mut key_of = Vec::with_capacity(cases.len());
    for (i, c) in cases.iter().enumerate() {
        let key = (
            format!("{:?}", c.model.law.pmf()),
            format!("{:?}@{}", c.model.chain.matrix(), c.model.initial_state),
            c.model.generations,
        );
        let pos = keys.iter().position(|k| *k == key).unwrap_or_else(|| {
            keys.push(key);
            representatives.push(i);
            keys.len() - 1
        });
        key_of.push(pos);
    }
    let laws = map_indices(representatives.len() as u64, exec, |i| {
        Ok(generation_law(&cases[representatives[i as usize]].model, budget))
    })?;

    map_indices(cases.len() as u64, exec, |i| {
        let case = &cases[i as usize];
        let lhs = match &laws[key_of[i as usize]] {
            Ok(law) => {
                case.statistic.check(&case.model)?;
                Ok(lhs_from_law(law, &case.statistic))
            }
            Err(e) => Err(e.clone()),
        };
        let rhs = oracle_rhs(&case.model, &case.statistic, convention, budget);
        let mut result = GridResult {
            law: case.law_name.clone(),
            k: case.model.k,
            n: case.model.generations,
            chain: case.chain_name.clone(),
            zeta: if case.tilted { format!("tilt-{TILT_THETA}") } else { "one".into() },
            statistic: case.statistic_name.clone(),
            lhs: None,
            rhs: None,
            abs_diff: None,
            status: GridStatus::Skipped,
            note: String::new(),
        };
        match (lhs, rhs) {
            (Ok(l), Ok(r)) => {
                let diff = (l - r).abs();
                result.lhs = Some(l);
                result.rhs = Some(r);
                result.abs_diff = Some(diff);
                result.status = if diff <= ORACLE_TOL * (1.0 + l.abs()) {
                    GridStatus::Pass
                } else {
                    GridStatus::Fail
                };
            }
            (Err(e), _) | (_, Err(e)) => match e {
                Error::BudgetExceeded { .. } => result.note = e.to_string(),
                other => return Err(other),
            },
        }
        Ok(result)
    })
}
