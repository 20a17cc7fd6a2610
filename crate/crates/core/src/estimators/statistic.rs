use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::quadrature::normal_tail;
use crate::tree::MarkedTree;

/// Single-particle test function of a position or chain state.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "at", rename_all = "kebab-case")]
pub enum Factor {
    One,
    /// `1{y > x}`
    Above(f64),
    /// `1{y < x}`
    Below(f64),
    /// `1{y == x}`, for chain states.
    Equals(f64),
}

impl Factor {
    pub fn eval(&self, y: f64) -> f64 {
        let hit = match *self {
            Factor::One => true,
            Factor::Above(x) => y > x,
            Factor::Below(x) => y < x,
            Factor::Equals(x) => y == x,
        };
        if hit {
            1.0
        } else {
            0.0
        }
    }

    /// Points where the factor jumps.
    pub fn breakpoints(&self) -> Vec<f64> {
        match *self {
            Factor::One => Vec::new(),
            Factor::Above(x) | Factor::Below(x) | Factor::Equals(x) => vec![x],
        }
    }

    /// `E[f(z + sqrt(var) Z)]` for standard normal `Z`.
    pub fn gaussian_mean(&self, z: f64, var: f64) -> f64 {
        if var <= 0.0 {
            return self.eval(z);
        }
        let sd = var.sqrt();
        match *self {
            Factor::One => 1.0,
            Factor::Above(x) => normal_tail((x - z) / sd),
            Factor::Below(x) => normal_tail((z - x) / sd),
            Factor::Equals(_) => 0.0,
        }
    }
}

pub type TerminalFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
pub type TreeFn = Arc<dyn Fn(&MarkedTree, &[usize]) -> f64 + Send + Sync>;

/// Whether a statistic only reads spine data or needs the whole tree.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Measurability {
    Spine,
    FullTree,
}

/// `Y(v_1, ..., v_k)` evaluated at the horizon.
#[derive(Clone)]
pub enum Statistic {
    /// `prod_i f_i(X_{v_i})`. With `distinct`, tuples with a repeated particle
    /// are excluded from the direct sum (and the spine route is not available).
    Factored { factors: Vec<Factor>, distinct: bool },
    /// A function of the `k` terminal positions.
    Terminal { k: usize, f: TerminalFn, nonnegative: bool },
    /// A function of the whole tree and the tuple's record indices.
    FullTree { k: usize, f: TreeFn, nonnegative: bool },
}

impl fmt::Debug for Statistic {
    fn fmt(&self, fm: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Statistic::Factored { factors, distinct } => fm
                .debug_struct("Factored")
                .field("factors", factors)
                .field("distinct", distinct)
                .finish(),
            Statistic::Terminal { k, .. } => write!(fm, "Terminal(k={k})"),
            Statistic::FullTree { k, .. } => write!(fm, "FullTree(k={k})"),
        }
    }
}

impl Statistic {
    /// `Y == 1` with arity `k`.
    pub fn one(k: usize) -> Self {
        Statistic::Factored {
            factors: vec![Factor::One; k],
            distinct: false,
        }
    }

    pub fn factored(factors: Vec<Factor>) -> Self {
        Statistic::Factored {
            factors,
            distinct: false,
        }
    }

    pub fn arity(&self) -> usize {
        match self {
            Statistic::Factored { factors, .. } => factors.len(),
            Statistic::Terminal { k, .. } | Statistic::FullTree { k, .. } => *k,
        }
    }

    pub fn measurability(&self) -> Measurability {
        match self {
            Statistic::FullTree { .. } => Measurability::FullTree,
            _ => Measurability::Spine,
        }
    }

    pub fn is_nonnegative(&self) -> bool {
        match self {
            Statistic::Factored { .. } => true,
            Statistic::Terminal { nonnegative, .. } | Statistic::FullTree { nonnegative, .. } => *nonnegative,
        }
    }

    /// Evaluates on terminal positions; `None` for full-tree statistics.
    pub fn eval_terminal(&self, positions: &[f64]) -> Option<f64> {
        match self {
            Statistic::Factored { factors, .. } => {
                Some(factors.iter().zip(positions).map(|(f, y)| f.eval(*y)).product())
            }
            Statistic::Terminal { f, .. } => Some(f(positions)),
            Statistic::FullTree { .. } => None,
        }
    }
}
