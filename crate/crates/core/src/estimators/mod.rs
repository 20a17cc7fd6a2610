//! Moment estimators (direct and spine), closed forms for binary branching
//! Brownian motion, tail bounds, and statistical checks.

pub mod checks;
mod closed_form;
mod estimate;
pub mod quadrature;
mod report;
mod statistic;

pub use closed_form::{
    many_to_one_closed_form, many_to_one_tol, many_to_one_with, many_to_two_closed_form, many_to_two_tol,
    tail_lower_bound, tail_upper_bound, MANY_TO_ONE_TOL, MANY_TO_TWO_TOL,
};
pub use estimate::{
    bounds_table, compare_variance, estimate_direct, estimate_spine, tail_probability, tuple_sum, BoundsRow,
    ModelSpec, RunConfig, VarianceComparison, SPINE_SEED_OFFSET,
};
pub use report::{EstimateReport, Z95, Z99};
pub use statistic::{Factor, Measurability, Statistic, TerminalFn, TreeFn};
