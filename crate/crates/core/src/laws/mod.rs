//! Offspring laws, branching rates and motion models.

mod chain;
mod motion;
mod offspring;
mod rate;

use std::time::Instant;

pub use chain::{perron_pair, ChainKind, ChainTilt, FiniteChain};
pub use motion::MotionModel;
pub use offspring::OffspringLaw;
pub use rate::{BranchRate, RateFunction};

use crate::error::{Error, Result};
use crate::estimators::EstimateReport;
use crate::parallel::{run_replicates, Execution};

/// Monte Carlo check that `zeta(X, t)` has unit mean under the original
/// dynamics started from `x`. The report's `covers_target` is the verdict.
pub fn martingale_check(
    model: &MotionModel,
    x: f64,
    t: f64,
    replicates: u64,
    seed: u64,
    exec: &Execution,
) -> Result<EstimateReport> {
    if !(t > 0.0) {
        return Err(Error::InvalidModel(format!("martingale check needs t > 0, got {t}")));
    }
    if replicates < 100 {
        return Err(Error::InvalidModel(format!(
            "martingale check needs at least 100 replicates, got {replicates}"
        )));
    }
    let start = model.initial_state(x)?;
    let clock = Instant::now();
    let samples = run_replicates(replicates, seed, exec, |rng, _| Ok(model.step_p(rng, start, t).zeta))?;
    Ok(EstimateReport::from_samples("martingale-check", &samples, seed, clock.elapsed()).with_target(1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_zeta_has_zero_variance() {
        let r = martingale_check(&MotionModel::Brownian, 0.0, 0.7, 1000, 1, &Execution::sequential()).unwrap();
        assert_eq!(r.estimate, 1.0);
        assert_eq!(r.std_error, 0.0);
        assert_eq!(r.covers_target, Some(true));
    }

    #[test]
    fn girsanov_tilt_has_unit_mean() {
        let model = MotionModel::BrownianTilt { lambda: 1.0 };
        let r = martingale_check(&model, 0.0, 1.0, 100_000, 2, &Execution::parallel(0)).unwrap();
        assert_eq!(r.covers_target, Some(true), "{r:?}");
    }

    #[test]
    fn absorbed_brownian_has_unit_mean() {
        let r = martingale_check(&MotionModel::AbsorbedBrownian, 1.0, 1.0, 100_000, 3, &Execution::parallel(0)).unwrap();
        assert_eq!(r.covers_target, Some(true), "{r:?}");
    }

    #[test]
    fn tilted_rate_chain_has_unit_mean() {
        let chain = FiniteChain::new(ChainKind::Rate, vec![vec![-1.0, 1.0], vec![0.5, -0.5]], Some(0.8)).unwrap();
        let model = MotionModel::chain(chain).unwrap();
        let r = martingale_check(&model, 0.0, 1.0, 50_000, 4, &Execution::parallel(0)).unwrap();
        assert_eq!(r.covers_target, Some(true), "{r:?}");
    }

    #[test]
    fn rejects_bad_arguments() {
        let exec = Execution::sequential();
        assert!(martingale_check(&MotionModel::Brownian, 0.0, 0.0, 1000, 0, &exec).is_err());
        assert!(martingale_check(&MotionModel::Brownian, 0.0, 1.0, 10, 0, &exec).is_err());
    }
}
