use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::chain::{ChainKind, FiniteChain};
use crate::error::{Error, Result};
use crate::tree::MotionState;

/// Single-particle motion together with its martingale `zeta` and the
/// `zeta`-tilted dynamics that spine particles follow.
///
/// `zeta` is carried along each line of descent in [`MotionState::zeta`] and
/// updated multiplicatively on every segment, so the ratio over any segment
/// only needs the segment's endpoint states.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "preset", rename_all = "kebab-case")]
pub enum MotionModel {
    /// Standard Brownian motion with `zeta == 1`.
    Brownian,
    /// Brownian motion with `zeta(X, t) = exp(lambda (X_t - X_0) - lambda^2 t / 2)`;
    /// tilted dynamics have drift `lambda`.
    BrownianTilt { lambda: f64 },
    /// Brownian motion from `x > 0` with `zeta(X, t) = X_{t ∧ H_0} / x * 1{H_0 > t}`;
    /// tilted dynamics are a three-dimensional Bessel process.
    AbsorbedBrownian,
    /// Continuous-time finite chain; positions are state indices.
    Chain { chain: FiniteChain },
}

impl MotionModel {
    pub fn chain(chain: FiniteChain) -> Result<Self> {
        if chain.kind() != ChainKind::Rate {
            return Err(Error::InvalidModel(
                "continuous-time motion needs a rate matrix".into(),
            ));
        }
        Ok(MotionModel::Chain { chain })
    }

    /// Starting state at `x`, with `zeta = 1`.
    pub fn initial_state(&self, x: f64) -> Result<MotionState> {
        match self {
            MotionModel::AbsorbedBrownian if !(x > 0.0) => Err(Error::InvalidModel(format!(
                "absorbed Brownian motion must start above 0, got {x}"
            ))),
            MotionModel::Chain { chain } => chain.check_state(x).map(|_| MotionState::new(x, 1.0)),
            _ if !x.is_finite() => Err(Error::InvalidModel(format!("start {x} is not finite"))),
            _ => Ok(MotionState::new(x, 1.0)),
        }
    }

    pub fn zeta_is_trivial(&self) -> bool {
        match self {
            MotionModel::Brownian => true,
            MotionModel::BrownianTilt { lambda } => *lambda == 0.0,
            MotionModel::AbsorbedBrownian => false,
            MotionModel::Chain { chain } => chain.tilt().is_none(),
        }
    }

    /// Advances the state by `dt` under the original dynamics.
    pub fn step_p<R: Rng + ?Sized>(&self, rng: &mut R, s: MotionState, dt: f64) -> MotionState {
        if dt <= 0.0 {
            return s;
        }
        match self {
            MotionModel::Brownian => {
                let z: f64 = rng.sample(StandardNormal);
                MotionState::new(s.position + dt.sqrt() * z, s.zeta)
            }
            MotionModel::BrownianTilt { lambda } => {
                let z: f64 = rng.sample(StandardNormal);
                let inc = dt.sqrt() * z;
                MotionState::new(s.position + inc, s.zeta * (lambda * inc - 0.5 * lambda * lambda * dt).exp())
            }
            MotionModel::AbsorbedBrownian => {
                let z: f64 = rng.sample(StandardNormal);
                let a = s.position;
                let b = a + dt.sqrt() * z;
                if s.is_absorbed() {
                    return MotionState::new(b, 0.0);
                }
                // A Brownian bridge from a > 0 to b > 0 over dt dips below 0
                // with probability exp(-2ab/dt).
                let hit = b <= 0.0 || rng.random::<f64>() < (-2.0 * a * b / dt).exp();
                if hit {
                    MotionState::new(b, 0.0)
                } else {
                    MotionState::new(b, s.zeta * b / a)
                }
            }
            MotionModel::Chain { chain } => {
                let (j, factor) = chain.evolve(rng, s.position as usize, dt, false);
                MotionState::new(j as f64, s.zeta * factor)
            }
        }
    }

    /// Advances the state by `dt` under the `zeta`-tilted dynamics. `zeta` is
    /// evaluated along the tilted path with the same functional as under `P`.
    pub fn step_q<R: Rng + ?Sized>(&self, rng: &mut R, s: MotionState, dt: f64) -> MotionState {
        if dt <= 0.0 {
            return s;
        }
        match self {
            MotionModel::Brownian => self.step_p(rng, s, dt),
            MotionModel::BrownianTilt { lambda } => {
                let z: f64 = rng.sample(StandardNormal);
                let inc = lambda * dt + dt.sqrt() * z;
                MotionState::new(s.position + inc, s.zeta * (lambda * inc - 0.5 * lambda * lambda * dt).exp())
            }
            MotionModel::AbsorbedBrownian => {
                let sd = dt.sqrt();
                let z1: f64 = rng.sample(StandardNormal);
                let z2: f64 = rng.sample(StandardNormal);
                let z3: f64 = rng.sample(StandardNormal);
                let a = s.position;
                let x = a + sd * z1;
                let b = (x * x + dt * (z2 * z2 + z3 * z3)).sqrt();
                MotionState::new(b, s.zeta * b / a)
            }
            MotionModel::Chain { chain } => {
                let (j, factor) = chain.evolve(rng, s.position as usize, dt, true);
                MotionState::new(j as f64, s.zeta * factor)
            }
        }
    }
}
