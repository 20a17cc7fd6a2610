//! Finite-state Markov chains and their exponential-tilt martingales.
//!
//! The tilt rewards state index `s` with weight `exp(theta * s)` per step (or
//! per unit time). With `(rho, h)` the Perron pair of the tilted kernel,
//! `zeta(X, n) = h(X_n) / h(X_0) * rho^{-n} * exp(theta * sum_{m=1}^n X_m)` is a
//! positive unit-mean martingale in discrete time; in continuous time the sum
//! becomes `exp(theta * int_0^t X_s ds - rho t)`.

use rand::Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const ROW_TOL: f64 = 1e-12;
const PERRON_TOL: f64 = 1e-12;
const PERRON_MAX_ITERS: usize = 1_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ChainKind {
    /// Rows sum to 1; one step per generation.
    Transition,
    /// Rate matrix: nonnegative off-diagonal, rows sum to 0.
    Rate,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainTilt {
    pub theta: f64,
    pub rho: f64,
    pub h: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FiniteChain {
    kind: ChainKind,
    matrix: Vec<Vec<f64>>,
    tilt: Option<ChainTilt>,
    /// Dynamics under the tilted measure, same kind as `matrix`.
    tilted: Vec<Vec<f64>>,
}

fn validate(kind: ChainKind, m: &[Vec<f64>]) -> Result<()> {
    let n = m.len();
    if n == 0 {
        return Err(Error::InvalidModel("chain needs at least one state".into()));
    }
    for (i, row) in m.iter().enumerate() {
        if row.len() != n {
            return Err(Error::InvalidModel(format!("row {i} has {} entries, expected {n}", row.len())));
        }
        if row.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidModel(format!("row {i} has a non-finite entry")));
        }
        let sum: f64 = row.iter().sum();
        match kind {
            ChainKind::Transition => {
                if row.iter().any(|x| *x < 0.0) || (sum - 1.0).abs() > ROW_TOL {
                    return Err(Error::InvalidModel(format!(
                        "transition row {i} must be nonnegative and sum to 1 (sum {sum})"
                    )));
                }
            }
            ChainKind::Rate => {
                let off_ok = row.iter().enumerate().all(|(j, x)| j == i || *x >= 0.0);
                if !off_ok || sum.abs() > ROW_TOL * (1.0 + row[i].abs()) {
                    return Err(Error::InvalidModel(format!(
                        "rate row {i} needs nonnegative off-diagonal entries and zero sum (sum {sum})"
                    )));
                }
            }
        }
    }
    Ok(())
}

/// Perron root and right eigenvector (normalized to sum 1) of a Metzler matrix.
pub fn perron_pair(k: &[Vec<f64>]) -> Result<(f64, Vec<f64>)> {
    let n = k.len();
    let shift = 1.0 + k.iter().enumerate().map(|(i, r)| r[i].abs()).fold(0.0, f64::max);
    let mut h = vec![1.0 / n as f64; n];
    let mut next = vec![0.0; n];
    let mut lambda = 0.0;
    for _ in 0..PERRON_MAX_ITERS {
        for (i, row) in k.iter().enumerate() {
            next[i] = row.iter().zip(&h).map(|(a, b)| a * b).sum::<f64>() + shift * h[i];
        }
        let norm: f64 = next.iter().sum();
        if !(norm > 0.0) {
            return Err(Error::InvalidModel("tilted kernel has no positive Perron vector".into()));
        }
        lambda = norm;
        let mut delta: f64 = 0.0;
        for i in 0..n {
            let v = next[i] / norm;
            delta = delta.max((v - h[i]).abs());
            h[i] = v;
        }
        if delta < PERRON_TOL {
            if h.iter().any(|x| *x <= 0.0) {
                return Err(Error::InvalidModel("chain must be irreducible for an eigen-tilt".into()));
            }
            // h sums to 1, so the shifted eigenvalue equals the image norm.
            return Ok((lambda - shift, h));
        }
    }
    Err(Error::InvalidModel(format!(
        "power iteration did not converge (last eigenvalue estimate {})",
        lambda - shift
    )))
}

fn sample_row<R: Rng + ?Sized>(rng: &mut R, row: &[f64]) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (j, p) in row.iter().enumerate() {
        acc += p;
        if u < acc {
            return j;
        }
    }
    row.iter().rposition(|p| *p > 0.0).unwrap_or(row.len() - 1)
}

impl FiniteChain {
    pub fn new(kind: ChainKind, matrix: Vec<Vec<f64>>, theta: Option<f64>) -> Result<Self> {
        validate(kind, &matrix)?;
        let n = matrix.len();
        let Some(theta) = theta else {
            return Ok(FiniteChain {
                kind,
                tilted: matrix.clone(),
                matrix,
                tilt: None,
            });
        };
        let kernel: Vec<Vec<f64>> = match kind {
            ChainKind::Transition => matrix
                .iter()
                .map(|row| row.iter().enumerate().map(|(j, p)| p * (theta * j as f64).exp()).collect())
                .collect(),
            ChainKind::Rate => matrix
                .iter()
                .enumerate()
                .map(|(i, row)| {
                    let mut r = row.clone();
                    r[i] += theta * i as f64;
                    r
                })
                .collect(),
        };
        let (rho, h) = perron_pair(&kernel)?;
        let tilted: Vec<Vec<f64>> = match kind {
            ChainKind::Transition => (0..n)
                .map(|i| (0..n).map(|j| kernel[i][j] * h[j] / (rho * h[i])).collect())
                .collect(),
            ChainKind::Rate => (0..n)
                .map(|i| {
                    let mut row: Vec<f64> = (0..n)
                        .map(|j| if i == j { 0.0 } else { matrix[i][j] * h[j] / h[i] })
                        .collect();
                    row[i] = -row.iter().sum::<f64>();
                    row
                })
                .collect(),
        };
        Ok(FiniteChain {
            kind,
            matrix,
            tilt: Some(ChainTilt { theta, rho, h }),
            tilted,
        })
    }

    pub fn kind(&self) -> ChainKind {
        self.kind
    }

    pub fn states(&self) -> usize {
        self.matrix.len()
    }

    pub fn matrix(&self) -> &[Vec<f64>] {
        &self.matrix
    }

    pub fn tilted_matrix(&self) -> &[Vec<f64>] {
        &self.tilted
    }

    pub fn tilt(&self) -> Option<&ChainTilt> {
        self.tilt.as_ref()
    }

    pub fn check_state(&self, x: f64) -> Result<usize> {
        if x >= 0.0 && x.fract() == 0.0 && (x as usize) < self.states() {
            Ok(x as usize)
        } else {
            Err(Error::InvalidModel(format!(
                "state {x} is not one of 0..{}",
                self.states()
            )))
        }
    }

    /// One-step martingale factor `zeta(n+1)/zeta(n)` for a jump `i -> j`
    /// (transition chains only).
    pub fn step_factor(&self, i: usize, j: usize) -> f64 {
        match &self.tilt {
            None => 1.0,
            Some(t) => (t.theta * j as f64).exp() * t.h[j] / (t.rho * t.h[i]),
        }
    }

    /// Draws the next state of a transition chain, under `P` or the tilted dynamics.
    pub fn step<R: Rng + ?Sized>(&self, rng: &mut R, i: usize, tilted: bool) -> usize {
        debug_assert_eq!(self.kind, ChainKind::Transition);
        let m = if tilted { &self.tilted } else { &self.matrix };
        sample_row(rng, &m[i])
    }

    /// Runs a rate chain for `dt` from `i`; returns the end state and the
    /// multiplicative martingale increment over the interval.
    pub fn evolve<R: Rng + ?Sized>(&self, rng: &mut R, i: usize, dt: f64, tilted: bool) -> (usize, f64) {
        debug_assert_eq!(self.kind, ChainKind::Rate);
        let m = if tilted { &self.tilted } else { &self.matrix };
        let mut state = i;
        let mut elapsed = 0.0;
        let mut occupation = 0.0;
        loop {
            let out = -m[state][state];
            let hold = if out > 0.0 {
                Exp::new(out).expect("positive rate").sample(rng)
            } else {
                f64::INFINITY
            };
            if elapsed + hold >= dt {
                occupation += (dt - elapsed) * state as f64;
                break;
            }
            elapsed += hold;
            occupation += hold * state as f64;
            let mut row: Vec<f64> = m[state].iter().map(|r| r / out).collect();
            row[state] = 0.0;
            state = sample_row(rng, &row);
        }
        let factor = match &self.tilt {
            None => 1.0,
            Some(t) => t.h[state] / t.h[i] * (t.theta * occupation - t.rho * dt).exp(),
        };
        (state, factor)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn asym() -> Vec<Vec<f64>> {
        vec![vec![0.7, 0.3], vec![0.4, 0.6]]
    }

    #[test]
    fn perron_pair_of_positive_matrix() {
        let k = vec![vec![2.0, 1.0], vec![1.0, 2.0]];
        let (rho, h) = perron_pair(&k).unwrap();
        assert!((rho - 3.0).abs() < 1e-10);
        assert!((h[0] - 0.5).abs() < 1e-10 && (h[1] - 0.5).abs() < 1e-10);
    }

    #[test]
    fn perron_pair_of_periodic_matrix() {
        let (rho, _) = perron_pair(&[vec![0.0, 2.0], vec![2.0, 0.0]]).unwrap();
        assert!((rho - 2.0).abs() < 1e-10);
    }

    #[test]
    fn tilted_transition_rows_are_stochastic() {
        let c = FiniteChain::new(ChainKind::Transition, asym(), Some(0.5)).unwrap();
        for row in c.tilted_matrix() {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-10);
        }
        // The one-step factor has unit mean under P from every state.
        for i in 0..2 {
            let mean: f64 = (0..2).map(|j| c.matrix()[i][j] * c.step_factor(i, j)).sum();
            assert!((mean - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn untilted_chain_has_unit_factor() {
        let c = FiniteChain::new(ChainKind::Transition, asym(), None).unwrap();
        assert_eq!(c.step_factor(0, 1), 1.0);
        assert_eq!(c.tilted_matrix(), c.matrix());
    }

    #[test]
    fn validation_rejects_bad_rows() {
        assert!(FiniteChain::new(ChainKind::Transition, vec![vec![0.5, 0.4], vec![0.5, 0.5]], None).is_err());
        assert!(FiniteChain::new(ChainKind::Rate, vec![vec![-1.0, 1.0], vec![1.0, 1.0]], None).is_err());
        assert!(FiniteChain::new(ChainKind::Rate, vec![vec![-1.0, 1.0], vec![2.0, -2.0]], Some(0.3)).is_ok());
    }

    #[test]
    fn rate_chain_martingale_has_unit_mean() {
        let c = FiniteChain::new(ChainKind::Rate, vec![vec![-1.0, 1.0], vec![2.0, -2.0]], Some(0.7)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 40_000;
        let samples: Vec<f64> = (0..n).map(|_| c.evolve(&mut rng, 0, 1.5, false).1).collect();
        let mean = samples.iter().sum::<f64>() / n as f64;
        let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let se = (var / n as f64).sqrt();
        assert!((mean - 1.0).abs() < 4.0 * se, "mean {mean} se {se}");
    }
}
