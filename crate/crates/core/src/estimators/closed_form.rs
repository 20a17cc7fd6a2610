//! Closed forms for binary branching Brownian motion at rate 1.

use super::quadrature::{gaussian_expectation, integrate, normal_tail};
use super::statistic::Factor;
use crate::error::{Error, Result};

pub const MANY_TO_ONE_TOL: f64 = 1e-10;
pub const MANY_TO_TWO_TOL: f64 = 1e-8;

fn check_time(t: f64) -> Result<()> {
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::InvalidModel(format!("time {t} must be finite and nonnegative")));
    }
    Ok(())
}

/// `e^t E[f(B_t)]` for an arbitrary integrable `f` with jumps at `cuts`.
pub fn many_to_one_with<F: Fn(f64) -> f64>(f: F, cuts: &[f64], t: f64, rel_tol: f64) -> Result<f64> {
    check_time(t)?;
    Ok(t.exp() * gaussian_expectation(f, 0.0, t.sqrt(), cuts, rel_tol)?)
}

/// `E[sum_{u in N(t)} f(X_u(t))] = e^t E[f(B_t)]`.
pub fn many_to_one_closed_form(f: &Factor, t: f64) -> Result<f64> {
    many_to_one_tol(f, t, MANY_TO_ONE_TOL)
}

pub fn many_to_one_tol(f: &Factor, t: f64, rel_tol: f64) -> Result<f64> {
    many_to_one_with(|y| f.eval(y), &f.breakpoints(), t, rel_tol)
}

/// `E[sum_{u, v in N(t)} f(X_u(t)) g(X_v(t))]`.
///
/// The two spines share a path up to `T ~ Exp(2)` and then move
/// independently, with weight `e^{2t} e^{T ∧ t}`:
/// `e^{2t} [int_0^t 2 e^{-s} E_s ds + e^{-t} E[f(B_t) g(B_t)]]` where
/// `E_s = E[F_s(B_s) G_s(B_s)]` and `F_s(z) = E[f(z + W_{t-s})]`.
pub fn many_to_two_closed_form(f: &Factor, g: &Factor, t: f64) -> Result<f64> {
    many_to_two_tol(f, g, t, MANY_TO_TWO_TOL)
}

pub fn many_to_two_tol(f: &Factor, g: &Factor, t: f64, rel_tol: f64) -> Result<f64> {
    check_time(t)?;
    if t == 0.0 {
        return Ok(f.eval(0.0) * g.eval(0.0));
    }
    let mut cuts = f.breakpoints();
    cuts.extend(g.breakpoints());
    let inner_tol = 0.1 * rel_tol;
    let together = gaussian_expectation(|y| f.eval(y) * g.eval(y), 0.0, t.sqrt(), &cuts, inner_tol)?;
    let split_at = |s: f64| -> f64 {
        let rest = t - s;
        let e = gaussian_expectation(
            |z| f.gaussian_mean(z, rest) * g.gaussian_mean(z, rest),
            0.0,
            s.sqrt(),
            &cuts,
            inner_tol,
        );
        match e {
            Ok(v) => 2.0 * (-s).exp() * v,
            Err(_) => f64::NAN,
        }
    };
    let split = integrate(split_at, 0.0, t, &[], rel_tol)?;
    if !split.is_finite() {
        return Err(Error::Quadrature("inner integral failed to converge".into()));
    }
    Ok((2.0 * t).exp() * (split + (-t).exp() * together))
}

/// Markov bound `P(A(x, t) >= 1) <= E[A(x, t)] = e^t P(B_t > x)`, where
/// `A(x, t)` counts particles above `x` at time `t`.
pub fn tail_upper_bound(x: f64, t: f64) -> Result<f64> {
    if !(t > 0.0) {
        return Err(Error::InvalidModel(format!("tail bound needs t > 0, got {t}")));
    }
    Ok(t.exp() * normal_tail(x / t.sqrt()))
}

/// Second-moment bound `P(A(x, t) >= 1) >= E[A]^2 / E[A^2]`.
pub fn tail_lower_bound(x: f64, t: f64) -> Result<f64> {
    if !(t > 0.0) {
        return Err(Error::InvalidModel(format!("tail bound needs t > 0, got {t}")));
    }
    let f = Factor::Above(x);
    let m1 = tail_upper_bound(x, t)?;
    let m2 = many_to_two_closed_form(&f, &f, t)?;
    if m2 <= 0.0 {
        return Ok(0.0);
    }
    Ok(m1 * m1 / m2)
}
