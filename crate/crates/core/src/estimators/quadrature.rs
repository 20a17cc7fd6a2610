//! Adaptive integration over finite panels and Gaussian expectations.

use libm::erfc;

use crate::error::{Error, Result};

/// Standard normal tail `P(Z > x)`.
pub fn normal_tail(x: f64) -> f64 {
    0.5 * erfc(x / std::f64::consts::SQRT_2)
}

/// Standard normal density.
pub fn normal_density(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Standard-normal mass beyond this many deviations is below `1e-340` and
/// dropped.
pub const GAUSS_CUTOFF: f64 = 40.0;
const PANEL: f64 = 2.0;
const MAX_DEPTH: u32 = 40;

fn bisect<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64, depth: u32) -> Result<f64> {
    let out = quadrature::double_exponential::integrate(f, a, b, tol);
    if out.error_estimate <= tol {
        return Ok(out.integral);
    }
    if depth >= MAX_DEPTH {
        return Err(Error::Quadrature(format!(
            "no convergence on [{a}, {b}]: error estimate {} above {tol}",
            out.error_estimate
        )));
    }
    let mid = 0.5 * (a + b);
    Ok(bisect(f, a, mid, 0.5 * tol, depth + 1)? + bisect(f, mid, b, 0.5 * tol, depth + 1)?)
}

/// Integrates `f` over `[a, b]` to relative tolerance `rel_tol`. The interval
/// is cut at every point of `cuts` inside it, so integrands with kinks or
/// jumps there are handled exactly; each piece is bisected until its
/// double-exponential error estimate meets its share of the tolerance.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, cuts: &[f64], rel_tol: f64) -> Result<f64> {
    if !(b > a) {
        return Ok(0.0);
    }
    let mut points: Vec<f64> = cuts.iter().copied().filter(|c| *c > a && *c < b).collect();
    points.push(a);
    points.push(b);
    points.sort_by(f64::total_cmp);
    points.dedup();
    let pieces: Vec<(f64, f64)> = points.windows(2).map(|w| (w[0], w[1])).collect();

    // A coarse pass sets the absolute scale for the relative tolerance.
    let rough: f64 = pieces
        .iter()
        .map(|&(l, r)| quadrature::double_exponential::integrate(&f, l, r, 1e-6).integral.abs())
        .sum();
    let scale = rough.max(f64::MIN_POSITIVE);
    let width = b - a;
    let mut total = 0.0;
    for (l, r) in pieces {
        total += bisect(&f, l, r, rel_tol * scale * (r - l) / width, 0)?;
    }
    Ok(total)
}

/// `E[f(mean + sd Z)]` for standard normal `Z`, cutting at the points of
/// `cuts` (in the original variable).
pub fn gaussian_expectation<F: Fn(f64) -> f64>(f: F, mean: f64, sd: f64, cuts: &[f64], rel_tol: f64) -> Result<f64> {
    if sd == 0.0 {
        return Ok(f(mean));
    }
    let mut zcuts: Vec<f64> = cuts.iter().map(|c| (c - mean) / sd).collect();
    let mut p = -GAUSS_CUTOFF;
    while p < GAUSS_CUTOFF {
        zcuts.push(p);
        p += PANEL;
    }
    integrate(
        |z| f(mean + sd * z) * normal_density(z),
        -GAUSS_CUTOFF,
        GAUSS_CUTOFF,
        &zcuts,
        rel_tol,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn polynomial_is_exact() {
        let v = integrate(|x| 3.0 * x * x, 0.0, 2.0, &[], 1e-12).unwrap();
        assert_relative_eq!(v, 8.0, max_relative = 1e-12);
    }

    #[test]
    fn jump_at_cut_is_handled() {
        let v = integrate(|x| if x > 0.3 { 1.0 } else { 0.0 }, 0.0, 1.0, &[0.3], 1e-12).unwrap();
        assert_relative_eq!(v, 0.7, max_relative = 1e-12);
    }

    #[test]
    fn gaussian_moments() {
        let m2 = gaussian_expectation(|y| y * y, 1.0, 2.0, &[], 1e-12).unwrap();
        assert_relative_eq!(m2, 5.0, max_relative = 1e-11);
        let tail = gaussian_expectation(|y| if y > 2.0 { 1.0 } else { 0.0 }, 0.0, 1.0, &[2.0], 1e-12).unwrap();
        assert_relative_eq!(tail, normal_tail(2.0), max_relative = 1e-11);
    }

    #[test]
    fn normal_tail_reference_values() {
        assert_relative_eq!(normal_tail(0.0), 0.5, max_relative = 1e-15);
        assert_relative_eq!(normal_tail(2.0), 0.022_750_131_948_179_2, max_relative = 1e-12);
        assert_relative_eq!(normal_tail(3.0), 0.001_349_898_031_630_095, max_relative = 1e-12);
    }
}
