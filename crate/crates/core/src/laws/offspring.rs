use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const SUM_TOL: f64 = 1e-12;

/// Finite-support offspring distribution; `pmf[a]` is the probability of `a` children.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct OffspringLaw {
    pmf: Vec<f64>,
    cdf: Vec<f64>,
}

impl OffspringLaw {
    pub fn new(mut pmf: Vec<f64>) -> Result<Self> {
        if pmf.is_empty() {
            return Err(Error::InvalidLaw("empty pmf".into()));
        }
        if let Some(p) = pmf.iter().find(|p| !p.is_finite() || **p < 0.0) {
            return Err(Error::InvalidLaw(format!("probability {p} is not a nonnegative number")));
        }
        let total: f64 = pmf.iter().sum();
        if (total - 1.0).abs() > SUM_TOL {
            return Err(Error::InvalidLaw(format!("probabilities sum to {total}, expected 1")));
        }
        while pmf.len() > 1 && pmf[pmf.len() - 1] == 0.0 {
            pmf.pop();
        }
        let mut acc = 0.0;
        let mut cdf: Vec<f64> = pmf
            .iter()
            .map(|p| {
                acc += p;
                acc
            })
            .collect();
        *cdf.last_mut().unwrap() = f64::INFINITY;
        Ok(OffspringLaw { pmf, cdf })
    }

    pub fn point_mass(a: usize) -> Self {
        let mut pmf = vec![0.0; a + 1];
        pmf[a] = 1.0;
        OffspringLaw::new(pmf).expect("point mass is valid")
    }

    /// Builds a law from `(count, probability)` pairs.
    pub fn from_pairs(pairs: &[(usize, f64)]) -> Result<Self> {
        let max = pairs.iter().map(|(a, _)| *a).max().unwrap_or(0);
        let mut pmf = vec![0.0; max + 1];
        for &(a, p) in pairs {
            pmf[a] += p;
        }
        OffspringLaw::new(pmf)
    }

    pub fn pmf(&self) -> &[f64] {
        &self.pmf
    }

    pub fn prob(&self, a: usize) -> f64 {
        self.pmf.get(a).copied().unwrap_or(0.0)
    }

    pub fn max_children(&self) -> usize {
        self.pmf.len() - 1
    }

    /// `(count, probability)` for counts with positive probability.
    pub fn support(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.pmf.iter().copied().enumerate().filter(|(_, p)| *p > 0.0)
    }

    /// `m^n = sum_a a^n pmf(a)`.
    pub fn moment(&self, n: u32) -> f64 {
        if n == 0 {
            return 1.0;
        }
        self.support().map(|(a, p)| (a as f64).powi(n as i32) * p).sum()
    }

    pub fn mean(&self) -> f64 {
        self.moment(1)
    }

    /// The `n`th size-biased law, `a^n pmf(a) / m^n`.
    pub fn size_bias(&self, n: u32) -> Result<OffspringLaw> {
        let m = self.moment(n);
        if n > 0 && m <= 0.0 {
            return Err(Error::DegenerateLaw(
                "law is concentrated at 0; a spine cannot continue".into(),
            ));
        }
        let pmf: Vec<f64> = self
            .pmf
            .iter()
            .enumerate()
            .map(|(a, p)| (a as f64).powi(n as i32) * p / m)
            .collect();
        let total: f64 = pmf.iter().sum();
        OffspringLaw::new(pmf.into_iter().map(|p| p / total).collect())
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        self.cdf.partition_point(|c| *c <= u)
    }
}

impl TryFrom<Vec<f64>> for OffspringLaw {
    type Error = Error;

    fn try_from(pmf: Vec<f64>) -> Result<Self> {
        OffspringLaw::new(pmf)
    }
}

impl From<OffspringLaw> for Vec<f64> {
    fn from(law: OffspringLaw) -> Vec<f64> {
        law.pmf
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn half_zero_two() -> OffspringLaw {
        OffspringLaw::new(vec![0.5, 0.0, 0.5]).unwrap()
    }

    #[test]
    fn moment_examples() {
        assert_eq!(OffspringLaw::point_mass(2).moment(2), 4.0);
        assert_eq!(half_zero_two().moment(1), 1.0);
        assert_eq!(half_zero_two().moment(0), 1.0);
        assert_eq!(OffspringLaw::point_mass(0).moment(3), 0.0);
    }

    #[test]
    fn size_bias_examples() {
        assert_eq!(half_zero_two().size_bias(2).unwrap().pmf(), &[0.0, 0.0, 1.0]);
        assert_eq!(OffspringLaw::point_mass(1).size_bias(5).unwrap().pmf(), &[0.0, 1.0]);
        let biased = OffspringLaw::new(vec![0.0, 0.5, 0.5]).unwrap().size_bias(1).unwrap();
        assert_relative_eq!(biased.prob(1), 1.0 / 3.0, epsilon = 1e-15);
        assert_relative_eq!(biased.prob(2), 2.0 / 3.0, epsilon = 1e-15);
        assert_eq!(biased.prob(0), 0.0);
    }

    #[test]
    fn size_bias_of_extinct_law_is_degenerate() {
        assert!(matches!(
            OffspringLaw::point_mass(0).size_bias(1),
            Err(Error::DegenerateLaw(_))
        ));
    }

    #[test]
    fn validation() {
        assert!(OffspringLaw::new(vec![0.5, 0.4]).is_err());
        assert!(OffspringLaw::new(vec![-0.1, 1.1]).is_err());
        assert!(OffspringLaw::new(vec![]).is_err());
        assert_eq!(OffspringLaw::new(vec![0.0, 1.0, 0.0]).unwrap().max_children(), 1);
    }

    #[test]
    fn sampling_frequencies() {
        let law = OffspringLaw::new(vec![1.0 / 3.0, 1.0 / 3.0, 0.0, 1.0 / 3.0]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut counts = [0usize; 4];
        let n = 60_000;
        for _ in 0..n {
            counts[law.sample(&mut rng)] += 1;
        }
        assert_eq!(counts[2], 0);
        for a in [0, 1, 3] {
            let f = counts[a] as f64 / n as f64;
            assert!((f - 1.0 / 3.0).abs() < 0.01, "a={a} f={f}");
        }
    }

    fn arb_law() -> impl Strategy<Value = OffspringLaw> {
        proptest::collection::vec(0.0f64..1.0, 2..6).prop_filter_map("nonzero", |w| {
            let total: f64 = w.iter().sum();
            if total <= 1e-6 {
                return None;
            }
            OffspringLaw::new(w.iter().map(|x| x / total).collect()).ok()
        })
    }

    proptest! {
        #[test]
        fn moments_increase_with_mass_beyond_one(law in arb_law(), n in 1u32..5) {
            let beyond = law.support().any(|(a, _)| a >= 2);
            prop_assume!(beyond);
            prop_assert!(law.moment(n + 1) > law.moment(n));
        }

        #[test]
        fn size_bias_composes(law in arb_law(), n in 1u32..3, m in 1u32..3) {
            prop_assume!(law.moment(n) > 0.0);
            let twice = law.size_bias(n).unwrap().size_bias(m).unwrap();
            let once = law.size_bias(n + m).unwrap();
            for a in 0..=law.max_children() {
                prop_assert!((twice.prob(a) - once.prob(a)).abs() < 1e-12);
            }
        }
    }
}
