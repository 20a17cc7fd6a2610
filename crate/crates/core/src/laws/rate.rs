use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum RateFunction {
    Constant { value: f64 },
    /// `values[i]` applies on `[breakpoints[i-1], breakpoints[i])`, with the
    /// first and last values extending to infinity.
    Piecewise { breakpoints: Vec<f64>, values: Vec<f64> },
}

/// Branching rate `R(y)` with a declared upper bound used for thinning.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BranchRate {
    function: RateFunction,
    max: f64,
}

impl BranchRate {
    pub fn constant(value: f64) -> Result<Self> {
        if !(value >= 0.0 && value.is_finite()) {
            return Err(Error::InvalidModel(format!("branch rate {value} must be finite and nonnegative")));
        }
        Ok(BranchRate {
            function: RateFunction::Constant { value },
            max: value,
        })
    }

    pub fn piecewise(breakpoints: Vec<f64>, values: Vec<f64>, max: f64) -> Result<Self> {
        if values.len() != breakpoints.len() + 1 {
            return Err(Error::InvalidModel(format!(
                "{} breakpoints need {} values, got {}",
                breakpoints.len(),
                breakpoints.len() + 1,
                values.len()
            )));
        }
        if breakpoints.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::InvalidModel("breakpoints must be strictly increasing".into()));
        }
        if let Some(v) = values.iter().find(|v| !(**v >= 0.0 && **v <= max)) {
            return Err(Error::InvalidModel(format!("rate value {v} outside [0, {max}]")));
        }
        Ok(BranchRate {
            function: RateFunction::Piecewise { breakpoints, values },
            max,
        })
    }

    pub fn from_function(function: RateFunction, max: Option<f64>) -> Result<Self> {
        match function {
            RateFunction::Constant { value } => {
                let rate = BranchRate::constant(value)?;
                match max {
                    Some(m) if m < value => Err(Error::InvalidModel(format!(
                        "declared maximum {m} below the constant rate {value}"
                    ))),
                    _ => Ok(rate),
                }
            }
            RateFunction::Piecewise { breakpoints, values } => {
                let m = max.unwrap_or_else(|| values.iter().copied().fold(0.0, f64::max));
                BranchRate::piecewise(breakpoints, values, m)
            }
        }
    }

    pub fn function(&self) -> &RateFunction {
        &self.function
    }

    pub fn eval(&self, y: f64) -> f64 {
        match &self.function {
            RateFunction::Constant { value } => *value,
            RateFunction::Piecewise { breakpoints, values } => {
                values[breakpoints.partition_point(|b| *b <= y)]
            }
        }
    }

    pub fn max(&self) -> f64 {
        self.max
    }

    pub fn constant_value(&self) -> Option<f64> {
        match self.function {
            RateFunction::Constant { value } => Some(value),
            RateFunction::Piecewise { .. } => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn piecewise_lookup() {
        let r = BranchRate::piecewise(vec![0.0, 1.0], vec![0.5, 1.0, 2.0], 2.0).unwrap();
        assert_eq!(r.eval(-3.0), 0.5);
        assert_eq!(r.eval(0.0), 1.0);
        assert_eq!(r.eval(0.99), 1.0);
        assert_eq!(r.eval(7.0), 2.0);
        assert_eq!(r.constant_value(), None);
    }

    #[test]
    fn rejects_values_above_declared_max() {
        assert!(BranchRate::piecewise(vec![0.0], vec![0.5, 3.0], 2.0).is_err());
        assert!(BranchRate::piecewise(vec![1.0, 0.0], vec![0.5, 1.0, 1.0], 2.0).is_err());
        assert!(BranchRate::constant(-1.0).is_err());
        assert!(BranchRate::from_function(RateFunction::Constant { value: 2.0 }, Some(1.0)).is_err());
    }
}
