//! Shared parameter bundle for the partition and decomposition pipeline.

use crate::decay::DecayFn;
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Parameters `(delta, epsilon, gamma, k)` plus the decay function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Params {
    /// Stability / homogeneity radius parameter, in `(0, 1]`.
    pub delta: f64,
    /// Exceptional-set budget, in `(0, 1)`.
    pub epsilon: f64,
    /// Witness shrinkage budget, in `(0, 1)`.
    pub gamma: f64,
    /// Chain length for stability statements.
    pub k: u32,
    pub decay: DecayFn,
}

impl Params {
    pub fn new(delta: f64, epsilon: f64, gamma: f64, k: u32, decay: DecayFn) -> Result<Self> {
        if !(delta > 0.0 && delta <= 1.0) {
            return Err(Error::input(format!("delta {delta} must lie in (0, 1]")));
        }
        if !(epsilon > 0.0 && epsilon < 1.0) {
            return Err(Error::input(format!("epsilon {epsilon} must lie in (0, 1)")));
        }
        if !(gamma > 0.0 && gamma < 1.0) {
            return Err(Error::input(format!("gamma {gamma} must lie in (0, 1)")));
        }
        if k == 0 {
            return Err(Error::input("k must be a positive integer"));
        }
        decay.clone().validated()?;
        Ok(Params { delta, epsilon, gamma, k, decay })
    }

    /// Homogeneity radius of the main partition theorems: `5*delta + epsilon`.
    pub fn homogeneity_radius(&self) -> f64 {
        5.0 * self.delta + self.epsilon
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_out_of_range_parameters() {
        let d = DecayFn::constant(0.2).unwrap();
        assert!(Params::new(0.1, 0.2, 0.3, 2, d.clone()).is_ok());
        assert!(Params::new(0.0, 0.2, 0.3, 2, d.clone()).is_err());
        assert!(Params::new(0.1, 1.0, 0.3, 2, d.clone()).is_err());
        assert!(Params::new(0.1, 0.2, 0.0, 2, d.clone()).is_err());
        assert!(Params::new(0.1, 0.2, 0.3, 0, d).is_err());
    }

    #[test]
    fn radius() {
        let d = DecayFn::constant(0.2).unwrap();
        let p = Params::new(0.1, 0.25, 0.3, 2, d).unwrap();
        assert_eq!(p.homogeneity_radius(), 0.75);
    }
}
