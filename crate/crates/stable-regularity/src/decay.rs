//! Decay functions `sigma : N -> (0, 1)` and the equipartition modulus `tau`.

use crate::error::{Error, Result};
use crate::num_util::{rational_of, rational_to_f64_nearest};
use num_bigint::BigInt;
use num_rational::BigRational;
use serde::{Deserialize, Serialize};

/// A decay function. Evaluation is deterministic and always lands in
/// `(0, 1)`; results that would underflow are clamped to the smallest
/// positive double.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DecayFn {
    /// `sigma(n) = c`
    Constant { c: f64 },
    /// `sigma(n) = c / n`
    Inv { c: f64 },
    /// `sigma(n) = c / n^2`
    InvSq { c: f64 },
    /// `sigma(n) = c * 2^(-n)`
    Exp { c: f64 },
    /// Explicit values for `n = 1, 2, ...`, then `fallback` beyond the table.
    Table { values: Vec<f64>, fallback: f64 },
}

impl DecayFn {
    pub fn constant(c: f64) -> Result<Self> {
        DecayFn::Constant { c }.validated()
    }

    pub fn validated(self) -> Result<Self> {
        let ok = match &self {
            DecayFn::Constant { c } | DecayFn::Inv { c } | DecayFn::InvSq { c } => {
                (0.0..1.0).contains(c) && *c > 0.0
            }
            DecayFn::Exp { c } => *c > 0.0 && *c < 2.0,
            DecayFn::Table { values, fallback } => {
                values.iter().chain(std::iter::once(fallback)).all(|v| *v > 0.0 && *v < 1.0)
            }
        };
        if ok {
            Ok(self)
        } else {
            Err(Error::input("decay function must take values in (0,1) for every n >= 1"))
        }
    }

    /// Evaluate at `n >= 1`.
    pub fn eval(&self, n: usize) -> f64 {
        let n = n.max(1);
        let v = match self {
            DecayFn::Constant { c } => *c,
            DecayFn::Inv { c } => c / n as f64,
            DecayFn::InvSq { c } => c / (n as f64 * n as f64),
            DecayFn::Exp { c } => {
                if n > 1100 {
                    0.0 // underflow; clamped below
                } else {
                    c * 2.0f64.powi(-(n as i32))
                }
            }
            DecayFn::Table { values, fallback } => {
                values.get(n - 1).copied().unwrap_or(*fallback)
            }
        };
        v.max(f64::MIN_POSITIVE)
    }

    /// Running-minimum monotonization: `sigma'(n) = min_{1<=i<=n} sigma(i)`.
    ///
    /// The analytic kinds are already non-increasing and are returned as-is;
    /// tables are rewritten by prefix minima.
    pub fn monotonized(&self) -> DecayFn {
        match self {
            DecayFn::Table { values, fallback } => {
                let mut minima = Vec::with_capacity(values.len());
                let mut m = f64::INFINITY;
                for &v in values {
                    m = m.min(v);
                    minima.push(m);
                }
                DecayFn::Table { values: minima, fallback: fallback.min(m) }
            }
            other => other.clone(),
        }
    }

    /// The pointwise-halved decay `n -> sigma(n) / 2`; used to request
    /// partition reports strong enough for the decomposition construction.
    pub fn halved(&self) -> DecayFn {
        match self {
            DecayFn::Constant { c } => DecayFn::Constant { c: c / 2.0 },
            DecayFn::Inv { c } => DecayFn::Inv { c: c / 2.0 },
            DecayFn::InvSq { c } => DecayFn::InvSq { c: c / 2.0 },
            DecayFn::Exp { c } => DecayFn::Exp { c: c / 2.0 },
            DecayFn::Table { values, fallback } => DecayFn::Table {
                values: values.iter().map(|v| v / 2.0).collect(),
                fallback: fallback / 2.0,
            },
        }
    }

    /// Parse the CLI syntax `const:c`, `inv:c`, `invsq:c`, `exp:c`.
    pub fn parse_cli(s: &str) -> Result<Self> {
        let (kind, c) = s
            .split_once(':')
            .ok_or_else(|| Error::input(format!("decay spec '{s}' must look like 'const:0.2'")))?;
        let c: f64 = c
            .parse()
            .map_err(|_| Error::input(format!("decay constant '{c}' is not a number")))?;
        let f = match kind {
            "const" => DecayFn::Constant { c },
            "inv" => DecayFn::Inv { c },
            "invsq" => DecayFn::InvSq { c },
            "exp" => DecayFn::Exp { c },
            other => return Err(Error::input(format!("unknown decay kind '{other}'"))),
        };
        f.validated()
    }
}

impl std::fmt::Display for DecayFn {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            DecayFn::Constant { c } => write!(f, "const:{c}"),
            DecayFn::Inv { c } => write!(f, "inv:{c}"),
            DecayFn::InvSq { c } => write!(f, "invsq:{c}"),
            DecayFn::Exp { c } => write!(f, "exp:{c}"),
            DecayFn::Table { values, fallback } => {
                write!(f, "table:[{} values, fallback {fallback}]", values.len())
            }
        }
    }
}

/// Argument of the inner decay in the equipartition modulus:
/// `4 n^2 ceil(1/eps)^2`, saturating.
pub fn tau_inner_arg(n: usize, eps: f64) -> usize {
    let k = (1.0 / eps).ceil();
    let k = if k >= usize::MAX as f64 / 2.0 { usize::MAX / 4 } else { k as usize };
    4usize
        .saturating_mul(n.saturating_mul(n))
        .saturating_mul(k.saturating_mul(k))
}

/// The equipartition modulus `tau(n) = eps/(2n) * sigma(4 n^2 ceil(1/eps)^2)`,
/// evaluated on the monotonized `sigma` and correctly rounded: the product
/// is formed in exact rational arithmetic and rounded once to the nearest
/// double.
pub fn tau(sigma: &DecayFn, eps: f64, n: usize) -> f64 {
    let sig = sigma.monotonized().eval(tau_inner_arg(n, eps));
    let exact = rational_of(eps) * rational_of(sig)
        / BigRational::from_integer(BigInt::from(2 * n.max(1)));
    rational_to_f64_nearest(&exact)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validation() {
        assert!(DecayFn::constant(0.5).is_ok());
        assert!(DecayFn::constant(0.0).is_err());
        assert!(DecayFn::constant(1.0).is_err());
        assert!(DecayFn::Inv { c: 0.9 }.validated().is_ok());
        assert!(DecayFn::Exp { c: 1.5 }.validated().is_ok());
        assert!(DecayFn::Exp { c: 2.0 }.validated().is_err());
        assert!(DecayFn::Table { values: vec![0.5, 0.2], fallback: 0.1 }.validated().is_ok());
        assert!(DecayFn::Table { values: vec![0.5, 1.0], fallback: 0.1 }.validated().is_err());
    }

    #[test]
    fn eval_stays_positive() {
        let d = DecayFn::Exp { c: 1.0 };
        assert!(d.eval(5000) > 0.0);
        assert_eq!(d.eval(3), 0.125);
    }

    #[test]
    fn monotonization_is_a_running_minimum() {
        let t = DecayFn::Table { values: vec![0.5, 0.9, 0.3, 0.8], fallback: 0.7 };
        let m = t.monotonized();
        assert_eq!(m.eval(1), 0.5);
        assert_eq!(m.eval(2), 0.5);
        assert_eq!(m.eval(3), 0.3);
        assert_eq!(m.eval(4), 0.3);
        assert_eq!(m.eval(10), 0.3);
    }

    #[test]
    fn tau_matches_the_construction() {
        // eps = 1/2, sigma constant 1/4: tau(2) = (1/8) * (1/4) = 1/32.
        let sigma = DecayFn::constant(0.25).unwrap();
        assert_eq!(tau(&sigma, 0.5, 2), 1.0 / 32.0);
        assert_eq!(tau_inner_arg(2, 0.5), 64);
    }

    #[test]
    fn cli_parsing() {
        assert_eq!(DecayFn::parse_cli("const:0.2").unwrap(), DecayFn::Constant { c: 0.2 });
        assert_eq!(DecayFn::parse_cli("inv:0.5").unwrap(), DecayFn::Inv { c: 0.5 });
        assert!(DecayFn::parse_cli("const:1.5").is_err());
        assert!(DecayFn::parse_cli("nope").is_err());
    }
}
