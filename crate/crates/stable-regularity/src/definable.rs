//! Expressions for definable sets (unions of intersections of interval
//! preimages) and min-max functions, with complexity accounting.
//!
//! Interval endpoints are exact rationals; membership of a matrix entry in
//! an interval is decided by lifting the double to a rational and comparing
//! exactly. The complexity of a rational `r/s` in lowest terms is
//! `max(|r|, s)`; the complexity of an expression is the maximum of its
//! clause count, its widest clause, and its largest endpoint complexity.

use crate::error::{Error, Result};
use crate::matrix::ValueMatrix;
use crate::num_util::rational_of;
use num_bigint::BigInt;
use num_rational::BigRational;
use serde::{Deserialize, Serialize};

/// Which side of the bipartite domain an expression defines a subset of (or
/// a function on); parameters live on the opposite side.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    V,
    W,
}

/// An exact rational, reduced on construction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rational {
    pub num: i64,
    pub den: i64,
}

impl Rational {
    pub fn new(num: i64, den: i64) -> Result<Self> {
        if den == 0 {
            return Err(Error::input("rational with zero denominator"));
        }
        let (mut n, mut d) = if den < 0 { (-num, -den) } else { (num, den) };
        let g = gcd(n.unsigned_abs(), d.unsigned_abs()).max(1) as i64;
        n /= g;
        d /= g;
        Ok(Rational { num: n, den: d })
    }

    pub fn integer(n: i64) -> Self {
        Rational { num: n, den: 1 }
    }

    /// Number-theoretic height: `max(|num|, den)` in lowest terms.
    pub fn complexity(&self) -> u64 {
        self.num.unsigned_abs().max(self.den as u64)
    }

    fn to_big(self) -> BigRational {
        BigRational::new(BigInt::from(self.num), BigInt::from(self.den))
    }
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// A closed rational interval `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RationalInterval {
    pub lo: Rational,
    pub hi: Rational,
}

impl RationalInterval {
    pub fn new(lo: Rational, hi: Rational) -> Self {
        RationalInterval { lo, hi }
    }

    pub fn complexity(&self) -> u64 {
        self.lo.complexity().max(self.hi.complexity())
    }

    /// Exact membership of a double.
    pub fn contains(&self, v: f64) -> bool {
        let v = rational_of(v);
        self.lo.to_big() <= v && v <= self.hi.to_big()
    }

    pub fn is_empty(&self) -> bool {
        self.lo.to_big() > self.hi.to_big()
    }
}

/// One atom `{x : f(x, param) in interval}` with the parameter on the
/// opposite side.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub param: usize,
    pub interval: RationalInterval,
}

/// A union of intersections of atoms: evaluated against a matrix it yields
/// `U_i  ∩_j  {x : f(x, b_{i,j}) in D_{i,j}}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DefinableSetExpr {
    pub side: Side,
    pub clauses: Vec<Vec<Atom>>,
}

impl DefinableSetExpr {
    /// `max(m, max n_i, max endpoint complexity)`.
    pub fn complexity(&self) -> u64 {
        let m = self.clauses.len() as u64;
        let widest = self.clauses.iter().map(|c| c.len() as u64).max().unwrap_or(0);
        let endpoints = self
            .clauses
            .iter()
            .flatten()
            .map(|a| a.interval.complexity())
            .max()
            .unwrap_or(1);
        m.max(widest).max(endpoints).max(1)
    }
}

/// Evaluate the union-of-intersections against `f`, returning the sorted
/// index set on the expression's side.
pub fn evaluate_set(expr: &DefinableSetExpr, f: &ValueMatrix) -> Result<Vec<usize>> {
    let (side_len, param_len) = match expr.side {
        Side::V => (f.rows(), f.cols()),
        Side::W => (f.cols(), f.rows()),
    };
    for atom in expr.clauses.iter().flatten() {
        if atom.param >= param_len {
            return Err(Error::input(format!(
                "atom parameter {} out of bounds ({param_len})",
                atom.param
            )));
        }
    }
    let value = |x: usize, p: usize| match expr.side {
        Side::V => f.get(x, p),
        Side::W => f.get(p, x),
    };
    let out = (0..side_len)
        .filter(|&x| {
            expr.clauses.iter().any(|clause| {
                clause.iter().all(|atom| atom.interval.contains(value(x, atom.param)))
            })
        })
        .collect();
    Ok(out)
}

/// A min-max expression `min_i max_j f(x, y_{i,j})`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinMaxExpr {
    pub side: Side,
    pub shape: Vec<Vec<usize>>,
}

impl MinMaxExpr {
    /// `max(m, max n_i)`.
    pub fn complexity(&self) -> u64 {
        let m = self.shape.len() as u64;
        let widest = self.shape.iter().map(|c| c.len() as u64).max().unwrap_or(0);
        m.max(widest).max(1)
    }
}

/// Evaluate `min_i max_j f(x, y_{i,j})` at the point `x` on the expression's
/// side.
pub fn evaluate_minmax(expr: &MinMaxExpr, f: &ValueMatrix, x: usize) -> Result<f64> {
    let (side_len, param_len) = match expr.side {
        Side::V => (f.rows(), f.cols()),
        Side::W => (f.cols(), f.rows()),
    };
    if x >= side_len {
        return Err(Error::input(format!("point {x} out of bounds ({side_len})")));
    }
    if expr.shape.is_empty() || expr.shape.iter().any(|c| c.is_empty()) {
        return Err(Error::input("min-max expression must have nonempty clauses"));
    }
    for &p in expr.shape.iter().flatten() {
        if p >= param_len {
            return Err(Error::input(format!("parameter {p} out of bounds ({param_len})")));
        }
    }
    let value = |x: usize, p: usize| match expr.side {
        Side::V => f.get(x, p),
        Side::W => f.get(p, x),
    };
    let v = expr
        .shape
        .iter()
        .map(|clause| {
            clause.iter().map(|&p| value(x, p)).fold(f64::NEG_INFINITY, f64::max)
        })
        .fold(f64::INFINITY, f64::min);
    Ok(v)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn half_graph(k: usize) -> ValueMatrix {
        let entries = (0..k)
            .flat_map(|i| (0..k).map(move |j| if i <= j { 1.0 } else { 0.0 }))
            .collect();
        ValueMatrix::unit(k, k, entries).unwrap()
    }

    fn atom(param: usize, lo: (i64, i64), hi: (i64, i64)) -> Atom {
        Atom {
            param,
            interval: RationalInterval::new(
                Rational::new(lo.0, lo.1).unwrap(),
                Rational::new(hi.0, hi.1).unwrap(),
            ),
        }
    }

    #[test]
    fn full_range_atom_selects_everything() {
        let f = half_graph(3);
        let e = DefinableSetExpr { side: Side::V, clauses: vec![vec![atom(1, (0, 1), (1, 1))]] };
        assert_eq!(evaluate_set(&e, &f).unwrap(), vec![0, 1, 2]);
    }

    #[test]
    fn point_interval_on_half_graph() {
        // Rows a with f(a, 1) = 1 on the 3x3 half graph: rows 0 and 1.
        let f = half_graph(3);
        let e = DefinableSetExpr { side: Side::V, clauses: vec![vec![atom(1, (1, 1), (1, 1))]] };
        assert_eq!(evaluate_set(&e, &f).unwrap(), vec![0, 1]);
    }

    #[test]
    fn out_of_range_interval_is_empty() {
        let f = half_graph(3);
        let e = DefinableSetExpr { side: Side::V, clauses: vec![vec![atom(0, (2, 1), (3, 1))]] };
        assert_eq!(evaluate_set(&e, &f).unwrap(), Vec::<usize>::new());
    }

    #[test]
    fn complexity_examples() {
        // single atom with D = [0, 1/2]: max(1, 1, height(1/2)) = 2
        let e = DefinableSetExpr { side: Side::V, clauses: vec![vec![atom(0, (0, 1), (1, 2))]] };
        assert_eq!(e.complexity(), 2);
        // three clauses of two atoms each with endpoints 0 and 1: 3
        let c = vec![atom(0, (0, 1), (1, 1)), atom(1, (0, 1), (1, 1))];
        let e3 = DefinableSetExpr { side: Side::W, clauses: vec![c.clone(), c.clone(), c] };
        assert_eq!(e3.complexity(), 3);
        let mm = MinMaxExpr { side: Side::V, shape: vec![vec![0]] };
        assert_eq!(mm.complexity(), 1);
    }

    #[test]
    fn complexity_is_monotone_under_growth() {
        let base = DefinableSetExpr { side: Side::V, clauses: vec![vec![atom(0, (0, 1), (1, 3))]] };
        let mut grown = base.clone();
        grown.clauses.push(vec![atom(1, (0, 1), (1, 1))]);
        assert!(grown.complexity() >= base.complexity());
        let mut wider = base.clone();
        wider.clauses[0].push(atom(1, (1, 7), (2, 7)));
        assert!(wider.complexity() >= base.complexity());
    }

    #[test]
    fn minmax_evaluation() {
        let f = ValueMatrix::unit(1, 2, vec![0.2, 0.7]).unwrap();
        let single = MinMaxExpr { side: Side::V, shape: vec![vec![1]] };
        assert_eq!(evaluate_minmax(&single, &f, 0).unwrap(), 0.7);
        let maxpair = MinMaxExpr { side: Side::V, shape: vec![vec![0, 1]] };
        assert_eq!(evaluate_minmax(&maxpair, &f, 0).unwrap(), 0.7);
        let minmax = MinMaxExpr { side: Side::V, shape: vec![vec![0], vec![1]] };
        assert_eq!(evaluate_minmax(&minmax, &f, 0).unwrap(), 0.2);
    }

    #[test]
    fn minmax_is_lipschitz_in_the_sup_metric() {
        let f = ValueMatrix::unit(
            3,
            4,
            vec![
                0.1, 0.5, 0.9, 0.3, //
                0.2, 0.4, 0.8, 0.35, //
                0.9, 0.1, 0.2, 0.6,
            ],
        )
        .unwrap();
        let expr = MinMaxExpr { side: Side::V, shape: vec![vec![0, 2], vec![1, 3]] };
        for q in 0..3 {
            for q2 in 0..3 {
                let d: f64 = (0..4)
                    .map(|b| (f.get(q, b) - f.get(q2, b)).abs())
                    .fold(0.0, f64::max);
                let dv = (evaluate_minmax(&expr, &f, q).unwrap()
                    - evaluate_minmax(&expr, &f, q2).unwrap())
                .abs();
                assert!(dv <= d + 1e-15, "lipschitz violated: {dv} > {d}");
            }
        }
    }

    #[test]
    fn exact_membership_at_dyadic_boundaries() {
        let f = ValueMatrix::unit(1, 1, vec![0.5]).unwrap();
        let inc = DefinableSetExpr { side: Side::V, clauses: vec![vec![atom(0, (0, 1), (1, 2))]] };
        assert_eq!(evaluate_set(&inc, &f).unwrap(), vec![0]);
        let exc = DefinableSetExpr { side: Side::V, clauses: vec![vec![atom(0, (0, 1), (499, 1000))]] };
        assert_eq!(evaluate_set(&exc, &f).unwrap(), Vec::<usize>::new());
    }
}
