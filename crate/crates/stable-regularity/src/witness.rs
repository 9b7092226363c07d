//! Witness types and their validity checks.
//!
//! A witness here is always a *certificate of failure or success that can be
//! replayed*: validation re-evaluates the defining inequalities against the
//! matrix by brute force, with exact comparisons on the stored doubles.

use crate::error::{Error, Result};
use crate::matrix::ValueMatrix;
use crate::num_util::{abs_diff_le, count_meets_fraction, ge_sum};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WitnessKind {
    /// Chain with `|f(a_i,b_j) - f(a_j,b_i)| >= delta` for all `i < j`.
    Plain,
    /// Threshold chain: `f(a_i,b_j) >= r + delta` when `i <= j`,
    /// `f(a_i,b_j) <= r` when `i > j`.
    Star,
}

/// An index-sequence certificate that a function fails `(k, delta)`- or
/// `*(k, delta)`-stability. Index sequences may repeat elements.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HalfGraphWitness {
    pub kind: WitnessKind,
    pub a_idx: Vec<usize>,
    pub b_idx: Vec<usize>,
    pub delta: f64,
    /// Threshold value; present for star witnesses only.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub r: Option<f64>,
}

impl HalfGraphWitness {
    pub fn plain(a_idx: Vec<usize>, b_idx: Vec<usize>, delta: f64) -> Self {
        HalfGraphWitness { kind: WitnessKind::Plain, a_idx, b_idx, delta, r: None }
    }

    pub fn star(a_idx: Vec<usize>, b_idx: Vec<usize>, delta: f64, r: f64) -> Self {
        HalfGraphWitness { kind: WitnessKind::Star, a_idx, b_idx, delta, r: Some(r) }
    }

    pub fn len(&self) -> usize {
        self.a_idx.len()
    }

    pub fn is_empty(&self) -> bool {
        self.a_idx.is_empty()
    }

    /// The same indices read as a plain witness at the same `delta`.
    pub fn as_plain(&self) -> HalfGraphWitness {
        HalfGraphWitness::plain(self.a_idx.clone(), self.b_idx.clone(), self.delta)
    }
}

/// True iff the witness's defining inequalities hold against `f`.
///
/// Out-of-bounds indices, mismatched sequence lengths, an empty chain, or a
/// star witness without `r` are input errors, not `false`.
pub fn validate_witness(f: &ValueMatrix, w: &HalfGraphWitness) -> Result<bool> {
    if w.a_idx.len() != w.b_idx.len() {
        return Err(Error::input("witness index sequences must have equal length"));
    }
    if w.a_idx.is_empty() {
        return Err(Error::input("witness chain must be nonempty"));
    }
    for &a in &w.a_idx {
        if a >= f.rows() {
            return Err(Error::input(format!("row index {a} out of bounds")));
        }
    }
    for &b in &w.b_idx {
        if b >= f.cols() {
            return Err(Error::input(format!("column index {b} out of bounds")));
        }
    }
    let k = w.a_idx.len();
    match w.kind {
        WitnessKind::Plain => {
            for i in 0..k {
                for j in (i + 1)..k {
                    let x = f.get(w.a_idx[i], w.b_idx[j]);
                    let y = f.get(w.a_idx[j], w.b_idx[i]);
                    // |x - y| >= delta, exactly
                    if !(ge_sum(x, y, w.delta) || ge_sum(y, x, w.delta)) {
                        return Ok(false);
                    }
                }
            }
            Ok(true)
        }
        WitnessKind::Star => {
            let r = w
                .r
                .ok_or_else(|| Error::input("star witness requires a threshold value r"))?;
            if !(0.0..=1.0).contains(&r) {
                return Ok(false);
            }
            for i in 0..k {
                for j in 0..k {
                    let v = f.get(w.a_idx[i], w.b_idx[j]);
                    if i <= j {
                        if !ge_sum(v, r, w.delta) {
                            return Ok(false);
                        }
                    } else if v > r {
                        return Ok(false);
                    }
                }
            }
            Ok(true)
        }
    }
}

/// Certificate that a block pair `(V*, W*)` is `(delta; gamma, epsilon)`-
/// homogeneous under normalized counting measures, with witnessing values
/// `r` (column side) and `s` (row side) and large subsets `V'`, `W'`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HomogeneityWitness {
    pub r: f64,
    pub s: f64,
    pub v_prime: Vec<usize>,
    pub w_prime: Vec<usize>,
    pub delta: f64,
    pub gamma: f64,
    pub epsilon: f64,
}

fn is_subset(sub: &[usize], sup: &[usize]) -> bool {
    let mut it = sup.iter();
    'outer: for &x in sub {
        for &y in it.by_ref() {
            if y == x {
                continue 'outer;
            }
            if y > x {
                return false;
            }
        }
        return false;
    }
    true
}

fn check_block(idx: &[usize], bound: usize, what: &str) -> Result<()> {
    if idx.is_empty() {
        return Err(Error::input(format!("{what} must be nonempty")));
    }
    crate::matrix::check_index_set(idx, bound, what)
}

/// True iff all four clauses of the homogeneity definition hold for `w`
/// against `f` restricted to `(v_star, w_star)`, with normalized counting
/// measures.
pub fn validate_homogeneity_witness(
    f: &ValueMatrix,
    v_star: &[usize],
    w_star: &[usize],
    w: &HomogeneityWitness,
) -> Result<bool> {
    check_block(v_star, f.rows(), "V*")?;
    check_block(w_star, f.cols(), "W*")?;
    crate::matrix::check_index_set(&w.v_prime, f.rows(), "V'")?;
    crate::matrix::check_index_set(&w.w_prime, f.cols(), "W'")?;
    if !is_subset(&w.v_prime, v_star) {
        return Err(Error::input("V' must be a subset of V*"));
    }
    if !is_subset(&w.w_prime, w_star) {
        return Err(Error::input("W' must be a subset of W*"));
    }
    if !(w.delta > 0.0 && w.gamma > 0.0 && w.epsilon > 0.0) {
        return Err(Error::input("witness parameters must be positive"));
    }
    if !(0.0..=1.0).contains(&w.r) || !(0.0..=1.0).contains(&w.s) {
        return Ok(false);
    }
    // (i), (ii): the large-subset clauses.
    if !count_meets_fraction(w.v_prime.len(), w.gamma, v_star.len()) {
        return Ok(false);
    }
    if !count_meets_fraction(w.w_prime.len(), w.gamma, w_star.len()) {
        return Ok(false);
    }
    // (iii): every b in W' sees mostly r-typical rows of V*.
    for &b in &w.w_prime {
        let near = v_star.iter().filter(|&&a| abs_diff_le(f.get(a, b), w.r, w.delta)).count();
        if !count_meets_fraction(near, w.epsilon, v_star.len()) {
            return Ok(false);
        }
    }
    // (iv): every a in V' sees mostly s-typical columns of W*.
    for &a in &w.v_prime {
        let near = w_star.iter().filter(|&&b| abs_diff_le(f.get(a, b), w.s, w.delta)).count();
        if !count_meets_fraction(near, w.epsilon, w_star.len()) {
            return Ok(false);
        }
    }
    Ok(true)
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

    #[test]
    fn plain_witness_on_half_graph() {
        let f = half_graph(3);
        let w = HalfGraphWitness::plain(vec![0, 1, 2], vec![0, 1, 2], 1.0);
        assert!(validate_witness(&f, &w).unwrap());
    }

    #[test]
    fn constant_matrix_has_no_plain_witness() {
        let f = ValueMatrix::constant(3, 3, 0.5, crate::matrix::Range::Unit).unwrap();
        let w = HalfGraphWitness::plain(vec![0, 1], vec![0, 1], 0.1);
        assert!(!validate_witness(&f, &w).unwrap());
    }

    #[test]
    fn star_witness_on_half_graph() {
        let f = half_graph(3);
        let w = HalfGraphWitness::star(vec![0, 1, 2], vec![0, 1, 2], 1.0, 0.0);
        assert!(validate_witness(&f, &w).unwrap());
        // A star witness is in particular a plain witness at the same delta.
        assert!(validate_witness(&f, &w.as_plain()).unwrap());
    }

    #[test]
    fn out_of_bounds_is_an_error() {
        let f = half_graph(2);
        let w = HalfGraphWitness::plain(vec![0, 5], vec![0, 1], 1.0);
        assert!(validate_witness(&f, &w).is_err());
    }

    #[test]
    fn constant_matrix_full_homogeneity_witness() {
        let f = ValueMatrix::constant(4, 5, 0.3, crate::matrix::Range::Unit).unwrap();
        let v: Vec<usize> = (0..4).collect();
        let ws: Vec<usize> = (0..5).collect();
        let w = HomogeneityWitness {
            r: 0.3,
            s: 0.3,
            v_prime: v.clone(),
            w_prime: ws.clone(),
            delta: 0.01,
            gamma: 0.01,
            epsilon: 0.01,
        };
        assert!(validate_homogeneity_witness(&f, &v, &ws, &w).unwrap());
    }

    #[test]
    fn half_graph_two_by_two_fails_at_small_radius() {
        // For b = 0, only a = 0 satisfies |f - 1| <= 0.1: fraction 1/2 < 0.6.
        let f = half_graph(2);
        let v = vec![0, 1];
        let w = HomogeneityWitness {
            r: 1.0,
            s: 1.0,
            v_prime: v.clone(),
            w_prime: v.clone(),
            delta: 0.1,
            gamma: 0.4,
            epsilon: 0.4,
        };
        assert!(!validate_homogeneity_witness(&f, &v, &v, &w).unwrap());
        // At epsilon = 0.5 the closed threshold 1/2 >= 1/2 is met.
        let w2 = HomogeneityWitness { epsilon: 0.5, gamma: 0.5, ..w };
        assert!(validate_homogeneity_witness(&f, &v, &v, &w2).unwrap());
    }

    #[test]
    fn empty_block_is_an_error() {
        let f = half_graph(2);
        let w = HomogeneityWitness {
            r: 0.5,
            s: 0.5,
            v_prime: vec![0],
            w_prime: vec![0],
            delta: 0.1,
            gamma: 0.5,
            epsilon: 0.5,
        };
        assert!(validate_homogeneity_witness(&f, &[], &[0, 1], &w).is_err());
    }
}
