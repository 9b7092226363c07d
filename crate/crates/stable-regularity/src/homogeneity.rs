//! Exact decision procedure for block-pair homogeneity under counting
//! measures, with witness synthesis and the derived deviation bounds.
//!
//! For a fixed threshold `r`, let `G(r)` be the set of columns `b` in `W*`
//! whose `r`-typical row count meets the `(1 - eps)` threshold. `|G(r)|` is
//! piecewise constant in `r`, and because each cell contributes the closed
//! interval `[f(a,b) - delta, f(a,b) + delta]` of feasible thresholds, a
//! maximizer of `|G(r)|` can always be found at the smallest double at or
//! above some interval's left endpoint (clamped into `[0,1]`). The search
//! therefore evaluates only those candidates, which makes it exact.

use crate::error::{Error, Result};
use crate::matrix::ValueMatrix;
use crate::num_util::{abs_diff_le, compensated_sum, count_meets_fraction};
use crate::witness::{validate_homogeneity_witness, HomogeneityWitness};
use serde::{Deserialize, Serialize};

fn next_up(v: f64) -> f64 {
    if v.is_nan() || v == f64::INFINITY {
        return v;
    }
    let bits = if v == 0.0 { 1 } else if v > 0.0 { v.to_bits() + 1 } else { v.to_bits() - 1 };
    f64::from_bits(bits)
}

/// Candidate thresholds: for every restricted entry, the left endpoint of
/// its feasible interval (and the ulp above it, guarding the rounding of
/// the subtraction), clamped into `[0,1]`, plus the endpoints themselves.
fn threshold_candidates(
    f: &ValueMatrix,
    v_star: &[usize],
    w_star: &[usize],
    delta: f64,
) -> Vec<f64> {
    let mut c = Vec::with_capacity(2 * v_star.len() * w_star.len() + 2);
    for &a in v_star {
        for &b in w_star {
            let v = f.get(a, b);
            let lo = v - delta;
            c.push(lo.clamp(0.0, 1.0));
            c.push(next_up(lo).clamp(0.0, 1.0));
        }
    }
    c.push(0.0);
    c.push(1.0);
    c.sort_by(f64::total_cmp);
    c.dedup();
    c
}

/// Columns of `W*` for which at least `(1 - eps)|V*|` rows of `V*` are
/// within `delta` of `r`.
fn qualifying_columns(
    f: &ValueMatrix,
    v_star: &[usize],
    w_star: &[usize],
    r: f64,
    delta: f64,
    eps: f64,
) -> Vec<usize> {
    w_star
        .iter()
        .copied()
        .filter(|&b| {
            let near = v_star.iter().filter(|&&a| abs_diff_le(f.get(a, b), r, delta)).count();
            count_meets_fraction(near, eps, v_star.len())
        })
        .collect()
}

fn best_threshold(
    f: &ValueMatrix,
    v_star: &[usize],
    w_star: &[usize],
    delta: f64,
    eps: f64,
) -> (f64, Vec<usize>) {
    let mut best_r = 0.0f64;
    let mut best: Vec<usize> = Vec::new();
    let mut first = true;
    for r in threshold_candidates(f, v_star, w_star, delta) {
        let cols = qualifying_columns(f, v_star, w_star, r, delta, eps);
        // strictly-greater keeps the smallest maximizing r
        if first || cols.len() > best.len() {
            best_r = r;
            best = cols;
            first = false;
        }
    }
    (best_r, best)
}

fn check_block(idx: &[usize], bound: usize, what: &str) -> Result<()> {
    if idx.is_empty() {
        return Err(Error::input(format!("{what} must be nonempty")));
    }
    crate::matrix::check_index_set(idx, bound, what)
}

/// Decide `(delta; gamma, epsilon)`-homogeneity of the pair `(V*, W*)` and
/// synthesize a maximal witness when one exists.
///
/// `gamma` and `epsilon` must lie in `(0,1)`; `delta` only needs to be
/// positive, since callers verify at radii like `5*delta + epsilon` that can
/// reach or exceed 1 (where every pair is trivially homogeneous).
pub fn check_homogeneous(
    f: &ValueMatrix,
    v_star: &[usize],
    w_star: &[usize],
    delta: f64,
    gamma: f64,
    epsilon: f64,
) -> Result<Option<HomogeneityWitness>> {
    check_block(v_star, f.rows(), "V*")?;
    check_block(w_star, f.cols(), "W*")?;
    if !(delta > 0.0) {
        return Err(Error::input("delta must be positive"));
    }
    for (name, v) in [("gamma", gamma), ("epsilon", epsilon)] {
        if !(v > 0.0 && v < 1.0) {
            return Err(Error::input(format!("{name} {v} must lie in (0, 1)")));
        }
    }
    let (r, w_prime) = best_threshold(f, v_star, w_star, delta, epsilon);
    if !count_meets_fraction(w_prime.len(), gamma, w_star.len()) {
        return Ok(None);
    }
    let ft = f.transpose();
    let (s, v_prime) = best_threshold(&ft, w_star, v_star, delta, epsilon);
    if !count_meets_fraction(v_prime.len(), gamma, v_star.len()) {
        return Ok(None);
    }
    let w = HomogeneityWitness { r, s, v_prime, w_prime, delta, gamma, epsilon };
    debug_assert!(validate_homogeneity_witness(f, v_star, w_star, &w)?);
    Ok(Some(w))
}

/// The deviation bounds a valid witness implies.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HomogeneityConsequences {
    /// `|| f|_{V* x W*} - r ||_1`
    pub l1_dev_r: f64,
    /// `|| f|_{V* x W*} - s ||_1`
    pub l1_dev_s: f64,
    /// `|r - s|`
    pub rs_gap: f64,
}

/// Compute the mean deviations from `r` and `s` over the restricted block
/// and the gap `|r - s|`, asserting the derived bounds
/// `l1_dev <= delta + gamma + epsilon` and
/// `rs_gap <= 2 (delta + gamma + epsilon)`.
pub fn homogeneity_consequences(
    f: &ValueMatrix,
    v_star: &[usize],
    w_star: &[usize],
    w: &HomogeneityWitness,
) -> Result<HomogeneityConsequences> {
    if !validate_homogeneity_witness(f, v_star, w_star, w)? {
        return Err(Error::input("witness does not validate against the block pair"));
    }
    let cells = (v_star.len() * w_star.len()) as f64;
    let dev = |t: f64| -> f64 {
        compensated_sum(
            v_star
                .iter()
                .flat_map(|&a| w_star.iter().map(move |&b| (f.get(a, b) - t).abs())),
        ) / cells
    };
    let out = HomogeneityConsequences {
        l1_dev_r: dev(w.r),
        l1_dev_s: dev(w.s),
        rs_gap: (w.r - w.s).abs(),
    };
    let bound = w.delta + w.gamma + w.epsilon;
    if out.l1_dev_r > bound || out.l1_dev_s > bound || out.rs_gap > 2.0 * bound {
        return Err(Error::internal(format!(
            "deviation bound violated: {out:?} against delta+gamma+epsilon = {bound}"
        )));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::Range;

    fn half_graph(k: usize) -> ValueMatrix {
        let entries = (0..k)
            .flat_map(|i| (0..k).map(move |j| if i <= j { 1.0 } else { 0.0 }))
            .collect();
        ValueMatrix::unit(k, k, entries).unwrap()
    }

    fn full(n: usize) -> Vec<usize> {
        (0..n).collect()
    }

    #[test]
    fn constant_block_is_always_homogeneous() {
        let f = ValueMatrix::constant(4, 3, 0.42, Range::Unit).unwrap();
        let w = check_homogeneous(&f, &full(4), &full(3), 0.05, 0.1, 0.1)
            .unwrap()
            .expect("witness");
        assert_eq!(w.r, 0.42);
        assert_eq!(w.s, 0.42);
        assert_eq!(w.v_prime, full(4));
        assert_eq!(w.w_prime, full(3));
    }

    #[test]
    fn half_graph_two_by_two_depends_on_epsilon() {
        let f = half_graph(2);
        // Every column splits 50/50, below the 0.6 threshold.
        assert!(check_homogeneous(&f, &full(2), &full(2), 0.1, 0.4, 0.4).unwrap().is_none());
        // The closed threshold 1/2 >= 1/2 is met at gamma = eps = 0.5.
        let w = check_homogeneous(&f, &full(2), &full(2), 0.1, 0.5, 0.5)
            .unwrap()
            .expect("witness");
        assert!(w.r == 0.0 || w.r == 1.0);
    }

    #[test]
    fn empty_block_and_bad_parameters_error() {
        let f = half_graph(2);
        assert!(check_homogeneous(&f, &[], &full(2), 0.1, 0.5, 0.5).is_err());
        assert!(check_homogeneous(&f, &full(2), &full(2), 0.1, 0.0, 0.5).is_err());
        assert!(check_homogeneous(&f, &full(2), &full(2), 0.1, 0.5, 1.0).is_err());
    }

    #[test]
    fn radius_at_least_one_is_trivially_homogeneous() {
        let f = half_graph(3);
        let w = check_homogeneous(&f, &full(3), &full(3), 1.0, 0.1, 0.1).unwrap();
        assert!(w.is_some());
    }

    #[test]
    fn symmetry_under_transpose() {
        let f = ValueMatrix::unit(3, 4, vec![
            0.1, 0.9, 0.2, 0.8, //
            0.15, 0.85, 0.25, 0.75, //
            0.12, 0.88, 0.22, 0.78,
        ])
        .unwrap();
        let ft = f.transpose();
        for (d, g, e) in [(0.1, 0.3, 0.3), (0.3, 0.2, 0.2), (0.05, 0.5, 0.5)] {
            let a = check_homogeneous(&f, &full(3), &full(4), d, g, e).unwrap();
            let b = check_homogeneous(&ft, &full(4), &full(3), d, g, e).unwrap();
            assert_eq!(a.is_some(), b.is_some());
            if let (Some(a), Some(b)) = (a, b) {
                assert_eq!(a.r, b.s);
                assert_eq!(a.s, b.r);
            }
        }
    }

    #[test]
    fn consequences_on_constant_block() {
        let f = ValueMatrix::constant(3, 3, 0.5, Range::Unit).unwrap();
        let w = check_homogeneous(&f, &full(3), &full(3), 0.1, 0.2, 0.2).unwrap().unwrap();
        let c = homogeneity_consequences(&f, &full(3), &full(3), &w).unwrap();
        assert_eq!(c.l1_dev_r, 0.0);
        assert_eq!(c.l1_dev_s, 0.0);
        assert_eq!(c.rs_gap, 0.0);
    }

    #[test]
    fn monotone_in_all_three_parameters() {
        let f = half_graph(3);
        if let Some(w) = check_homogeneous(&f, &full(3), &full(3), 0.2, 0.4, 0.4).unwrap() {
            let relaxed = HomogeneityWitness {
                delta: 0.3,
                gamma: 0.5,
                epsilon: 0.6,
                ..w
            };
            assert!(validate_homogeneity_witness(&f, &full(3), &full(3), &relaxed).unwrap());
        }
    }
}
