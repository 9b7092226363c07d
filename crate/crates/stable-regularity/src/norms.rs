//! Normalized inner products, norms, and rectangle pseudorandomness.
//!
//! All inner products and p-norms are normalized by the domain size:
//! `<f,g> = (1/|X|) sum f(x) g(x)`, `||f||_1 = (1/|X|) sum |f(x)|`,
//! `||f||_2 = sqrt(<f,f>)`, `||f||_inf = max |f(x)|`.

use crate::error::{Error, Result};
use crate::matrix::ValueMatrix;
use crate::num_util::compensated_sum;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormKind {
    L1,
    L2,
    Linf,
}

/// Normalized inner product of two same-shape matrices.
pub fn inner_product(f: &ValueMatrix, g: &ValueMatrix) -> Result<f64> {
    if f.rows() != g.rows() || f.cols() != g.cols() {
        return Err(Error::input(format!(
            "dimension mismatch: {}x{} vs {}x{}",
            f.rows(),
            f.cols(),
            g.rows(),
            g.cols()
        )));
    }
    let n = (f.rows() * f.cols()) as f64;
    let s = compensated_sum(f.entries().iter().zip(g.entries()).map(|(&a, &b)| a * b));
    Ok(s / n)
}

/// All three norms at once, with the chain `l1 <= l2 <= linf` enforced.
///
/// Sums are Neumaier-compensated. When every `|entry|` is the same value the
/// three norms are returned exactly; otherwise `l2` is clamped into
/// `[l1, linf]` to absorb final-rounding wobble (at most a few ulps).
pub fn norms(f: &ValueMatrix) -> (f64, f64, f64) {
    let n = (f.rows() * f.cols()) as f64;
    let linf = f.entries().iter().fold(0.0f64, |m, &v| m.max(v.abs()));
    let first = f.entries()[0].abs();
    if f.entries().iter().all(|&v| v.abs() == first) {
        return (first, first, first);
    }
    let l1 = compensated_sum(f.entries().iter().map(|&v| v.abs())) / n;
    let l2 = (compensated_sum(f.entries().iter().map(|&v| v * v)) / n).max(0.0).sqrt();
    let l1 = l1.min(linf);
    let l2 = l2.clamp(l1, linf);
    (l1, l2, linf)
}

pub fn norm(f: &ValueMatrix, which: NormKind) -> f64 {
    let (l1, l2, linf) = norms(f);
    match which {
        NormKind::L1 => l1,
        NormKind::L2 => l2,
        NormKind::Linf => linf,
    }
}

/// Normalized correlation with a rectangle indicator:
/// `<f, 1_{A x B}> = (1/(|V||W|)) sum_{a in A, b in B} f(a,b)`.
///
/// This is the canonical scoring function; every reported rectangle value in
/// this module is recomputed through it.
pub fn rectangle_correlation(f: &ValueMatrix, rows: &[usize], cols: &[usize]) -> Result<f64> {
    crate::matrix::check_index_set(rows, f.rows(), "rectangle rows")?;
    crate::matrix::check_index_set(cols, f.cols(), "rectangle cols")?;
    let n = (f.rows() * f.cols()) as f64;
    let s = compensated_sum(
        rows.iter().flat_map(|&a| cols.iter().map(move |&b| f.get(a, b))),
    );
    Ok(s / n)
}

/// Result of a pseudorandomness measurement: the best rectangle correlation
/// found (in absolute value), an upper bound, and the witnessing rectangle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PseudorandomnessReport {
    pub lower_bound: f64,
    pub upper_bound: f64,
    pub exact: bool,
    pub best_rectangle: (Vec<usize>, Vec<usize>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PseudorandomMode {
    Exact,
    Bounds,
}

/// Search budget for [`pseudorandomness`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PseudorandomBudget {
    /// Exact mode is allowed only when `min(|V|, |W|) <= exact_cap`.
    pub exact_cap: usize,
    /// Seeded random restarts for the alternating ascent.
    pub restarts: usize,
    /// Sweep cap per restart.
    pub max_sweeps: usize,
    pub seed: u64,
}

impl Default for PseudorandomBudget {
    fn default() -> Self {
        PseudorandomBudget { exact_cap: 20, restarts: 16, max_sweeps: 64, seed: 1 }
    }
}

struct Candidate {
    value: f64,
    rows: Vec<usize>,
    cols: Vec<usize>,
}

/// `max(value)` with the lexicographically smallest rectangle as tiebreak.
fn better(new: &Candidate, cur: &Option<Candidate>) -> bool {
    match cur {
        None => true,
        Some(c) => {
            new.value > c.value
                || (new.value == c.value
                    && (new.rows.as_slice(), new.cols.as_slice())
                        < (c.rows.as_slice(), c.cols.as_slice()))
        }
    }
}

/// Measure how far `f` is from being rectangle-pseudorandom.
///
/// Exact mode enumerates all subsets `B` of the smaller side; for a fixed
/// `B` the inner maximization over `A` is closed-form (take exactly the rows
/// whose partial sum over `B` is strictly positive, or strictly negative for
/// the opposite sign). This yields the true maximum of `|<f, 1_{A x B}>|`.
///
/// Bounds mode runs a seeded alternating ascent for the lower bound and
/// reports `min(||f||_1, 1)` as the upper bound.
pub fn pseudorandomness(
    f: &ValueMatrix,
    mode: PseudorandomMode,
    budget: PseudorandomBudget,
) -> Result<PseudorandomnessReport> {
    match mode {
        PseudorandomMode::Exact => {
            let small = f.rows().min(f.cols());
            if small > budget.exact_cap {
                return Err(Error::capability(format!(
                    "exact pseudorandomness requires min(|V|,|W|) <= {} (got {})",
                    budget.exact_cap, small
                )));
            }
            if f.cols() <= f.rows() {
                exact_search(f, false)
            } else {
                exact_search(&f.transpose(), true)
            }
        }
        PseudorandomMode::Bounds => bounds_search(f, budget),
    }
}

fn finish(f: &ValueMatrix, best: Candidate, transposed: bool, exact: bool, upper: f64) -> Result<PseudorandomnessReport> {
    let (rows, cols) = if transposed { (best.cols, best.rows) } else { (best.rows, best.cols) };
    let lower = rectangle_correlation(f, &rows, &cols)?.abs().min(1.0);
    let upper = if exact { lower } else { upper.max(lower).min(1.0) };
    Ok(PseudorandomnessReport { lower_bound: lower, upper_bound: upper, exact, best_rectangle: (rows, cols) })
}

fn exact_search(f: &ValueMatrix, transposed: bool) -> Result<PseudorandomnessReport> {
    let orig = if transposed { f.transpose() } else { f.clone() };
    let cols = f.cols();
    let mut best: Option<Candidate> = Some(Candidate { value: 0.0, rows: vec![], cols: vec![] });
    let scale = (f.rows() * f.cols()) as f64;
    for mask in 0u64..(1u64 << cols) {
        let b_set: Vec<usize> = (0..cols).filter(|b| mask >> b & 1 == 1).collect();
        let mut pos_rows = Vec::new();
        let mut neg_rows = Vec::new();
        let mut pos = Vec::new();
        let mut neg = Vec::new();
        for a in 0..f.rows() {
            let s = compensated_sum(b_set.iter().map(|&b| f.get(a, b)));
            if s > 0.0 {
                pos_rows.push(a);
                pos.push(s);
            } else if s < 0.0 {
                neg_rows.push(a);
                neg.push(s);
            }
        }
        for (rows, sums) in [(pos_rows, pos), (neg_rows, neg)] {
            let value = (compensated_sum(sums.iter().copied()) / scale).abs();
            let cand = Candidate { value, rows, cols: b_set.clone() };
            if better(&cand, &best) {
                best = Some(cand);
            }
        }
    }
    finish(&orig, best.unwrap(), transposed, true, 0.0)
}

fn optimal_rows(f: &ValueMatrix, b_set: &[usize], positive: bool) -> Vec<usize> {
    (0..f.rows())
        .filter(|&a| {
            let s = compensated_sum(b_set.iter().map(|&b| f.get(a, b)));
            if positive {
                s > 0.0
            } else {
                s < 0.0
            }
        })
        .collect()
}

fn optimal_cols(f: &ValueMatrix, a_set: &[usize], positive: bool) -> Vec<usize> {
    (0..f.cols())
        .filter(|&b| {
            let s = compensated_sum(a_set.iter().map(|&a| f.get(a, b)));
            if positive {
                s > 0.0
            } else {
                s < 0.0
            }
        })
        .collect()
}

fn bounds_search(f: &ValueMatrix, budget: PseudorandomBudget) -> Result<PseudorandomnessReport> {
    let mut best: Option<Candidate> = Some(Candidate { value: 0.0, rows: vec![], cols: vec![] });
    for restart in 0..budget.restarts.max(1) {
        let start: Vec<usize> = (0..f.cols())
            .filter(|&b| {
                crate::generators::prf(budget.seed, (restart as u64) << 32 | b as u64) & 1 == 1
            })
            .collect();
        for positive in [true, false] {
            let mut b_set = start.clone();
            let mut a_set = Vec::new();
            for _ in 0..budget.max_sweeps {
                let a_new = optimal_rows(f, &b_set, positive);
                let b_new = optimal_cols(f, &a_new, positive);
                let fixed = a_new == a_set && b_new == b_set;
                a_set = a_new;
                b_set = b_new;
                if fixed {
                    break;
                }
            }
            let value = rectangle_correlation(f, &a_set, &b_set)?.abs();
            let cand = Candidate { value, rows: a_set, cols: b_set };
            if better(&cand, &best) {
                best = Some(cand);
            }
        }
    }
    let (l1, _, _) = norms(f);
    finish(f, best.unwrap(), false, false, l1.min(1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::Range;

    fn half_graph2() -> ValueMatrix {
        ValueMatrix::unit(2, 2, vec![1.0, 1.0, 0.0, 1.0]).unwrap()
    }

    #[test]
    fn inner_product_examples() {
        let ones = ValueMatrix::constant(3, 4, 1.0, Range::Unit).unwrap();
        assert_eq!(inner_product(&ones, &ones).unwrap(), 1.0);
        let zero = ValueMatrix::constant(3, 4, 0.0, Range::Unit).unwrap();
        assert_eq!(inner_product(&ones, &zero).unwrap(), 0.0);
        let hg = half_graph2();
        let ones2 = ValueMatrix::constant(2, 2, 1.0, Range::Unit).unwrap();
        assert_eq!(inner_product(&hg, &ones2).unwrap(), 0.75);
        assert!(inner_product(&hg, &ones).is_err());
    }

    #[test]
    fn norm_examples() {
        let c = ValueMatrix::constant(5, 7, 0.3, Range::Unit).unwrap();
        assert_eq!(norm(&c, NormKind::L1), 0.3);
        assert_eq!(norm(&c, NormKind::L2), 0.3);
        assert_eq!(norm(&c, NormKind::Linf), 0.3);
        let hg = half_graph2();
        assert_eq!(norm(&hg, NormKind::L1), 0.75);
        assert_eq!(norm(&hg, NormKind::L2), 3.0f64.sqrt() / 2.0);
        assert_eq!(norm(&hg, NormKind::Linf), 1.0);
        let z = ValueMatrix::constant(2, 2, 0.0, Range::Unit).unwrap();
        assert_eq!(norm(&z, NormKind::L2), 0.0);
    }

    #[test]
    fn zero_matrix_is_exactly_pseudorandom() {
        let z = ValueMatrix::constant(3, 3, 0.0, Range::Signed).unwrap();
        let r = pseudorandomness(&z, PseudorandomMode::Exact, Default::default()).unwrap();
        assert_eq!(r.lower_bound, 0.0);
        assert_eq!(r.upper_bound, 0.0);
        assert!(r.exact);
    }

    #[test]
    fn all_ones_attains_one_at_the_full_rectangle() {
        let m = ValueMatrix::constant(4, 4, 1.0, Range::Signed).unwrap();
        let r = pseudorandomness(&m, PseudorandomMode::Exact, Default::default()).unwrap();
        assert_eq!(r.lower_bound, 1.0);
        assert_eq!(r.best_rectangle.0, vec![0, 1, 2, 3]);
        assert_eq!(r.best_rectangle.1, vec![0, 1, 2, 3]);
    }

    #[test]
    fn exact_mode_respects_the_cap() {
        let m = ValueMatrix::constant(25, 25, 0.5, Range::Signed).unwrap();
        let err = pseudorandomness(
            &m,
            PseudorandomMode::Exact,
            PseudorandomBudget { exact_cap: 20, ..Default::default() },
        );
        assert!(matches!(err, Err(Error::Capability(_))));
    }

    #[test]
    fn ascent_never_beats_exact() {
        let entries = vec![0.5, -0.25, 0.0, 1.0, -1.0, 0.125];
        let m = ValueMatrix::signed(2, 3, entries).unwrap();
        let exact = pseudorandomness(&m, PseudorandomMode::Exact, Default::default()).unwrap();
        let bounds = pseudorandomness(&m, PseudorandomMode::Bounds, Default::default()).unwrap();
        assert!(bounds.lower_bound <= exact.lower_bound);
        assert!(bounds.upper_bound >= bounds.lower_bound);
    }
}
