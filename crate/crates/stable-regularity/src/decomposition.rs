//! The structured / pseudorandom / error decomposition
//! `f = f_str + f_psd + f_err`, built from a satisfied partition report,
//! with its no-error variants and the 0/1 graph specialization.
//!
//! Construction, cell by cell: on the error region
//! `Z = (V_0 x W) u (V x W_0)` set `f_str = 0` and `f_err = f`; on a block
//! pair `V_i x W_j` set `f_str = f` where `f` is within the homogeneity
//! radius of the pair's witnessing value `r_ij` and `f_str = r_ij`
//! otherwise, with `f_err = 0`. Then `f_psd := (f - f_str) - f_err`
//! evaluated left-to-right, so the additivity residual
//! `((f - f_str) - f_err) - f_psd` is exactly zero on every cell.

use crate::error::{Error, Result};
use crate::matrix::{Range, ValueMatrix};
use crate::norms::inner_product;
use crate::num_util::{abs_diff_le, le_scaled, le_scaled_sum};
use crate::partition::RegularityReport;
use serde::{Deserialize, Serialize};

/// A decomposition with its certificates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decomposition {
    pub f_str: ValueMatrix,
    pub f_psd: ValueMatrix,
    pub f_err: ValueMatrix,
    /// The structured template `g = sum r_ij 1_{V_i x W_j}` (zero on `Z`).
    pub template: ValueMatrix,
    /// Row-major `m x n` table of the witnessing values `r_ij`.
    pub r_table: Vec<f64>,
    /// Exceptional rows (`V_0`) and columns (`W_0`) spanning `Z`.
    pub z_rows: Vec<usize>,
    pub z_cols: Vec<usize>,
    pub delta: f64,
    pub epsilon: f64,
    /// The decay value this decomposition is certified at
    /// (`2 * gamma_used` of the underlying report).
    pub sigma_mn: f64,
    /// Typicality radius (the report's homogeneity radius).
    pub homog_radius: f64,
    /// `|supp(f_psd)|` and the fraction it is certified against.
    pub psd_support: usize,
    pub psd_support_bound: Option<f64>,
    /// Achieved `||f_str - template||_inf`.
    pub str_template_linf: f64,
    /// Recorded after `perfect_str`: certified bound on `||f_psd||_1`.
    pub psd_l1_bound: Option<f64>,
    /// The decomposed function itself.
    pub source: ValueMatrix,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoErrorVariant {
    /// Fold `f_err` into `f_psd`; the support bound relaxes to
    /// `sigma(mn) + 2 epsilon`.
    FoldErr,
    /// Replace `f_str` by its template, moving the fluctuation into
    /// `f_psd`; `f_psd` keeps an `l1` bound instead of a support bound.
    PerfectStr,
}

fn in_set(sorted: &[usize], x: usize) -> bool {
    sorted.binary_search(&x).is_ok()
}

fn first_failing(report: &RegularityReport) -> Option<(usize, usize)> {
    let n = report.partition_w.num_blocks();
    report
        .pair_results
        .iter()
        .position(|w| w.is_none())
        .map(|flat| (flat / n, flat % n))
}

/// Verify the five decomposition invariants, or say which failed.
fn check_invariants(d: &Decomposition) -> Result<()> {
    let f = &d.source;
    let cells = f.rows() * f.cols();
    // (1) exact additivity, as the zero residual of the defining difference
    for idx in 0..cells {
        let (a, b) = (idx / f.cols(), idx % f.cols());
        let residual =
            ((f.get(a, b) - d.f_str.get(a, b)) - d.f_err.get(a, b)) - d.f_psd.get(a, b);
        if residual != 0.0 {
            return Err(Error::internal(format!("additivity residual {residual} at ({a},{b})")));
        }
    }
    // (2) f_str is (radius; m, n)-structured via the template
    for idx in 0..cells {
        let (a, b) = (idx / f.cols(), idx % f.cols());
        if !abs_diff_le(d.f_str.get(a, b), d.template.get(a, b), d.homog_radius) {
            return Err(Error::internal(format!(
                "structured deviation exceeds the radius at ({a},{b})"
            )));
        }
    }
    // (3) pseudorandom part has small support
    if let Some(bound) = d.psd_support_bound {
        if !le_scaled(d.psd_support, bound, cells) {
            return Err(Error::internal(format!(
                "psd support {} exceeds {bound} of {cells} cells",
                d.psd_support
            )));
        }
    }
    // (4) error part is supported on Z with small strips
    for idx in 0..cells {
        let (a, b) = (idx / f.cols(), idx % f.cols());
        if d.f_err.get(a, b) != 0.0 && !in_set(&d.z_rows, a) && !in_set(&d.z_cols, b) {
            return Err(Error::internal(format!("f_err supported outside Z at ({a},{b})")));
        }
    }
    if !le_scaled(d.z_rows.len(), d.epsilon, f.rows()) {
        return Err(Error::internal("exceptional row strip exceeds epsilon"));
    }
    if !le_scaled(d.z_cols.len(), d.epsilon, f.cols()) {
        return Err(Error::internal("exceptional column strip exceeds epsilon"));
    }
    // (5) orthogonality: f_err has disjoint support from f_str and f_psd
    for idx in 0..cells {
        let (a, b) = (idx / f.cols(), idx % f.cols());
        if d.f_err.get(a, b) != 0.0
            && (d.f_str.get(a, b) != 0.0 || d.f_psd.get(a, b) != 0.0)
        {
            return Err(Error::internal(format!("overlapping supports at ({a},{b})")));
        }
    }
    let abs_psd = ValueMatrix::new(
        f.rows(),
        f.cols(),
        d.f_psd.entries().iter().map(|v| v.abs()).collect(),
        Range::Unit,
    )?;
    if inner_product(&d.f_err, &d.f_str)? != 0.0 || inner_product(&d.f_err, &abs_psd)? != 0.0 {
        return Err(Error::internal("orthogonality inner products are nonzero"));
    }
    Ok(())
}

/// Build the decomposition from a satisfied report.
///
/// The report must be satisfied, and to certify the intended
/// `sigma(mn)`-support bound it must have been produced at
/// `gamma = sigma(mn)/2`; the certified value is `sigma_mn = 2 *
/// gamma_used`. Running the partition search with the decay halved (see
/// `DecayFn::halved`) arranges exactly that.
pub fn decompose(f: &ValueMatrix, report: &RegularityReport) -> Result<Decomposition> {
    if f.range() != Range::Unit {
        return Err(Error::input("decomposition requires a unit-range matrix"));
    }
    if report.partition_v.ground_size != f.rows() || report.partition_w.ground_size != f.cols() {
        return Err(Error::input("report partitions do not match the matrix shape"));
    }
    if !report.satisfied {
        return Err(match first_failing(report) {
            Some((i, j)) => Error::precondition(format!(
                "report is not satisfied: block pair ({}, {}) has no homogeneity witness at \
                 radius {} and gamma {}",
                i + 1,
                j + 1,
                report.homog_radius,
                report.gamma_used
            )),
            None => Error::precondition(
                "report is not satisfied (exceptional or equal-size check failed)",
            ),
        });
    }
    build(f, report, None)
}

/// Shared construction; `round_r` switches on the 0/1 graph specialization.
fn build(
    f: &ValueMatrix,
    report: &RegularityReport,
    round_r: Option<()>,
) -> Result<Decomposition> {
    let pv = &report.partition_v;
    let pw = &report.partition_w;
    let n_blocks = pw.num_blocks();
    let rows = f.rows();
    let cols = f.cols();

    let mut z_rows = pv.exceptional.clone();
    z_rows.sort_unstable();
    let mut z_cols = pw.exceptional.clone();
    z_cols.sort_unstable();

    // Map each element to its block (usize::MAX = exceptional).
    let mut v_block = vec![usize::MAX; rows];
    for (i, block) in pv.blocks.iter().enumerate() {
        for &a in block {
            v_block[a] = i;
        }
    }
    let mut w_block = vec![usize::MAX; cols];
    for (j, block) in pw.blocks.iter().enumerate() {
        for &b in block {
            w_block[b] = j;
        }
    }

    let r_table: Vec<f64> = report
        .pair_results
        .iter()
        .map(|w| {
            let r = w.as_ref().map(|w| w.r).unwrap_or(0.0);
            match round_r {
                Some(()) => {
                    if r >= 0.5 {
                        1.0
                    } else {
                        0.0
                    }
                }
                None => r,
            }
        })
        .collect();
    // Typicality is always measured against the witness's own r.
    let r_witness: Vec<f64> =
        report.pair_results.iter().map(|w| w.as_ref().map(|w| w.r).unwrap_or(0.0)).collect();

    let mut f_str = vec![0.0f64; rows * cols];
    let mut f_err = vec![0.0f64; rows * cols];
    let mut f_psd = vec![0.0f64; rows * cols];
    let mut template = vec![0.0f64; rows * cols];
    for a in 0..rows {
        for b in 0..cols {
            let idx = a * cols + b;
            let v = f.get(a, b);
            let (i, j) = (v_block[a], w_block[b]);
            if i == usize::MAX || j == usize::MAX {
                // Z first, then typicality.
                f_err[idx] = v;
            } else {
                let flat = i * n_blocks + j;
                let r = r_table[flat];
                template[idx] = r;
                // Typical cells keep f itself; in the graph specialization
                // a 0/1 entry within radius < 1/2 of r equals its rounding,
                // so this still matches the template exactly.
                f_str[idx] = if abs_diff_le(v, r_witness[flat], report.homog_radius) {
                    v
                } else {
                    r
                };
            }
            f_psd[idx] = (v - f_str[idx]) - f_err[idx];
        }
    }

    let f_str = ValueMatrix::unit(rows, cols, f_str)?;
    let f_err = ValueMatrix::unit(rows, cols, f_err)?;
    let f_psd = ValueMatrix::signed(rows, cols, f_psd)?;
    let template = ValueMatrix::unit(rows, cols, template)?;
    let psd_support = f_psd.support_size();
    let str_template_linf = f_str
        .entries()
        .iter()
        .zip(template.entries())
        .fold(0.0f64, |m, (&x, &g)| m.max((x - g).abs()));
    let d = Decomposition {
        f_str,
        f_psd,
        f_err,
        template,
        r_table,
        z_rows,
        z_cols,
        delta: report.params.delta,
        epsilon: report.params.epsilon,
        sigma_mn: 2.0 * report.gamma_used,
        homog_radius: report.homog_radius,
        psd_support,
        psd_support_bound: Some(2.0 * report.gamma_used),
        str_template_linf,
        psd_l1_bound: None,
        source: f.clone(),
    };
    check_invariants(&d)?;
    Ok(d)
}

/// Produce a no-error variant of a decomposition.
pub fn decompose_no_error(d: &Decomposition, variant: NoErrorVariant) -> Result<Decomposition> {
    let f = &d.source;
    let rows = f.rows();
    let cols = f.cols();
    let mut out = d.clone();
    match variant {
        NoErrorVariant::FoldErr => {
            // Supports are disjoint, so per-cell one addend is zero and the
            // fold is exact.
            let psd: Vec<f64> = d
                .f_psd
                .entries()
                .iter()
                .zip(d.f_err.entries())
                .map(|(&p, &e)| if e != 0.0 { e } else { p })
                .collect();
            out.f_psd = ValueMatrix::signed(rows, cols, psd)?;
            out.f_err = ValueMatrix::unit(rows, cols, vec![0.0; rows * cols])?;
            out.psd_support = out.f_psd.support_size();
            let cells = rows * cols;
            if !le_scaled_sum(out.psd_support, d.sigma_mn, 2.0 * d.epsilon, cells) {
                return Err(Error::internal(
                    "folded psd support exceeds sigma(mn) + 2 epsilon",
                ));
            }
            // The folded bound is recorded as a single fraction.
            out.psd_support_bound = Some(d.sigma_mn + 2.0 * d.epsilon);
        }
        NoErrorVariant::PerfectStr => {
            out.f_str = d.template.clone();
            let psd: Vec<f64> = (0..rows * cols)
                .map(|idx| {
                    let (a, b) = (idx / cols, idx % cols);
                    (f.get(a, b) - d.template.get(a, b)) - d.f_err.get(a, b)
                })
                .collect();
            out.f_psd = ValueMatrix::signed(rows, cols, psd)?;
            out.psd_support = out.f_psd.support_size();
            out.psd_support_bound = None;
            out.str_template_linf = 0.0;
            let bound = d.psd_support_bound.unwrap_or(d.sigma_mn) + d.homog_radius;
            let l1 = crate::norms::norm(&out.f_psd, crate::norms::NormKind::L1);
            if l1 > bound {
                return Err(Error::internal(format!(
                    "perfect_str l1 bound violated: {l1} > {bound}"
                )));
            }
            out.psd_l1_bound = Some(bound);
        }
    }
    // Orthogonality and additivity must survive the rewrite.
    check_invariants(&out)?;
    Ok(out)
}

/// Per-pair edge densities and the near-empty / near-complete dichotomy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphDensityTable {
    pub m: usize,
    pub n: usize,
    /// Row-major `|E ∩ (V_i x W_j)| / (|V_i||W_j|)`.
    pub densities: Vec<f64>,
    /// The rounded uniform values (0 or 1 per pair).
    pub rounded: Vec<f64>,
    pub sigma_mn: f64,
    /// Pairs violating the dichotomy at `sigma_mn`, if any.
    pub violations: Vec<(usize, usize)>,
}

/// Decompose a 0/1 matrix with the uniform values rounded to `{0, 1}` and
/// check the near-empty / near-complete dichotomy of every block pair at
/// `sigma(mn)`.
pub fn graph_decompose(
    e: &ValueMatrix,
    report: &RegularityReport,
) -> Result<(Decomposition, GraphDensityTable)> {
    if !e.is_zero_one() {
        return Err(Error::input("graph decomposition requires 0/1 entries"));
    }
    if !(report.homog_radius < 0.5) {
        return Err(Error::input(
            "graph decomposition requires homogeneity radius < 1/2 so rounding is unambiguous",
        ));
    }
    if !report.satisfied {
        return Err(match first_failing(report) {
            Some((i, j)) => Error::precondition(format!(
                "report is not satisfied: block pair ({}, {}) has no homogeneity witness",
                i + 1,
                j + 1
            )),
            None => Error::precondition("report is not satisfied"),
        });
    }
    let d = build(e, report, Some(()))?;
    let pv = &report.partition_v;
    let pw = &report.partition_w;
    let m = pv.num_blocks();
    let n = pw.num_blocks();
    let mut densities = Vec::with_capacity(m * n);
    let mut violations = Vec::new();
    for i in 0..m {
        for j in 0..n {
            let cells = pv.blocks[i].len() * pw.blocks[j].len();
            let edges: usize = pv.blocks[i]
                .iter()
                .map(|&a| pw.blocks[j].iter().filter(|&&b| e.get(a, b) == 1.0).count())
                .sum();
            densities.push(edges as f64 / cells as f64);
            let near_empty = le_scaled(edges, d.sigma_mn, cells);
            let near_complete = le_scaled(cells - edges, d.sigma_mn, cells);
            if !(near_empty || near_complete) {
                violations.push((i, j));
            }
        }
    }
    let table = GraphDensityTable {
        m,
        n,
        densities,
        rounded: d.r_table.clone(),
        sigma_mn: d.sigma_mn,
        violations,
    };
    Ok((d, table))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decay::DecayFn;
    use crate::params::Params;
    use crate::partition::{find_partition, PartitionMode, verify_partition, Partition, VerifyOptions};

    fn params_halved(delta: f64, eps: f64, sigma: f64) -> Params {
        Params::new(delta, eps, eps, 2, DecayFn::constant(sigma).unwrap().halved()).unwrap()
    }

    fn half_graph(k: usize) -> ValueMatrix {
        let entries = (0..k)
            .flat_map(|i| (0..k).map(move |j| if i <= j { 1.0 } else { 0.0 }))
            .collect();
        ValueMatrix::unit(k, k, entries).unwrap()
    }

    #[test]
    fn constant_function_decomposes_trivially() {
        let f = ValueMatrix::constant(5, 5, 0.6, Range::Unit).unwrap();
        let p = params_halved(0.05, 0.2, 0.2);
        let report =
            find_partition(&f, &p, PartitionMode::GreedyRefine, &Default::default()).unwrap();
        let d = decompose(&f, &report).unwrap();
        assert!(d.f_psd.entries().iter().all(|&v| v == 0.0));
        assert!(d.f_err.entries().iter().all(|&v| v == 0.0));
        assert_eq!(d.f_str.entries(), f.entries());
        assert_eq!(d.str_template_linf, 0.0);
    }

    #[test]
    fn singleton_partition_gives_exact_structure() {
        let f = half_graph(4);
        let p = params_halved(0.01, 0.1, 0.2);
        let report = verify_partition(
            &f,
            &Partition::singletons(4),
            &Partition::singletons(4),
            &p,
            p.homogeneity_radius(),
            VerifyOptions::relative(),
        )
        .unwrap();
        let d = decompose(&f, &report).unwrap();
        assert!(d.f_psd.entries().iter().all(|&v| v == 0.0));
        assert!(d.f_err.entries().iter().all(|&v| v == 0.0));
        assert_eq!(d.f_str.entries(), f.entries());
    }

    #[test]
    fn unsatisfied_report_is_a_precondition_error() {
        let f = half_graph(4);
        let p = params_halved(0.01, 0.1, 0.2);
        let report = verify_partition(
            &f,
            &Partition::trivial(4),
            &Partition::trivial(4),
            &p,
            p.homogeneity_radius(),
            VerifyOptions::relative(),
        )
        .unwrap();
        assert!(!report.satisfied);
        let err = decompose(&f, &report);
        assert!(matches!(err, Err(Error::Precondition(msg)) if msg.contains("(1, 1)")));
    }

    #[test]
    fn fold_err_on_zero_error_is_identity() {
        let f = ValueMatrix::constant(4, 4, 0.3, Range::Unit).unwrap();
        let p = params_halved(0.05, 0.2, 0.2);
        let report =
            find_partition(&f, &p, PartitionMode::GreedyRefine, &Default::default()).unwrap();
        let d = decompose(&f, &report).unwrap();
        let folded = decompose_no_error(&d, NoErrorVariant::FoldErr).unwrap();
        assert_eq!(folded.f_psd.entries(), d.f_psd.entries());
        assert!(folded.f_err.entries().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn perfect_str_equals_template() {
        let mut entries = Vec::new();
        for a in 0..6 {
            for b in 0..6 {
                let base: f64 = if a < 3 { 0.2 } else { 0.8 };
                let jitter = 0.01 * ((a * 6 + b) % 3) as f64;
                entries.push((base + jitter).clamp(0.0, 1.0));
            }
        }
        let f = ValueMatrix::unit(6, 6, entries).unwrap();
        let p = params_halved(0.05, 0.2, 0.2);
        let report =
            find_partition(&f, &p, PartitionMode::GreedyRefine, &Default::default()).unwrap();
        if report.satisfied {
            let d = decompose(&f, &report).unwrap();
            let perf = decompose_no_error(&d, NoErrorVariant::PerfectStr).unwrap();
            assert_eq!(perf.f_str.entries(), perf.template.entries());
            assert_eq!(perf.str_template_linf, 0.0);
            assert!(perf.psd_l1_bound.is_some());
        }
    }

    #[test]
    fn graph_dichotomy_on_complete_and_empty() {
        for value in [0.0f64, 1.0] {
            let e = ValueMatrix::constant(6, 6, value, Range::Unit).unwrap();
            let p = params_halved(0.02, 0.2, 0.1);
            let report =
                find_partition(&e, &p, PartitionMode::GreedyRefine, &Default::default()).unwrap();
            let (d, table) = graph_decompose(&e, &report).unwrap();
            assert!(table.violations.is_empty());
            assert!(table.densities.iter().all(|&x| x == value));
            assert!(d.f_psd.entries().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn graph_decompose_rejects_fractional_entries() {
        let e = ValueMatrix::constant(3, 3, 0.5, Range::Unit).unwrap();
        let p = params_halved(0.02, 0.2, 0.1);
        let report =
            find_partition(&e, &p, PartitionMode::GreedyRefine, &Default::default()).unwrap();
        assert!(graph_decompose(&e, &report).is_err());
    }
}
