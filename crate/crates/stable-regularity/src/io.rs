//! File formats: dense CSV matrices and JSON reports, plus replay
//! verification of self-describing reports.
//!
//! A matrix file is CSV with an optional header line `rows,cols,range`
//! (e.g. `3,4,unit`) followed by one row of comma-separated decimals per
//! matrix row. Numeric output uses 17 significant digits, which
//! round-trips doubles exactly. Reports are JSON documents carrying the
//! parameters, the certificates, and a content hash of the canonical matrix
//! serialization they were produced from; `verify` replays every
//! certificate and reports the first discrepancy by name.

use crate::decomposition::{Decomposition, GraphDensityTable, NoErrorVariant};
use crate::error::{Error, Result};
use crate::generators::GeneratorSpec;
use crate::matrix::{Range, ValueMatrix};
use crate::norms::{rectangle_correlation, PseudorandomBudget, PseudorandomMode, PseudorandomnessReport};
use crate::num_util::le_scaled;
use crate::partition::{ExceptionalMode, RegularityReport};
use crate::stability::{SearchMode, StabilityReport};
use crate::witness::{validate_homogeneity_witness, validate_witness, HomogeneityWitness};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};

pub const SCHEMA_VERSION: u32 = 1;

fn format_entry(v: f64) -> String {
    format!("{:.16e}", v)
}

/// Canonical serialization: header plus row-major CSV body, `\n`-separated.
pub fn matrix_to_csv(m: &ValueMatrix) -> String {
    let range = match m.range() {
        Range::Unit => "unit",
        Range::Signed => "signed",
    };
    let mut out = format!("{},{},{}\n", m.rows(), m.cols(), range);
    for a in 0..m.rows() {
        let line: Vec<String> = (0..m.cols()).map(|b| format_entry(m.get(a, b))).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    out
}

/// SHA-256 of the canonical serialization, hex-encoded.
pub fn matrix_hash(m: &ValueMatrix) -> String {
    let mut hasher = Sha256::new();
    hasher.update(matrix_to_csv(m).as_bytes());
    let digest = hasher.finalize();
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn write_matrix(path: &Path, m: &ValueMatrix) -> Result<()> {
    std::fs::write(path, matrix_to_csv(m))?;
    Ok(())
}

/// Parse a matrix file. Without a header, dimensions are inferred from the
/// grid and the range is `unit` when all entries lie in `[0,1]`, else
/// `signed`.
pub fn parse_matrix(text: &str) -> Result<ValueMatrix> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty()).peekable();
    let mut header: Option<(usize, usize, Range)> = None;
    if let Some(first) = lines.peek() {
        let fields: Vec<&str> = first.split(',').map(str::trim).collect();
        if fields.len() == 3 {
            if let (Ok(r), Ok(c)) = (fields[0].parse::<usize>(), fields[1].parse::<usize>()) {
                let range = match fields[2] {
                    "unit" => Some(Range::Unit),
                    "signed" => Some(Range::Signed),
                    _ => None,
                };
                if let Some(range) = range {
                    header = Some((r, c, range));
                    lines.next();
                }
            }
        }
    }
    let mut entries = Vec::new();
    let mut cols: Option<usize> = None;
    let mut rows = 0usize;
    for line in lines {
        let row: Vec<f64> = line
            .split(',')
            .map(|s| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::input(format!("bad matrix entry '{}'", s.trim())))
            })
            .collect::<Result<_>>()?;
        match cols {
            None => cols = Some(row.len()),
            Some(c) if c != row.len() => {
                return Err(Error::input("ragged matrix rows"));
            }
            _ => {}
        }
        rows += 1;
        entries.extend(row);
    }
    let cols = cols.ok_or_else(|| Error::input("empty matrix file"))?;
    match header {
        Some((r, c, range)) => {
            if r != rows || c != cols {
                return Err(Error::input(format!(
                    "header says {r}x{c} but the grid is {rows}x{cols}"
                )));
            }
            ValueMatrix::new(rows, cols, entries, range)
        }
        None => {
            let range = if entries.iter().all(|v| (0.0..=1.0).contains(v)) {
                Range::Unit
            } else {
                Range::Signed
            };
            ValueMatrix::new(rows, cols, entries, range)
        }
    }
}

pub fn read_matrix(path: &Path) -> Result<ValueMatrix> {
    parse_matrix(&std::fs::read_to_string(path)?)
}

// ---------------------------------------------------------------------------
// reports

/// Decomposition metadata stored in a report; the three part matrices live
/// in sibling CSV files referenced (and hashed) here.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecompositionMeta {
    pub r_table: Vec<f64>,
    pub z_rows: Vec<usize>,
    pub z_cols: Vec<usize>,
    pub sigma_mn: f64,
    pub homog_radius: f64,
    pub epsilon: f64,
    pub delta: f64,
    pub psd_support: usize,
    pub psd_support_bound: Option<f64>,
    pub str_template_linf: f64,
    pub psd_l1_bound: Option<f64>,
    pub f_str_file: String,
    pub f_psd_file: String,
    pub f_err_file: String,
    pub f_str_hash: String,
    pub f_psd_hash: String,
    pub f_err_hash: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum ReportBody {
    Stability {
        mode: SearchMode,
        report: StabilityReport,
    },
    Homogeneity {
        v_star: Vec<usize>,
        w_star: Vec<usize>,
        delta: f64,
        gamma: f64,
        epsilon: f64,
        witness: Option<HomogeneityWitness>,
    },
    Partition {
        report: RegularityReport,
    },
    Equipartition {
        report: RegularityReport,
    },
    Decompose {
        report: RegularityReport,
        variant: Option<NoErrorVariant>,
        meta: DecompositionMeta,
        graph: Option<GraphDensityTable>,
    },
    Pseudorandom {
        mode: PseudorandomMode,
        budget: PseudorandomBudget,
        report: PseudorandomnessReport,
    },
    Generate {
        spec: GeneratorSpec,
        matrix_file: String,
    },
}

/// A self-describing result document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportFile {
    pub schema_version: u32,
    /// Hash of the canonical serialization of the analyzed matrix.
    pub matrix_hash: String,
    /// Path of the matrix file, relative to the report's directory.
    pub matrix_path: String,
    pub body: ReportBody,
}

impl ReportFile {
    pub fn new(matrix: &ValueMatrix, matrix_path: impl Into<String>, body: ReportBody) -> Self {
        ReportFile {
            schema_version: SCHEMA_VERSION,
            matrix_hash: matrix_hash(matrix),
            matrix_path: matrix_path.into(),
            body,
        }
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self)?;
        std::fs::write(path, json)?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<ReportFile> {
        let text = std::fs::read_to_string(path)?;
        let report: ReportFile = serde_json::from_str(&text)?;
        if report.schema_version != SCHEMA_VERSION {
            return Err(Error::input(format!(
                "unsupported schema version {}",
                report.schema_version
            )));
        }
        Ok(report)
    }
}

/// Outcome of replaying a report: every failed certificate by name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyOutcome {
    pub failures: Vec<String>,
}

impl VerifyOutcome {
    pub fn ok(&self) -> bool {
        self.failures.is_empty()
    }
}

fn resolve(base: &Path, rel: &str) -> PathBuf {
    let p = Path::new(rel);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.parent().unwrap_or(Path::new(".")).join(p)
    }
}

/// Replay a report against its matrix. `matrix_override` substitutes the
/// matrix file location without affecting hash checking.
pub fn verify_report(
    report_path: &Path,
    matrix_override: Option<&Path>,
) -> Result<VerifyOutcome> {
    let report = ReportFile::read(report_path)?;
    let matrix_file = match matrix_override {
        Some(p) => p.to_path_buf(),
        None => resolve(report_path, &report.matrix_path),
    };
    let f = read_matrix(&matrix_file)?;
    let mut failures = Vec::new();
    if matrix_hash(&f) != report.matrix_hash {
        failures.push("matrix_hash: content hash mismatch".to_string());
    }
    match &report.body {
        ReportBody::Stability { report: rep, .. } => {
            verify_stability(&f, rep, &mut failures);
        }
        ReportBody::Homogeneity { v_star, w_star, witness, .. } => {
            if let Some(w) = witness {
                match validate_homogeneity_witness(&f, v_star, w_star, w) {
                    Ok(true) => {}
                    Ok(false) => failures.push("homogeneity_witness: does not validate".into()),
                    Err(e) => failures.push(format!("homogeneity_witness: {e}")),
                }
            }
        }
        ReportBody::Partition { report: rep } | ReportBody::Equipartition { report: rep } => {
            verify_regularity(&f, rep, &mut failures);
        }
        ReportBody::Decompose { report: rep, meta, graph, .. } => {
            verify_regularity(&f, rep, &mut failures);
            verify_decomposition(&f, report_path, meta, &mut failures);
            if let Some(g) = graph {
                if !g.violations.is_empty() {
                    failures.push("graph_dichotomy: report records violations".into());
                }
            }
        }
        ReportBody::Pseudorandom { report: rep, .. } => {
            match rectangle_correlation(&f, &rep.best_rectangle.0, &rep.best_rectangle.1) {
                Ok(v) => {
                    if v.abs().min(1.0) != rep.lower_bound {
                        failures.push(format!(
                            "pseudorandom_rectangle: replayed correlation {} != lower bound {}",
                            v.abs(),
                            rep.lower_bound
                        ));
                    }
                }
                Err(e) => failures.push(format!("pseudorandom_rectangle: {e}")),
            }
            if !(0.0..=1.0).contains(&rep.lower_bound)
                || rep.lower_bound > rep.upper_bound
                || rep.upper_bound > 1.0
                || (rep.exact && rep.lower_bound != rep.upper_bound)
            {
                failures.push("pseudorandom_bounds: inconsistent bounds".into());
            }
        }
        ReportBody::Generate { spec, .. } => match crate::generators::generate(spec) {
            Ok(m) => {
                if matrix_hash(&m) != report.matrix_hash {
                    failures.push("generate: regenerated matrix hash differs".into());
                }
            }
            Err(e) => failures.push(format!("generate: {e}")),
        },
    }
    Ok(VerifyOutcome { failures })
}

fn verify_stability(f: &ValueMatrix, rep: &StabilityReport, failures: &mut Vec<String>) {
    let checks: [(&str, &Option<usize>, &Option<crate::witness::HalfGraphWitness>); 2] = [
        ("plain", &rep.plain_index, &rep.plain_witness),
        ("star", &rep.star_index, &rep.star_witness),
    ];
    for (name, index, witness) in checks {
        if let Some(w) = witness {
            match validate_witness(f, w) {
                Ok(true) => {}
                Ok(false) => failures.push(format!("{name}_witness: does not validate")),
                Err(e) => failures.push(format!("{name}_witness: {e}")),
            }
            if w.delta != rep.delta {
                failures.push(format!("{name}_witness: delta differs from the report"));
            }
            if Some(w.len()) != *index {
                failures.push(format!("{name}_witness: length differs from the index"));
            }
        } else if matches!(index, Some(i) if *i > 0) {
            failures.push(format!("{name}_index: positive index without a witness"));
        }
    }
    if let (Some(p), Some(s)) = (rep.plain_index, rep.star_index) {
        if rep.exact && s > p {
            failures.push("indices: exact star index exceeds plain index".into());
        }
    }
}

fn verify_regularity(f: &ValueMatrix, rep: &RegularityReport, failures: &mut Vec<String>) {
    if let Err(e) = rep.partition_v.validate() {
        failures.push(format!("partition_v: {e}"));
        return;
    }
    if let Err(e) = rep.partition_w.validate() {
        failures.push(format!("partition_w: {e}"));
        return;
    }
    if rep.partition_v.ground_size != f.rows() || rep.partition_w.ground_size != f.cols() {
        failures.push("partitions: sizes do not match the matrix".into());
        return;
    }
    let m = rep.partition_v.num_blocks();
    let n = rep.partition_w.num_blocks();
    if rep.pair_results.len() != m * n {
        failures.push("pair_results: wrong table size".into());
        return;
    }
    let mut all_pairs = true;
    for i in 0..m {
        for j in 0..n {
            match &rep.pair_results[i * n + j] {
                Some(w) => {
                    let ok = validate_homogeneity_witness(
                        f,
                        &rep.partition_v.blocks[i],
                        &rep.partition_w.blocks[j],
                        w,
                    );
                    match ok {
                        Ok(true) => {
                            if w.delta != rep.homog_radius
                                || w.gamma != rep.gamma_used
                                || w.epsilon != rep.gamma_used
                            {
                                failures.push(format!(
                                    "pair ({},{}): witness parameters differ from the report",
                                    i + 1,
                                    j + 1
                                ));
                            }
                        }
                        Ok(false) => {
                            failures
                                .push(format!("pair ({},{}): witness fails", i + 1, j + 1));
                        }
                        Err(e) => {
                            failures.push(format!("pair ({},{}): {e}", i + 1, j + 1));
                        }
                    }
                }
                None => all_pairs = false,
            }
        }
    }
    let eps = rep.params.epsilon;
    let v_ok = match rep.exceptional_check.mode {
        ExceptionalMode::Relative => match rep.partition_v.blocks.first() {
            Some(b1) => le_scaled(rep.partition_v.exceptional.len(), eps, b1.len()),
            None => rep.partition_v.exceptional.is_empty(),
        },
        ExceptionalMode::Absolute => {
            le_scaled(rep.partition_v.exceptional.len(), eps, rep.partition_v.ground_size)
        }
    };
    let w_ok = match rep.exceptional_check.mode {
        ExceptionalMode::Relative => match rep.partition_w.blocks.first() {
            Some(b1) => le_scaled(rep.partition_w.exceptional.len(), eps, b1.len()),
            None => rep.partition_w.exceptional.is_empty(),
        },
        ExceptionalMode::Absolute => {
            le_scaled(rep.partition_w.exceptional.len(), eps, rep.partition_w.ground_size)
        }
    };
    if v_ok != rep.exceptional_check.v_ok || w_ok != rep.exceptional_check.w_ok {
        failures.push("exceptional_check: recorded outcome differs from replay".into());
    }
    let equal_ok = rep
        .equal_blocks_ok
        .map(|_| rep.partition_v.has_equal_blocks() && rep.partition_w.has_equal_blocks());
    if equal_ok != rep.equal_blocks_ok && equal_ok.is_some() {
        failures.push("equal_blocks: recorded outcome differs from replay".into());
    }
    let satisfied = all_pairs && v_ok && w_ok && equal_ok.unwrap_or(true);
    if satisfied != rep.satisfied {
        failures.push("satisfied: flag differs from replayed outcome".into());
    }
    for (side, certs, partition) in [
        ("v", &rep.certificates_v, &rep.partition_v),
        ("w", &rep.certificates_w, &rep.partition_w),
    ] {
        if certs.len() != partition.num_blocks() {
            failures.push(format!("certificates_{side}: wrong length"));
            continue;
        }
        for (i, cert) in certs.iter().enumerate() {
            if let Some(expr) = cert {
                match crate::definable::evaluate_set(expr, f) {
                    Ok(set) if set == partition.blocks[i] => {}
                    Ok(_) => failures.push(format!(
                        "certificates_{side}[{}]: expression does not evaluate to the block",
                        i + 1
                    )),
                    Err(e) => failures.push(format!("certificates_{side}[{}]: {e}", i + 1)),
                }
            }
        }
    }
}

fn verify_decomposition(
    f: &ValueMatrix,
    report_path: &Path,
    meta: &DecompositionMeta,
    failures: &mut Vec<String>,
) {
    let parts: [(&str, &str, &str); 3] = [
        ("f_str", &meta.f_str_file, &meta.f_str_hash),
        ("f_psd", &meta.f_psd_file, &meta.f_psd_hash),
        ("f_err", &meta.f_err_file, &meta.f_err_hash),
    ];
    let mut matrices = Vec::new();
    for (name, file, hash) in parts {
        match read_matrix(&resolve(report_path, file)) {
            Ok(m) => {
                if &matrix_hash(&m) != hash {
                    failures.push(format!("{name}: content hash mismatch"));
                }
                matrices.push(m);
            }
            Err(e) => {
                failures.push(format!("{name}: {e}"));
                return;
            }
        }
    }
    let (f_str, f_psd, f_err) = (&matrices[0], &matrices[1], &matrices[2]);
    if f_str.rows() != f.rows() || f_str.cols() != f.cols() {
        failures.push("decomposition: part shapes do not match the matrix".into());
        return;
    }
    for a in 0..f.rows() {
        for b in 0..f.cols() {
            let residual =
                ((f.get(a, b) - f_str.get(a, b)) - f_err.get(a, b)) - f_psd.get(a, b);
            if residual != 0.0 {
                failures.push(format!("additivity: nonzero residual at ({a},{b})"));
                return;
            }
        }
    }
    if f_psd.support_size() != meta.psd_support {
        failures.push("psd_support: recorded count differs".into());
    }
    if let Some(bound) = meta.psd_support_bound {
        if !le_scaled(f_psd.support_size(), bound, f.rows() * f.cols()) {
            failures.push("psd_support: exceeds the certified bound".into());
        }
    }
    for a in 0..f.rows() {
        for b in 0..f.cols() {
            if f_err.get(a, b) != 0.0
                && !meta.z_rows.contains(&a)
                && !meta.z_cols.contains(&b)
            {
                failures.push(format!("f_err: supported outside Z at ({a},{b})"));
                return;
            }
        }
    }
    if !le_scaled(meta.z_rows.len(), meta.epsilon, f.rows())
        || !le_scaled(meta.z_cols.len(), meta.epsilon, f.cols())
    {
        failures.push("z_set: exceptional strips exceed epsilon".into());
    }
}

/// Assemble the decomposition metadata, writing the three part matrices
/// next to the report.
pub fn write_decomposition_parts(
    d: &Decomposition,
    report_path: &Path,
    stem: &str,
) -> Result<DecompositionMeta> {
    let dir = report_path.parent().unwrap_or(Path::new("."));
    let files = [
        (format!("{stem}.f_str.csv"), &d.f_str),
        (format!("{stem}.f_psd.csv"), &d.f_psd),
        (format!("{stem}.f_err.csv"), &d.f_err),
    ];
    let mut hashes = Vec::new();
    for (name, m) in &files {
        write_matrix(&dir.join(name), m)?;
        hashes.push(matrix_hash(m));
    }
    Ok(DecompositionMeta {
        r_table: d.r_table.clone(),
        z_rows: d.z_rows.clone(),
        z_cols: d.z_cols.clone(),
        sigma_mn: d.sigma_mn,
        homog_radius: d.homog_radius,
        epsilon: d.epsilon,
        delta: d.delta,
        psd_support: d.psd_support,
        psd_support_bound: d.psd_support_bound,
        str_template_linf: d.str_template_linf,
        psd_l1_bound: d.psd_l1_bound,
        f_str_file: files[0].0.clone(),
        f_psd_file: files[1].0.clone(),
        f_err_file: files[2].0.clone(),
        f_str_hash: hashes[0].clone(),
        f_psd_hash: hashes[1].clone(),
        f_err_hash: hashes[2].clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matrix_roundtrip_is_identity() {
        let m = ValueMatrix::signed(2, 3, vec![-1.0, 0.1, 0.3, 1.0 / 3.0, 0.7, -0.999]).unwrap();
        let text = matrix_to_csv(&m);
        let back = parse_matrix(&text).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn headerless_matrices_parse() {
        let m = parse_matrix("0.5,0.25\n1.0,0.0\n").unwrap();
        assert_eq!(m.rows(), 2);
        assert_eq!(m.range(), Range::Unit);
        let s = parse_matrix("-0.5,0.25\n1.0,0.0\n").unwrap();
        assert_eq!(s.range(), Range::Signed);
    }

    #[test]
    fn header_mismatch_is_an_error() {
        assert!(parse_matrix("2,3,unit\n0.5,0.25\n1.0,0.0\n").is_err());
        assert!(parse_matrix("1,2,unit\n0.5,oops\n").is_err());
    }

    #[test]
    fn hash_changes_with_content() {
        let a = ValueMatrix::unit(1, 2, vec![0.5, 0.25]).unwrap();
        let b = ValueMatrix::unit(1, 2, vec![0.5, 0.250000001]).unwrap();
        assert_ne!(matrix_hash(&a), matrix_hash(&b));
        assert_eq!(matrix_hash(&a), matrix_hash(&a.clone()));
    }
}
