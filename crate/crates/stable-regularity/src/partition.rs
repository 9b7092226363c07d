//! Partitions, partition verification, homogeneous-partition search, the
//! constructive equipartition refinement, and the symmetric common
//! refinement.

use crate::decay::{tau, DecayFn};
use crate::definable::{Atom, DefinableSetExpr, Rational, RationalInterval, Side};
use crate::error::{Error, Result};
use crate::homogeneity::check_homogeneous;
use crate::matrix::ValueMatrix;
use crate::num_util::{ceil_scaled, le_scaled};
use crate::params::Params;
use crate::witness::HomogeneityWitness;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// A block structure on `0..ground_size` with a distinguished (possibly
/// empty) exceptional block 0. Blocks `1..m` are nonempty, pairwise
/// disjoint, and together with block 0 cover the ground set.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Partition {
    pub ground_size: usize,
    pub blocks: Vec<Vec<usize>>,
    pub exceptional: Vec<usize>,
}

impl Partition {
    pub fn new(ground_size: usize, blocks: Vec<Vec<usize>>, exceptional: Vec<usize>) -> Result<Self> {
        let p = Partition { ground_size, blocks, exceptional };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = vec![false; self.ground_size];
        let mut total = 0usize;
        for (i, block) in
            std::iter::once(&self.exceptional).chain(self.blocks.iter()).enumerate()
        {
            if i > 0 && block.is_empty() {
                return Err(Error::input(format!("block {i} is empty")));
            }
            for &x in block {
                if x >= self.ground_size {
                    return Err(Error::input(format!("element {x} out of bounds")));
                }
                if seen[x] {
                    return Err(Error::input(format!("element {x} appears twice")));
                }
                seen[x] = true;
                total += 1;
            }
        }
        if total != self.ground_size {
            return Err(Error::input("blocks do not cover the ground set"));
        }
        Ok(())
    }

    /// One block holding everything, empty exceptional set.
    pub fn trivial(ground_size: usize) -> Self {
        Partition {
            ground_size,
            blocks: vec![(0..ground_size).collect()],
            exceptional: Vec::new(),
        }
    }

    /// One singleton block per element, empty exceptional set.
    pub fn singletons(ground_size: usize) -> Self {
        Partition {
            ground_size,
            blocks: (0..ground_size).map(|i| vec![i]).collect(),
            exceptional: Vec::new(),
        }
    }

    pub fn num_blocks(&self) -> usize {
        self.blocks.len()
    }

    /// All non-exceptional blocks have the same cardinality.
    pub fn has_equal_blocks(&self) -> bool {
        match self.blocks.first() {
            None => true,
            Some(b0) => self.blocks.iter().all(|b| b.len() == b0.len()),
        }
    }
}

/// Which exceptional-set inequality to enforce: relative to the first block
/// (`|V_0| <= eps |V_1|`) or to the whole side (`|V_0| <= eps |V|`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExceptionalMode {
    Relative,
    Absolute,
}

/// Outcome of the exceptional-set inequalities.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExceptionalCheck {
    pub mode: ExceptionalMode,
    pub v_ok: bool,
    pub w_ok: bool,
}

/// Verification options beyond the parameter bundle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerifyOptions {
    pub exceptional_mode: ExceptionalMode,
    /// Additionally require all non-exceptional blocks on a side to have
    /// equal cardinality (equipartition verification).
    pub require_equal_blocks: bool,
}

impl VerifyOptions {
    pub fn relative() -> Self {
        VerifyOptions { exceptional_mode: ExceptionalMode::Relative, require_equal_blocks: false }
    }

    pub fn equipartition() -> Self {
        VerifyOptions { exceptional_mode: ExceptionalMode::Absolute, require_equal_blocks: true }
    }
}

/// Full record of a partition-verification run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegularityReport {
    pub partition_v: Partition,
    pub partition_w: Partition,
    /// Row-major `m x n` table of per-pair witnesses.
    pub pair_results: Vec<Option<HomogeneityWitness>>,
    pub params: Params,
    /// Homogeneity radius every pair was checked at.
    pub homog_radius: f64,
    /// The `gamma = epsilon'` value every pair was checked at
    /// (`decay(m*n)` unless a caller substituted a modified decay).
    pub gamma_used: f64,
    pub satisfied: bool,
    pub exceptional_check: ExceptionalCheck,
    pub equal_blocks_ok: Option<bool>,
    /// Definable-set certificates per non-exceptional V-block, when the
    /// search produced them.
    pub certificates_v: Vec<Option<DefinableSetExpr>>,
    pub certificates_w: Vec<Option<DefinableSetExpr>>,
}

impl RegularityReport {
    pub fn failing_pairs(&self) -> usize {
        self.pair_results.iter().filter(|w| w.is_none()).count()
    }
}

fn check_shapes(f: &ValueMatrix, pv: &Partition, pw: &Partition) -> Result<()> {
    pv.validate()?;
    pw.validate()?;
    if pv.ground_size != f.rows() || pw.ground_size != f.cols() {
        return Err(Error::input(format!(
            "partition sizes {}x{} do not match the {}x{} matrix",
            pv.ground_size,
            pw.ground_size,
            f.rows(),
            f.cols()
        )));
    }
    Ok(())
}

fn exceptional_ok(p: &Partition, eps: f64, mode: ExceptionalMode) -> bool {
    match mode {
        ExceptionalMode::Relative => match p.blocks.first() {
            Some(b1) => le_scaled(p.exceptional.len(), eps, b1.len()),
            None => p.exceptional.is_empty(),
        },
        ExceptionalMode::Absolute => le_scaled(p.exceptional.len(), eps, p.ground_size),
    }
}

fn run_pairs(
    f: &ValueMatrix,
    pv: &Partition,
    pw: &Partition,
    radius: f64,
    gamma: f64,
) -> Result<Vec<Option<HomogeneityWitness>>> {
    let pairs: Vec<(usize, usize)> = (0..pv.num_blocks())
        .flat_map(|i| (0..pw.num_blocks()).map(move |j| (i, j)))
        .collect();
    pairs
        .par_iter()
        .map(|&(i, j)| check_homogeneous(f, &pv.blocks[i], &pw.blocks[j], radius, gamma, gamma))
        .collect()
}

/// Verify a partition pair against the homogeneity conclusion: every
/// non-exceptional block pair must be `(homog_radius; g, g)`-homogeneous
/// with `g = decay(m*n)`, and the exceptional inequalities must hold.
pub fn verify_partition(
    f: &ValueMatrix,
    pv: &Partition,
    pw: &Partition,
    params: &Params,
    homog_radius: f64,
    options: VerifyOptions,
) -> Result<RegularityReport> {
    let gamma = params.decay.eval((pv.num_blocks() * pw.num_blocks()).max(1));
    verify_partition_at(f, pv, pw, params, homog_radius, gamma, options)
}

/// As [`verify_partition`] but with an explicit `gamma`; used by the
/// equipartition construction, which verifies at a modified decay.
pub fn verify_partition_at(
    f: &ValueMatrix,
    pv: &Partition,
    pw: &Partition,
    params: &Params,
    homog_radius: f64,
    gamma: f64,
    options: VerifyOptions,
) -> Result<RegularityReport> {
    check_shapes(f, pv, pw)?;
    let pair_results = run_pairs(f, pv, pw, homog_radius, gamma)?;
    let exceptional_check = ExceptionalCheck {
        mode: options.exceptional_mode,
        v_ok: exceptional_ok(pv, params.epsilon, options.exceptional_mode),
        w_ok: exceptional_ok(pw, params.epsilon, options.exceptional_mode),
    };
    let equal_blocks_ok = options
        .require_equal_blocks
        .then(|| pv.has_equal_blocks() && pw.has_equal_blocks());
    let satisfied = pair_results.iter().all(|w| w.is_some())
        && exceptional_check.v_ok
        && exceptional_check.w_ok
        && equal_blocks_ok.unwrap_or(true);
    Ok(RegularityReport {
        certificates_v: vec![None; pv.num_blocks()],
        certificates_w: vec![None; pw.num_blocks()],
        partition_v: pv.clone(),
        partition_w: pw.clone(),
        pair_results,
        params: params.clone(),
        homog_radius,
        gamma_used: gamma,
        satisfied,
        exceptional_check,
        equal_blocks_ok,
    })
}

/// Search strategy for [`find_partition`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PartitionMode {
    GreedyRefine,
    Exhaustive,
}

/// Budget for the partition search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PartitionBudget {
    pub max_blocks: usize,
    pub max_rounds: usize,
    /// Blocks smaller than this fraction of their side move to the
    /// exceptional block; `None` uses `epsilon^2 / (block count)^2`.
    pub min_block_frac: Option<f64>,
}

impl Default for PartitionBudget {
    fn default() -> Self {
        PartitionBudget { max_blocks: 64, max_rounds: 32, min_block_frac: None }
    }
}

/// Exactness guard for exhaustive partition enumeration.
const EXHAUSTIVE_SIDE_CAP: usize = 9;

/// A block under greedy refinement: its elements plus the interval atoms
/// accumulated along its refinement history (the definable certificate).
#[derive(Debug, Clone)]
struct RefBlock {
    elems: Vec<usize>,
    atoms: Vec<Atom>,
}

/// Search for a pair of partitions whose non-exceptional pairs are all
/// `(5 delta + epsilon; decay(mn), decay(mn))`-homogeneous.
///
/// Greedy mode refines both sides by definable threshold splits until
/// verified or the budget runs out; exhaustive mode enumerates all partition
/// pairs (empty exceptional block) with at most `max_blocks` blocks per side
/// in canonical order. Either way the returned report states the outcome
/// honestly in `satisfied`.
pub fn find_partition(
    f: &ValueMatrix,
    params: &Params,
    mode: PartitionMode,
    budget: &PartitionBudget,
) -> Result<RegularityReport> {
    find_partition_with(f, params, mode, budget, &params.decay.clone())
}

/// As [`find_partition`] with the decay function overridden (the
/// equipartition construction passes a modified decay).
fn find_partition_with(
    f: &ValueMatrix,
    params: &Params,
    mode: PartitionMode,
    budget: &PartitionBudget,
    decay: &DecayFn,
) -> Result<RegularityReport> {
    if f.range() != crate::matrix::Range::Unit {
        return Err(Error::input("partition search requires a unit-range matrix"));
    }
    match mode {
        PartitionMode::GreedyRefine => greedy_refine(f, params, budget, decay),
        PartitionMode::Exhaustive => exhaustive_search(f, params, budget, decay),
    }
}

fn radius(params: &Params) -> f64 {
    params.homogeneity_radius()
}

// ---------------------------------------------------------------------------
// greedy refinement

/// Dyadic scale for splitting: the largest power of two with
/// `2^-level <= delta`.
fn dyadic_level(delta: f64) -> u32 {
    let mut level = 0u32;
    while 2.0f64.powi(-(level as i32)) > delta && level < 60 {
        level += 1;
    }
    level
}

/// Assign an entry to a dyadic bucket at the given level: the minimal `t`
/// with `v` in `[t/2^L, (t+1)/2^L]`.
fn dyadic_bucket(v: f64, level: u32) -> u64 {
    let scale = 2.0f64.powi(level as i32);
    let t = (v * scale).ceil() as i64 - 1;
    t.clamp(0, (1i64 << level) - 1) as u64
}

fn bucket_interval(t: u64, level: u32) -> RationalInterval {
    let den = 1i64 << level;
    RationalInterval::new(
        Rational::new(t as i64, den).expect("nonzero denominator"),
        Rational::new(t as i64 + 1, den).expect("nonzero denominator"),
    )
}

/// Column of `W_j` whose values over `block` have the largest spread
/// (empirical variance), ties to the smallest column index.
fn best_splitter(f: &ValueMatrix, block: &[usize], opposite: &[usize], by_rows: bool) -> usize {
    let mut best = (f64::NEG_INFINITY, 0usize);
    for &b in opposite {
        let values: Vec<f64> = block
            .iter()
            .map(|&a| if by_rows { f.get(a, b) } else { f.get(b, a) })
            .collect();
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>();
        if var > best.0 {
            best = (var, b);
        }
    }
    best.1
}

/// Split a block by the dyadic buckets of `f(., splitter)`, recording the
/// interval atom on each nonempty sub-block.
fn split_block(
    f: &ValueMatrix,
    block: &RefBlock,
    splitter: usize,
    level: u32,
    by_rows: bool,
) -> Vec<RefBlock> {
    let mut buckets: std::collections::BTreeMap<u64, Vec<usize>> = Default::default();
    for &a in &block.elems {
        let v = if by_rows { f.get(a, splitter) } else { f.get(splitter, a) };
        buckets.entry(dyadic_bucket(v, level)).or_default().push(a);
    }
    buckets
        .into_iter()
        .map(|(t, elems)| {
            let mut atoms = block.atoms.clone();
            atoms.push(Atom { param: splitter, interval: bucket_interval(t, level) });
            RefBlock { elems, atoms }
        })
        .collect()
}

/// Distil the certificate of a refined block: the single-clause intersection
/// of its accumulated atoms, kept only if it evaluates exactly to the block.
fn certificate_for(f: &ValueMatrix, block: &RefBlock, side: Side) -> Option<DefinableSetExpr> {
    if block.atoms.is_empty() {
        return None;
    }
    let expr = DefinableSetExpr { side, clauses: vec![block.atoms.clone()] };
    match crate::definable::evaluate_set(&expr, f) {
        Ok(set) if set == block.elems => Some(expr),
        _ => None,
    }
}

struct SideState {
    blocks: Vec<RefBlock>,
    exceptional: Vec<usize>,
}

impl SideState {
    fn trivial(n: usize) -> Self {
        SideState {
            blocks: vec![RefBlock { elems: (0..n).collect(), atoms: Vec::new() }],
            exceptional: Vec::new(),
        }
    }

    fn to_partition(&self, n: usize) -> Partition {
        let mut exceptional = self.exceptional.clone();
        exceptional.sort_unstable();
        Partition {
            ground_size: n,
            blocks: self.blocks.iter().map(|b| b.elems.clone()).collect(),
            exceptional,
        }
    }

    /// Move blocks below the floor into the exceptional set.
    fn sweep_small(&mut self, floor: usize) {
        let (small, large): (Vec<RefBlock>, Vec<RefBlock>) =
            self.blocks.drain(..).partition(|b| b.elems.len() < floor);
        self.blocks = large;
        for b in small {
            self.exceptional.extend(b.elems);
        }
    }
}

fn min_block_floor(budget: &PartitionBudget, eps: f64, nblocks: usize, side: usize) -> usize {
    let frac = budget
        .min_block_frac
        .unwrap_or_else(|| (eps * eps) / ((nblocks * nblocks) as f64));
    // floor(frac * side), but never demand more than the side itself
    (frac * side as f64).floor().max(0.0).min(side as f64) as usize
}

fn greedy_refine(
    f: &ValueMatrix,
    params: &Params,
    budget: &PartitionBudget,
    decay: &DecayFn,
) -> Result<RegularityReport> {
    let level = dyadic_level(params.delta);
    let rad = radius(params);
    let mut sv = SideState::trivial(f.rows());
    let mut sw = SideState::trivial(f.cols());
    let mut best: Option<RegularityReport> = None;
    for _round in 0..budget.max_rounds.max(1) {
        let pv = sv.to_partition(f.rows());
        let pw = sw.to_partition(f.cols());
        let gamma = decay.eval((pv.num_blocks() * pw.num_blocks()).max(1));
        let mut report =
            verify_partition_at(f, &pv, &pw, params, rad, gamma, VerifyOptions::relative())?;
        report.certificates_v =
            sv.blocks.iter().map(|b| certificate_for(f, b, Side::V)).collect();
        report.certificates_w =
            sw.blocks.iter().map(|b| certificate_for(f, b, Side::W)).collect();
        let better = best
            .as_ref()
            .map_or(true, |b| report.failing_pairs() < b.failing_pairs());
        if better {
            best = Some(report.clone());
        }
        if report.satisfied {
            return Ok(report);
        }

        // Split each block participating in a failing pair, keyed by its
        // first failing partner, then sweep undersized blocks.
        let n = pw.num_blocks();
        let mut split_v: Vec<Option<usize>> = vec![None; pv.num_blocks()];
        let mut split_w: Vec<Option<usize>> = vec![None; n];
        for (flat, witness) in report.pair_results.iter().enumerate() {
            if witness.is_none() {
                let (i, j) = (flat / n, flat % n);
                split_v[i].get_or_insert(j);
                split_w[j].get_or_insert(i);
            }
        }
        let mut progressed = false;
        let mut next_v: Vec<RefBlock> = Vec::new();
        for (i, block) in sv.blocks.iter().enumerate() {
            match split_v[i] {
                Some(j) => {
                    let b = best_splitter(f, &block.elems, &sw.blocks[j].elems, true);
                    let parts = split_block(f, block, b, level, true);
                    progressed |= parts.len() > 1;
                    next_v.extend(parts);
                }
                None => next_v.push(block.clone()),
            }
        }
        let mut next_w: Vec<RefBlock> = Vec::new();
        for (j, block) in sw.blocks.iter().enumerate() {
            match split_w[j] {
                Some(i) => {
                    let a = best_splitter(f, &block.elems, &sv.blocks[i].elems, false);
                    let parts = split_block(f, block, a, level, false);
                    progressed |= parts.len() > 1;
                    next_w.extend(parts);
                }
                None => next_w.push(block.clone()),
            }
        }
        if !progressed {
            break;
        }
        sv.blocks = next_v;
        sw.blocks = next_w;
        sv.sweep_small(min_block_floor(budget, params.epsilon, sv.blocks.len(), f.rows()));
        sw.sweep_small(min_block_floor(budget, params.epsilon, sw.blocks.len(), f.cols()));
        if sv.blocks.len() > budget.max_blocks || sw.blocks.len() > budget.max_blocks {
            break;
        }
        if sv.blocks.is_empty() || sw.blocks.is_empty() {
            break;
        }
    }
    best.map(Ok).unwrap_or_else(|| {
        verify_partition_at(
            f,
            &Partition::trivial(f.rows()),
            &Partition::trivial(f.cols()),
            params,
            rad,
            decay.eval(1),
            VerifyOptions::relative(),
        )
    })
}

// ---------------------------------------------------------------------------
// exhaustive enumeration

/// Iterate all partitions of `0..n` into at most `max_blocks` nonempty
/// blocks, as restricted-growth strings in lexicographic order.
fn for_each_partition(n: usize, max_blocks: usize, mut visit: impl FnMut(&[usize]) -> bool) {
    let mut rgs = vec![0usize; n];
    loop {
        if !visit(&rgs) {
            return;
        }
        // next restricted-growth string
        let mut i = n;
        loop {
            if i <= 1 {
                return;
            }
            i -= 1;
            let max_prefix = rgs[..i].iter().copied().max().unwrap_or(0);
            if rgs[i] <= max_prefix && rgs[i] + 1 < max_blocks {
                rgs[i] += 1;
                for x in rgs[i + 1..].iter_mut() {
                    *x = 0;
                }
                break;
            }
        }
    }
}

fn partition_from_rgs(rgs: &[usize]) -> Partition {
    let nb = rgs.iter().copied().max().unwrap_or(0) + 1;
    let mut blocks: Vec<Vec<usize>> = vec![Vec::new(); nb];
    for (x, &b) in rgs.iter().enumerate() {
        blocks[b].push(x);
    }
    Partition { ground_size: rgs.len(), blocks, exceptional: Vec::new() }
}

fn exhaustive_search(
    f: &ValueMatrix,
    params: &Params,
    budget: &PartitionBudget,
    decay: &DecayFn,
) -> Result<RegularityReport> {
    if f.rows() > EXHAUSTIVE_SIDE_CAP || f.cols() > EXHAUSTIVE_SIDE_CAP {
        return Err(Error::capability(format!(
            "exhaustive partition search requires side sizes <= {EXHAUSTIVE_SIDE_CAP}"
        )));
    }
    let rad = radius(params);
    let mut best: Option<RegularityReport> = None;
    let mut found = None;
    for_each_partition(f.rows(), budget.max_blocks, |rgs_v| {
        let pv = partition_from_rgs(rgs_v);
        let mut keep_going = true;
        for_each_partition(f.cols(), budget.max_blocks, |rgs_w| {
            let pw = partition_from_rgs(rgs_w);
            let gamma = decay.eval((pv.num_blocks() * pw.num_blocks()).max(1));
            let report = match verify_partition_at(
                f,
                &pv,
                &pw,
                params,
                rad,
                gamma,
                VerifyOptions::relative(),
            ) {
                Ok(r) => r,
                Err(_) => return true,
            };
            if report.satisfied {
                found = Some(report);
                keep_going = false;
                return false;
            }
            if best.as_ref().map_or(true, |b| report.failing_pairs() < b.failing_pairs()) {
                best = Some(report);
            }
            true
        });
        keep_going
    });
    if let Some(r) = found {
        return Ok(r);
    }
    Ok(best.expect("at least the trivial pair was verified"))
}

// ---------------------------------------------------------------------------
// equipartition

/// Split a block into chunks of exactly `chunk` elements plus a remainder.
fn chop(block: &[usize], chunk: usize) -> (Vec<Vec<usize>>, Vec<usize>) {
    let t = block.len() / chunk;
    let mut chunks = Vec::with_capacity(t);
    for p in 0..t {
        chunks.push(block[p * chunk..(p + 1) * chunk].to_vec());
    }
    (chunks, block[t * chunk..].to_vec())
}

/// Constructive equipartition: find a homogeneous partition pair at the
/// modified decay `tau(n) = eps/(2n) * sigma(4 n^2 ceil(1/eps)^2)` (with
/// `sigma` monotonized and the budget's `epsilon` halved), chop every
/// non-exceptional block into chunks of exactly `ceil(eps/(2 m') |V|)`
/// elements, absorb the remainders into the exceptional set, and re-verify
/// the result in absolute mode with the equal-size check at radius
/// `5 delta + epsilon` and `sigma(mn)`.
pub fn equipartition(
    f: &ValueMatrix,
    params: &Params,
    inner_budget: &PartitionBudget,
) -> Result<RegularityReport> {
    let eps = params.epsilon;
    let sigma_mono = params.decay.monotonized();
    let tau_fn = {
        let sigma = params.decay.clone();
        move |n: usize| tau(&sigma, eps, n)
    };
    // Stage 1 at (delta, eps/2, tau): via a params clone with halved epsilon.
    let inner_params = Params::new(
        params.delta,
        eps / 2.0,
        params.gamma,
        params.k,
        params.decay.clone(),
    )?;
    let stage1 = greedy_refine_with_gamma_fn(f, &inner_params, inner_budget, &tau_fn)?;
    if !stage1.satisfied {
        return Ok(stage1);
    }
    let m1 = stage1.partition_v.num_blocks();
    let n1 = stage1.partition_w.num_blocks();

    // Chunk sizes: exactly ceil(eps/(2 m') * |V|), computed in exact
    // arithmetic.
    let chunk_v = ceil_scaled(eps / (2.0 * m1 as f64), f.rows()).max(1);
    let chunk_w = ceil_scaled(eps / (2.0 * n1 as f64), f.cols()).max(1);

    let mut blocks_v: Vec<Vec<usize>> = Vec::new();
    let mut exc_v = stage1.partition_v.exceptional.clone();
    for block in &stage1.partition_v.blocks {
        let (chunks, rest) = chop(block, chunk_v);
        blocks_v.extend(chunks);
        exc_v.extend(rest);
    }
    exc_v.sort_unstable();
    let mut blocks_w: Vec<Vec<usize>> = Vec::new();
    let mut exc_w = stage1.partition_w.exceptional.clone();
    for block in &stage1.partition_w.blocks {
        let (chunks, rest) = chop(block, chunk_w);
        blocks_w.extend(chunks);
        exc_w.extend(rest);
    }
    exc_w.sort_unstable();

    let pv = Partition::new(f.rows(), blocks_v, exc_v)?;
    let pw = Partition::new(f.cols(), blocks_w, exc_w)?;
    let mn = (pv.num_blocks() * pw.num_blocks()).max(1);
    verify_partition_at(
        f,
        &pv,
        &pw,
        params,
        radius(params),
        sigma_mono.eval(mn),
        VerifyOptions::equipartition(),
    )
}

/// Greedy refinement with `gamma` supplied by an arbitrary function of the
/// block-pair count (used for the tau-modified decay).
fn greedy_refine_with_gamma_fn(
    f: &ValueMatrix,
    params: &Params,
    budget: &PartitionBudget,
    gamma_fn: &dyn Fn(usize) -> f64,
) -> Result<RegularityReport> {
    // Wrap the gamma function as a decay table over the plausible range of
    // block-pair counts. Block counts are bounded by the budget, so the
    // table covers every value the search can request.
    let cap = budget.max_blocks.max(1).saturating_mul(budget.max_blocks.max(1)).min(1 << 20);
    let values: Vec<f64> = (1..=cap).map(gamma_fn).collect();
    let fallback = values.last().copied().unwrap_or(0.5);
    let table = DecayFn::Table { values, fallback }.validated()?;
    greedy_refine(f, params, budget, &table)
}

// ---------------------------------------------------------------------------
// symmetric common refinement

/// Intersect two partitions of the same ground set (for a symmetric
/// function), absorb small pieces and exceptional spill-over into the
/// exceptional block, and re-verify homogeneity of all surviving pairs.
///
/// A block of one partition whose overlap with the other's exceptional set
/// exceeds `epsilon` of it is sent wholesale to the exceptional set.
pub fn common_refinement(
    f: &ValueMatrix,
    pv: &Partition,
    pw: &Partition,
    params: &Params,
) -> Result<RegularityReport> {
    if f.rows() != f.cols() || !f.is_symmetric() {
        return Err(Error::input("common refinement requires a symmetric square matrix"));
    }
    check_shapes(f, pv, pw)?;
    let n = f.rows();
    let in_exc_w: Vec<bool> = {
        let mut v = vec![false; n];
        for &x in &pw.exceptional {
            v[x] = true;
        }
        v
    };
    let in_exc_v: Vec<bool> = {
        let mut v = vec![false; n];
        for &x in &pv.exceptional {
            v[x] = true;
        }
        v
    };
    // Blocks heavily overlapping the other side's exceptional set are
    // dropped entirely.
    let keep_v: Vec<&Vec<usize>> = pv
        .blocks
        .iter()
        .filter(|b| {
            let overlap = b.iter().filter(|&&x| in_exc_w[x]).count();
            !exceeds(overlap, params.epsilon, b.len())
        })
        .collect();
    let keep_w: Vec<&Vec<usize>> = pw
        .blocks
        .iter()
        .filter(|b| {
            let overlap = b.iter().filter(|&&x| in_exc_v[x]).count();
            !exceeds(overlap, params.epsilon, b.len())
        })
        .collect();

    let mut pieces: Vec<Vec<usize>> = Vec::new();
    let mut w_index = vec![usize::MAX; n];
    for (j, block) in keep_w.iter().enumerate() {
        for &x in block.iter() {
            w_index[x] = j;
        }
    }
    for block in &keep_v {
        let mut sub: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
        for &x in block.iter() {
            if w_index[x] != usize::MAX && !in_exc_v[x] && !in_exc_w[x] {
                sub.entry(w_index[x]).or_default().push(x);
            }
        }
        pieces.extend(sub.into_values());
    }
    // Small pieces join the exceptional set; so does everything that fell
    // out of the surviving blocks above.
    let floor = min_block_floor(
        &PartitionBudget::default(),
        params.epsilon,
        pieces.len().max(1),
        n,
    );
    let blocks: Vec<Vec<usize>> =
        pieces.into_iter().filter(|piece| piece.len() >= floor.max(1)).collect();
    let in_block: std::collections::BTreeSet<usize> =
        blocks.iter().flatten().copied().collect();
    let exceptional: Vec<usize> = (0..n).filter(|x| !in_block.contains(x)).collect();
    if blocks.is_empty() {
        return Err(Error::input(
            "common refinement left no surviving blocks; refine with larger epsilon",
        ));
    }
    let p = Partition::new(n, blocks, exceptional)?;
    verify_partition(
        f,
        &p,
        &p,
        params,
        radius(params),
        VerifyOptions { exceptional_mode: ExceptionalMode::Absolute, require_equal_blocks: false },
    )
}

fn exceeds(count: usize, frac: f64, n: usize) -> bool {
    !le_scaled(count, frac, n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::Range;

    fn params(delta: f64, eps: f64, c: f64) -> Params {
        Params::new(delta, eps, eps, 2, DecayFn::constant(c).unwrap()).unwrap()
    }

    fn half_graph(k: usize) -> ValueMatrix {
        let entries = (0..k)
            .flat_map(|i| (0..k).map(move |j| if i <= j { 1.0 } else { 0.0 }))
            .collect();
        ValueMatrix::unit(k, k, entries).unwrap()
    }

    #[test]
    fn partition_validation() {
        assert!(Partition::new(3, vec![vec![0, 1], vec![2]], vec![]).is_ok());
        assert!(Partition::new(3, vec![vec![0, 1]], vec![2]).is_ok());
        assert!(Partition::new(3, vec![vec![0, 1], vec![]], vec![2]).is_err());
        assert!(Partition::new(3, vec![vec![0, 1], vec![1, 2]], vec![]).is_err());
        assert!(Partition::new(3, vec![vec![0]], vec![]).is_err());
    }

    #[test]
    fn constant_matrix_trivial_partition_verifies() {
        let f = ValueMatrix::constant(6, 5, 0.4, Range::Unit).unwrap();
        let p = params(0.01, 0.1, 0.1);
        let r = verify_partition(
            &f,
            &Partition::trivial(6),
            &Partition::trivial(5),
            &p,
            p.homogeneity_radius(),
            VerifyOptions::relative(),
        )
        .unwrap();
        assert!(r.satisfied);
    }

    #[test]
    fn singleton_partition_always_verifies() {
        let f = half_graph(4);
        let p = params(0.01, 0.1, 0.1);
        let r = verify_partition(
            &f,
            &Partition::singletons(4),
            &Partition::singletons(4),
            &p,
            p.homogeneity_radius(),
            VerifyOptions::relative(),
        )
        .unwrap();
        assert!(r.satisfied);
        for w in &r.pair_results {
            assert!(w.is_some());
        }
    }

    #[test]
    fn coarse_half_graph_partition_fails() {
        let f = half_graph(4);
        let p = params(0.01, 0.1, 0.1);
        let r = verify_partition(
            &f,
            &Partition::trivial(4),
            &Partition::trivial(4),
            &p,
            p.homogeneity_radius(),
            VerifyOptions::relative(),
        )
        .unwrap();
        assert!(!r.satisfied);
    }

    #[test]
    fn greedy_solves_constant_instantly() {
        let f = ValueMatrix::constant(8, 8, 0.25, Range::Unit).unwrap();
        let p = params(0.05, 0.2, 0.2);
        let r = find_partition(&f, &p, PartitionMode::GreedyRefine, &Default::default()).unwrap();
        assert!(r.satisfied);
        assert_eq!(r.partition_v.num_blocks(), 1);
    }

    #[test]
    fn greedy_recovers_planted_blocks() {
        let mut entries = Vec::new();
        for a in 0..8 {
            for b in 0..8 {
                entries.push(if a < 4 && b < 4 { 0.1 } else { 0.9 });
            }
        }
        let f = ValueMatrix::unit(8, 8, entries).unwrap();
        let p = params(0.05, 0.2, 0.2);
        let r = find_partition(&f, &p, PartitionMode::GreedyRefine, &Default::default()).unwrap();
        assert!(r.satisfied);
        assert!(r.partition_v.num_blocks() <= 4);
    }

    #[test]
    fn exhaustive_guard() {
        let f = ValueMatrix::constant(10, 4, 0.4, Range::Unit).unwrap();
        let p = params(0.05, 0.2, 0.2);
        let err = find_partition(&f, &p, PartitionMode::Exhaustive, &Default::default());
        assert!(matches!(err, Err(Error::Capability(_))));
    }

    #[test]
    fn exhaustive_finds_planted_two_block_split() {
        let mut entries = Vec::new();
        for a in 0..4 {
            for b in 0..4 {
                entries.push(if a < 2 && b < 2 { 0.1 } else { 0.9 });
            }
        }
        let f = ValueMatrix::unit(4, 4, entries).unwrap();
        let p = params(0.05, 0.2, 0.2);
        let budget = PartitionBudget { max_blocks: 2, ..Default::default() };
        let r = find_partition(&f, &p, PartitionMode::Exhaustive, &budget).unwrap();
        assert!(r.satisfied);
        assert!(r.partition_v.num_blocks() <= 2);
    }

    #[test]
    fn equipartition_on_constant_matrix() {
        let f = ValueMatrix::constant(100, 100, 0.5, Range::Unit).unwrap();
        let p = params(0.05, 0.2, 0.3);
        let r = equipartition(&f, &p, &Default::default()).unwrap();
        assert!(r.satisfied);
        assert!(r.partition_v.has_equal_blocks());
        assert!(r.partition_w.has_equal_blocks());
        assert!(le_scaled(r.partition_v.exceptional.len(), 0.2, 100));
        assert!(le_scaled(r.partition_w.exceptional.len(), 0.2, 100));
    }

    #[test]
    fn common_refinement_idempotent_on_equal_partitions() {
        let f = ValueMatrix::constant(4, 4, 0.5, Range::Unit).unwrap();
        let p = params(0.05, 0.3, 0.3);
        let part = Partition::new(4, vec![vec![0, 1], vec![2, 3]], vec![]).unwrap();
        let r = common_refinement(&f, &part, &part, &p).unwrap();
        assert!(r.satisfied);
        assert_eq!(r.partition_v.num_blocks(), 2);
    }

    #[test]
    fn common_refinement_counts_pieces() {
        let f = ValueMatrix::constant(4, 4, 0.5, Range::Unit).unwrap();
        let p = params(0.05, 0.3, 0.3);
        let pa = Partition::new(4, vec![vec![0, 1], vec![2, 3]], vec![]).unwrap();
        let pb = Partition::new(4, vec![vec![0, 2], vec![1, 3]], vec![]).unwrap();
        let r = common_refinement(&f, &pa, &pb, &p).unwrap();
        assert!(r.partition_v.num_blocks() <= 4);
        assert!(r.satisfied);
    }

    #[test]
    fn common_refinement_rejects_asymmetric_input() {
        let f = half_graph(4);
        let p = params(0.05, 0.3, 0.3);
        let part = Partition::trivial(4);
        assert!(common_refinement(&f, &part, &part, &p).is_err());
    }
}
