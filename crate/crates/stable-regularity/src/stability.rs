//! Half-graph witness search, stability indices, and the extraction of
//! threshold (star) witnesses from plain ones.
//!
//! A plain chain of length `k` is a sequence of pairs `(a_i, b_i)` with
//! `|f(a_i,b_j) - f(a_j,b_i)| >= delta` for all `i < j`. Because this
//! pairwise condition is symmetric in `i` and `j`, plain chains are exactly
//! the cliques of the compatibility graph on pair-nodes `(a, b)`, and the
//! exact search is a branch-and-bound clique search. Star chains are
//! order-sensitive, so they are searched as sequences extended at the end,
//! once per candidate threshold `r`.

use crate::error::{Error, Result};
use crate::matrix::{Range, ValueMatrix};
use crate::num_util::{ge_sum, rational_of};
use crate::witness::{validate_witness, HalfGraphWitness, WitnessKind};
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::ToPrimitive;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SearchMode {
    /// Complete search; finds a witness iff one exists.
    Exact,
    /// Cheap maximin chain growth; sound but incomplete.
    Greedy,
}

/// Guard for exact searches. Exact mode is admitted when the instance has
/// at most `max_cells` pair-nodes or the requested chain length is at most
/// `max_k`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchGuard {
    pub max_cells: usize,
    pub max_k: usize,
}

impl Default for SearchGuard {
    fn default() -> Self {
        SearchGuard { max_cells: 400, max_k: 6 }
    }
}

impl SearchGuard {
    fn admit(&self, cells: usize, k: usize) -> Result<()> {
        if cells <= self.max_cells || k <= self.max_k {
            Ok(())
        } else {
            Err(Error::capability(format!(
                "exact search guard: |V|*|W| = {cells} > {} and k = {k} > {}",
                self.max_cells, self.max_k
            )))
        }
    }
}

/// Which index sequences count as chains.
///
/// The literal reading of the stability definition puts no distinctness
/// requirement on the `a_i` and `b_i`, and under it repeated elements can
/// lengthen plain chains (on the `k x k` half graph the longest plain chain
/// at threshold 1 has `2k - 1` pairs, alternating `(t,t)` and `(t+1,t)`).
/// The graph-style reading, which counts distinct rows and distinct
/// columns, recovers the familiar index `k` and is what generator
/// certification uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChainElements {
    /// Repeated rows/columns allowed (the literal definition); default.
    AllowRepeats,
    /// All `a_i` distinct and all `b_i` distinct.
    Distinct,
}

impl Default for ChainElements {
    fn default() -> Self {
        ChainElements::AllowRepeats
    }
}

/// Outcome of a stability-index computation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub delta: f64,
    /// Largest plain chain length found, when the plain kind was searched.
    pub plain_index: Option<usize>,
    /// Largest star chain length found, when the star kind was searched.
    pub star_index: Option<usize>,
    /// True iff the search exhaustively refuted length `index + 1`.
    pub exact: bool,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub plain_witness: Option<HalfGraphWitness>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub star_witness: Option<HalfGraphWitness>,
}

// ---------------------------------------------------------------------------
// bitset helpers

type Words = Vec<u64>;

fn words_for(n: usize) -> usize {
    n.div_ceil(64)
}

fn bit_set(w: &mut [u64], i: usize) {
    w[i / 64] |= 1 << (i % 64);
}

fn popcount(w: &[u64]) -> usize {
    w.iter().map(|x| x.count_ones() as usize).sum()
}

fn and_into(dst: &mut [u64], src: &[u64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d &= s;
    }
}

fn iter_bits(w: &[u64]) -> impl Iterator<Item = usize> + '_ {
    w.iter().enumerate().flat_map(|(wi, &word)| {
        let mut word = word;
        std::iter::from_fn(move || {
            if word == 0 {
                None
            } else {
                let b = word.trailing_zeros() as usize;
                word &= word - 1;
                Some(wi * 64 + b)
            }
        })
    })
}

// ---------------------------------------------------------------------------
// plain chains = cliques of the compatibility graph

fn abs_diff_ge(x: f64, y: f64, d: f64) -> bool {
    ge_sum(x, y, d) || ge_sum(y, x, d)
}

struct PairGraph {
    n: usize,
    cols: usize,
    adj: Vec<Words>,
}

impl PairGraph {
    fn plain(f: &ValueMatrix, delta: f64, elements: ChainElements) -> Self {
        let n = f.rows() * f.cols();
        let cols = f.cols();
        let nw = words_for(n);
        let mut adj = vec![vec![0u64; nw]; n];
        for u in 0..n {
            let (au, bu) = (u / cols, u % cols);
            for v in (u + 1)..n {
                let (av, bv) = (v / cols, v % cols);
                if elements == ChainElements::Distinct && (au == av || bu == bv) {
                    continue;
                }
                if abs_diff_ge(f.get(au, bv), f.get(av, bu), delta) {
                    bit_set(&mut adj[u], v);
                    bit_set(&mut adj[v], u);
                }
            }
        }
        PairGraph { n, cols, adj }
    }

    fn node_to_pair(&self, u: usize) -> (usize, usize) {
        (u / self.cols, u % self.cols)
    }

    /// Longest clique (capped at `cap`), with the DFS-first witness.
    /// The search is exhaustive: when the returned length is below the cap,
    /// no longer clique exists.
    fn max_clique(&self, cap: usize) -> (usize, Vec<usize>) {
        let nw = words_for(self.n);
        let mut all = vec![u64::MAX; nw];
        if self.n % 64 != 0 {
            all[nw - 1] = (1u64 << (self.n % 64)) - 1;
        }
        let mut best: Vec<usize> = Vec::new();
        let mut chain: Vec<usize> = Vec::new();
        self.clique_dfs(&all, &mut chain, &mut best, cap);
        let len = best.len();
        (len, best)
    }

    fn clique_dfs(&self, cand: &Words, chain: &mut Vec<usize>, best: &mut Vec<usize>, cap: usize) {
        if chain.len() > best.len() {
            *best = chain.clone();
        }
        if best.len() >= cap {
            return;
        }
        if chain.len() + popcount(cand) <= best.len() {
            return;
        }
        // Restrict to nodes above the last chain element: cliques are
        // enumerated as increasing sequences.
        let lo = chain.last().map_or(0, |&u| u + 1);
        for v in iter_bits(cand) {
            if v < lo {
                continue;
            }
            if chain.len() + 1 + popcount_above(cand, v) <= best.len() {
                break;
            }
            let mut next = cand.clone();
            and_into(&mut next, &self.adj[v]);
            chain.push(v);
            self.clique_dfs(&next, chain, best, cap);
            chain.pop();
            if best.len() >= cap {
                return;
            }
        }
    }
}

fn popcount_above(w: &[u64], v: usize) -> usize {
    let mut count = 0usize;
    let wi = v / 64;
    let mask = u64::MAX.checked_shl((v % 64) as u32 + 1).unwrap_or(0);
    count += (w[wi] & mask).count_ones() as usize;
    for word in &w[wi + 1..] {
        count += word.count_ones() as usize;
    }
    count
}

// ---------------------------------------------------------------------------
// star chains: per-threshold ordered search

/// Candidate thresholds: every entry value, every `entry - delta` (and its
/// upward ulp neighbour, guarding the rounding of the subtraction), clamped
/// to `[0,1]`, plus the interval endpoints. If any threshold admits a star
/// chain, one from this set does: the least feasible threshold for a fixed
/// configuration is the largest lower-left entry (or 0 when there is none).
fn star_candidates(f: &ValueMatrix, delta: f64) -> Vec<f64> {
    let mut c: Vec<f64> = Vec::with_capacity(3 * f.entries().len() + 2);
    for &v in f.entries() {
        c.push(v);
        let lo = v - delta;
        c.push(lo.clamp(0.0, 1.0));
        c.push(next_up(lo).clamp(0.0, 1.0));
    }
    c.push(0.0);
    c.push(1.0);
    c.sort_by(f64::total_cmp);
    c.dedup();
    c
}

fn next_up(v: f64) -> f64 {
    if v.is_nan() || v == f64::INFINITY {
        return v;
    }
    let bits = if v == 0.0 { 1 } else if v > 0.0 { v.to_bits() + 1 } else { v.to_bits() - 1 };
    f64::from_bits(bits)
}

struct StarGraph {
    n: usize,
    cols: usize,
    admissible: Words,
    out: Vec<Words>,
}

impl StarGraph {
    fn build(f: &ValueMatrix, delta: f64, r: f64, elements: ChainElements) -> Self {
        let n = f.rows() * f.cols();
        let cols = f.cols();
        let nw = words_for(n);
        let mut admissible = vec![0u64; nw];
        let ok: Vec<bool> =
            (0..n).map(|u| ge_sum(f.get(u / cols, u % cols), r, delta)).collect();
        for (u, &o) in ok.iter().enumerate() {
            if o {
                bit_set(&mut admissible, u);
            }
        }
        let mut out = vec![vec![0u64; nw]; n];
        for u in 0..n {
            if !ok[u] {
                continue;
            }
            let (au, bu) = (u / cols, u % cols);
            for v in 0..n {
                if v == u || !ok[v] {
                    continue;
                }
                let (av, bv) = (v / cols, v % cols);
                if elements == ChainElements::Distinct && (au == av || bu == bv) {
                    continue;
                }
                // u before v: f(a_u, b_v) >= r + delta and f(a_v, b_u) <= r.
                if ge_sum(f.get(au, bv), r, delta) && f.get(av, bu) <= r {
                    bit_set(&mut out[u], v);
                }
            }
        }
        StarGraph { n, cols, admissible, out }
    }

    fn max_chain(&self, cap: usize) -> (usize, Vec<usize>) {
        let mut best = Vec::new();
        let mut chain = Vec::new();
        self.chain_dfs(&self.admissible.clone(), &mut chain, &mut best, cap);
        (best.len(), best)
    }

    fn chain_dfs(&self, cand: &Words, chain: &mut Vec<usize>, best: &mut Vec<usize>, cap: usize) {
        if chain.len() > best.len() {
            *best = chain.clone();
        }
        if best.len() >= cap || chain.len() + popcount(cand) <= best.len() {
            return;
        }
        for v in iter_bits(cand) {
            let mut next = cand.clone();
            and_into(&mut next, &self.out[v]);
            // end-extension: every valid ordered chain is built this way
            chain.push(v);
            self.chain_dfs(&next, chain, best, cap);
            chain.pop();
            if best.len() >= cap {
                return;
            }
        }
    }

    fn node_to_pair(&self, u: usize) -> (usize, usize) {
        (u / self.cols, u % self.cols)
    }

    fn n_admissible(&self) -> usize {
        popcount(&self.admissible)
    }

    fn is_empty(&self) -> bool {
        self.n == 0
    }
}

// ---------------------------------------------------------------------------
// public operations

fn check_delta(delta: f64) -> Result<()> {
    if delta > 0.0 {
        Ok(())
    } else {
        Err(Error::input("delta must be strictly positive"))
    }
}

fn require_unit_for_star(f: &ValueMatrix, kind: WitnessKind) -> Result<()> {
    if kind == WitnessKind::Star && f.range() != Range::Unit {
        return Err(Error::input(
            "star stability is defined for unit-range functions; rescale first",
        ));
    }
    Ok(())
}

/// Search for a half-graph witness of length exactly `k`.
///
/// Exact mode returns a witness iff one exists (subject to the guard);
/// greedy mode is incomplete but every returned witness validates.
pub fn find_half_graph(
    f: &ValueMatrix,
    k: usize,
    delta: f64,
    kind: WitnessKind,
    mode: SearchMode,
    guard: &SearchGuard,
) -> Result<Option<HalfGraphWitness>> {
    find_half_graph_in(f, k, delta, kind, mode, guard, ChainElements::AllowRepeats)
}

/// [`find_half_graph`] with explicit chain-element semantics.
pub fn find_half_graph_in(
    f: &ValueMatrix,
    k: usize,
    delta: f64,
    kind: WitnessKind,
    mode: SearchMode,
    guard: &SearchGuard,
    elements: ChainElements,
) -> Result<Option<HalfGraphWitness>> {
    check_delta(delta)?;
    require_unit_for_star(f, kind)?;
    if k == 0 {
        return Err(Error::input("chain length k must be positive"));
    }
    let report = stability_search(f, delta, kind, mode, guard, Some(k), elements)?;
    let (index, witness) = match kind {
        WitnessKind::Plain => (report.plain_index.unwrap_or(0), report.plain_witness),
        WitnessKind::Star => (report.star_index.unwrap_or(0), report.star_witness),
    };
    Ok(if index >= k { witness } else { None })
}

/// Largest chain length at threshold `delta`, per kind.
///
/// `max_len` caps the search; the report is flagged exact only when the
/// search exhaustively refuted `index + 1` (never when the cap was hit, and
/// never in greedy mode).
pub fn stability_index(
    f: &ValueMatrix,
    delta: f64,
    kind: WitnessKind,
    mode: SearchMode,
    guard: &SearchGuard,
    max_len: Option<usize>,
) -> Result<StabilityReport> {
    stability_index_in(f, delta, kind, mode, guard, max_len, ChainElements::AllowRepeats)
}

/// [`stability_index`] with explicit chain-element semantics.
pub fn stability_index_in(
    f: &ValueMatrix,
    delta: f64,
    kind: WitnessKind,
    mode: SearchMode,
    guard: &SearchGuard,
    max_len: Option<usize>,
    elements: ChainElements,
) -> Result<StabilityReport> {
    check_delta(delta)?;
    require_unit_for_star(f, kind)?;
    stability_search(f, delta, kind, mode, guard, max_len, elements)
}

fn stability_search(
    f: &ValueMatrix,
    delta: f64,
    kind: WitnessKind,
    mode: SearchMode,
    guard: &SearchGuard,
    max_len: Option<usize>,
    elements: ChainElements,
) -> Result<StabilityReport> {
    let cells = f.rows() * f.cols();
    let cap = max_len.unwrap_or(cells);
    let mut report = StabilityReport {
        delta,
        plain_index: None,
        star_index: None,
        exact: false,
        plain_witness: None,
        star_witness: None,
    };
    match (kind, mode) {
        (WitnessKind::Plain, SearchMode::Exact) => {
            guard.admit(cells, cap)?;
            let g = PairGraph::plain(f, delta, elements);
            let (len, nodes) = g.max_clique(cap);
            report.plain_index = Some(len);
            report.exact = len < cap || max_len.is_none();
            report.plain_witness = witness_from_nodes(&g, &nodes, delta, None);
        }
        (WitnessKind::Star, SearchMode::Exact) => {
            guard.admit(cells, cap)?;
            let mut best_len = 0usize;
            let mut best: Option<HalfGraphWitness> = None;
            for r in star_candidates(f, delta) {
                let g = StarGraph::build(f, delta, r, elements);
                if g.is_empty() || g.n_admissible() <= best_len {
                    continue;
                }
                let (len, nodes) = g.max_chain(cap);
                if len > best_len {
                    best_len = len;
                    let (a_idx, b_idx) = split_nodes(nodes.iter().map(|&u| g.node_to_pair(u)));
                    best = Some(HalfGraphWitness::star(a_idx, b_idx, delta, r));
                    if best_len >= cap {
                        break;
                    }
                }
            }
            report.star_index = Some(best_len);
            report.exact = best_len < cap || max_len.is_none();
            report.star_witness = best;
        }
        (WitnessKind::Plain, SearchMode::Greedy) => {
            let (len, witness) = greedy_plain(f, delta, cap, elements);
            report.plain_index = Some(len);
            report.plain_witness = witness;
        }
        (WitnessKind::Star, SearchMode::Greedy) => {
            let (len, witness) = greedy_star(f, delta, cap, elements);
            report.star_index = Some(len);
            report.star_witness = witness;
        }
    }
    Ok(report)
}

fn witness_from_nodes(
    g: &PairGraph,
    nodes: &[usize],
    delta: f64,
    r: Option<f64>,
) -> Option<HalfGraphWitness> {
    if nodes.is_empty() {
        return None;
    }
    let (a_idx, b_idx) = split_nodes(nodes.iter().map(|&u| g.node_to_pair(u)));
    Some(match r {
        None => HalfGraphWitness::plain(a_idx, b_idx, delta),
        Some(r) => HalfGraphWitness::star(a_idx, b_idx, delta, r),
    })
}

fn split_nodes(pairs: impl Iterator<Item = (usize, usize)>) -> (Vec<usize>, Vec<usize>) {
    pairs.unzip()
}

fn greedy_plain(
    f: &ValueMatrix,
    delta: f64,
    cap: usize,
    elements: ChainElements,
) -> (usize, Option<HalfGraphWitness>) {
    let rows = f.rows();
    let cols = f.cols();
    let n = rows * cols;
    // Seed with the pair-node pair of largest margin, then extend by the
    // candidate maximizing its minimum margin against the current chain.
    let margin = |u: usize, v: usize| -> f64 {
        (f.get(u / cols, v % cols) - f.get(v / cols, u % cols)).abs()
    };
    let compatible = |u: usize, v: usize| -> bool {
        if elements == ChainElements::Distinct && (u / cols == v / cols || u % cols == v % cols)
        {
            return false;
        }
        abs_diff_ge(f.get(u / cols, v % cols), f.get(v / cols, u % cols), delta)
    };
    let mut chain: Vec<usize> = Vec::new();
    let mut best_seed: Option<(f64, usize, usize)> = None;
    for u in 0..n {
        for v in (u + 1)..n {
            if !compatible(u, v) {
                continue;
            }
            let m = margin(u, v);
            if best_seed.map_or(true, |(bm, _, _)| m > bm) {
                best_seed = Some((m, u, v));
            }
        }
    }
    match best_seed {
        Some((_, u, v)) if cap >= 2 => {
            chain.push(u);
            chain.push(v);
        }
        _ => chain.push(0),
    }
    loop {
        if chain.len() >= cap {
            break;
        }
        let mut best_ext: Option<(f64, usize)> = None;
        for v in 0..n {
            if chain.contains(&v) {
                continue;
            }
            let mut min_margin = f64::INFINITY;
            let mut ok = true;
            for &u in &chain {
                if !compatible(u, v) {
                    ok = false;
                    break;
                }
                min_margin = min_margin.min(margin(u, v));
            }
            if ok && best_ext.map_or(true, |(bm, _)| min_margin > bm) {
                best_ext = Some((min_margin, v));
            }
        }
        match best_ext {
            Some((_, v)) => chain.push(v),
            None => break,
        }
    }
    let (a_idx, b_idx) = split_nodes(chain.iter().map(|&u| (u / cols, u % cols)));
    let len = a_idx.len();
    (len, Some(HalfGraphWitness::plain(a_idx, b_idx, delta)))
}

fn greedy_star(
    f: &ValueMatrix,
    delta: f64,
    cap: usize,
    elements: ChainElements,
) -> (usize, Option<HalfGraphWitness>) {
    // Candidate thresholds for greedy mode: deciles of the entry values and
    // their delta-shifts, keeping the scan linear in the matrix size.
    let mut sorted: Vec<f64> = f.entries().to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut cands: Vec<f64> = Vec::new();
    let steps = 16.min(sorted.len());
    for i in 0..=steps {
        let idx = (i * (sorted.len() - 1)) / steps.max(1);
        cands.push(sorted[idx]);
        cands.push((sorted[idx] - delta).clamp(0.0, 1.0));
    }
    cands.push(0.0);
    cands.sort_by(f64::total_cmp);
    cands.dedup();
    let cols = f.cols();
    let n = f.rows() * cols;
    let mut best: Option<HalfGraphWitness> = None;
    let mut best_len = 0usize;
    for r in cands {
        let mut chain: Vec<usize> = Vec::new();
        loop {
            if chain.len() >= cap {
                break;
            }
            // Extend at the end by the node with the largest worst-case slack.
            let mut best_ext: Option<(f64, usize)> = None;
            'node: for v in 0..n {
                let (av, bv) = (v / cols, v % cols);
                if !ge_sum(f.get(av, bv), r, delta) {
                    continue;
                }
                let mut slack = f.get(av, bv) - (r + delta);
                for &u in &chain {
                    let (au, bu) = (u / cols, u % cols);
                    if elements == ChainElements::Distinct && (au == av || bu == bv) {
                        continue 'node;
                    }
                    if !ge_sum(f.get(au, bv), r, delta) || f.get(av, bu) > r {
                        continue 'node;
                    }
                    slack = slack
                        .min(f.get(au, bv) - (r + delta))
                        .min(r - f.get(av, bu));
                }
                if best_ext.map_or(true, |(bs, _)| slack > bs) {
                    best_ext = Some((slack, v));
                }
            }
            match best_ext {
                Some((_, v)) => chain.push(v),
                None => break,
            }
        }
        if chain.len() > best_len {
            best_len = chain.len();
            let (a_idx, b_idx) = split_nodes(chain.iter().map(|&u| (u / cols, u % cols)));
            best = Some(HalfGraphWitness::star(a_idx, b_idx, delta, r));
        }
    }
    (best_len, best)
}

// ---------------------------------------------------------------------------
// star extraction from a plain witness (the two-stability bridge)

/// Greedy extraction of a monochromatic subsequence: repeatedly pivot on
/// the first remaining element and keep the largest same-colored class.
/// Pivots of a common color form a monochromatic subsequence; the final
/// survivor extends any of them.
fn greedy_monochromatic(len: usize, color: impl Fn(usize, usize) -> usize) -> (usize, Vec<usize>) {
    let mut live: Vec<usize> = (0..len).collect();
    let mut pivots: Vec<(usize, usize)> = Vec::new();
    let mut wildcard: Option<usize> = None;
    while let Some((&p, rest)) = live.split_first() {
        if rest.is_empty() {
            wildcard = Some(p);
            break;
        }
        let mut classes: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
        for &x in rest {
            classes.entry(color(p, x)).or_default().push(x);
        }
        let (&c, _) = classes
            .iter()
            .max_by(|(c1, v1), (c2, v2)| v1.len().cmp(&v2.len()).then(c2.cmp(c1)))
            .expect("nonempty");
        pivots.push((p, c));
        live = classes.remove(&c).expect("chosen class");
    }
    let mut best_color = 0usize;
    let mut best_len = 0usize;
    let mut counts: std::collections::BTreeMap<usize, usize> = Default::default();
    for &(_, c) in &pivots {
        *counts.entry(c).or_default() += 1;
    }
    for (&c, &n) in &counts {
        if n > best_len {
            best_len = n;
            best_color = c;
        }
    }
    let mut seq: Vec<usize> =
        pivots.iter().filter(|&&(_, c)| c == best_color).map(|&(p, _)| p).collect();
    if let Some(w) = wildcard {
        seq.push(w);
    }
    (best_color, seq)
}

/// Run the two-stage greedy extraction that turns a long plain chain into a
/// star chain: 2-color pairs by sign branch and keep a monochromatic
/// subsequence (reversing if the descending branch wins), then bucket the
/// lower-left values into `m = ceil(1/(delta_prime - delta))` intervals and
/// keep a monochromatic subsequence again. A surviving subsequence of length
/// `2k+1` assembles a star witness from the even rows and odd columns.
///
/// The returned threshold is the largest lower-left entry used by the
/// assembled witness (at most the bucket's upper endpoint), which keeps the
/// witness inequalities exact; `None` when greedy extraction falls short.
pub fn extract_star_witness(
    f: &ValueMatrix,
    w: &HalfGraphWitness,
    delta_prime: f64,
    delta: f64,
    k: usize,
) -> Result<Option<HalfGraphWitness>> {
    if f.range() != Range::Unit {
        return Err(Error::input("star extraction requires a unit-range matrix"));
    }
    if k == 0 {
        return Err(Error::input("target chain length k must be positive"));
    }
    if !(delta > 0.0 && delta_prime > delta) {
        return Err(Error::input("need delta_prime > delta > 0"));
    }
    let plain = HalfGraphWitness::plain(w.a_idx.clone(), w.b_idx.clone(), delta_prime);
    if !validate_witness(f, &plain)? {
        return Err(Error::input("input witness does not validate at delta_prime"));
    }

    let ai = &w.a_idx;
    let bi = &w.b_idx;
    let len = ai.len();

    // Stage 1: 2-color pairs i < j by sign branch; exactly one holds since
    // |f(a_i,b_j) - f(a_j,b_i)| >= delta_prime > 0.
    let ascending =
        |i: usize, j: usize| ge_sum(f.get(ai[i], bi[j]), f.get(ai[j], bi[i]), delta_prime);
    let (color, seq) = greedy_monochromatic(len, |i, j| if ascending(i, j) { 0 } else { 1 });
    let seq: Vec<usize> = if color == 0 { seq } else { seq.into_iter().rev().collect() };

    // Stage 2: m-color surviving pairs by the lower-left bucket.
    let m = {
        let gap = rational_of(delta_prime) - rational_of(delta);
        (BigRational::from_integer(BigInt::from(1)) / gap)
            .ceil()
            .to_integer()
            .to_usize()
            .ok_or_else(|| Error::input("delta_prime - delta is too small"))?
            .max(1)
    };
    let bucket = |i: usize, j: usize| -> usize {
        // minimal t >= 1 with f(a_j, b_i) <= t/m, i.e. t = max(1, ceil(m f))
        let v = f.get(ai[seq[j]], bi[seq[i]]);
        let t = (rational_of(v) * BigRational::from_integer(BigInt::from(m)))
            .ceil()
            .to_integer()
            .to_usize()
            .unwrap_or(m);
        t.clamp(1, m.max(1))
    };
    let (_, sub) = greedy_monochromatic(seq.len(), bucket);
    if sub.len() < 2 * k + 1 {
        return Ok(None);
    }

    // Positions 2, 4, ..., 2k give rows; 3, 5, ..., 2k+1 give columns
    // (1-based positions within the surviving subsequence).
    let pos = |p: usize| seq[sub[p - 1]];
    let a_idx: Vec<usize> = (1..=k).map(|i| ai[pos(2 * i)]).collect();
    let b_idx: Vec<usize> = (1..=k).map(|i| bi[pos(2 * i + 1)]).collect();
    let mut r = 0.0f64;
    for i in 0..k {
        for j in 0..k {
            if i > j {
                r = r.max(f.get(a_idx[i], b_idx[j]));
            }
        }
    }
    let star = HalfGraphWitness::star(a_idx, b_idx, delta, r);
    debug_assert!(validate_witness(f, &star)?, "extracted star witness must validate");
    Ok(Some(star))
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

    fn guard() -> SearchGuard {
        SearchGuard::default()
    }

    #[test]
    fn half_graph_has_full_length_plain_witness() {
        for k in 2..=4 {
            let f = half_graph(k);
            let w = find_half_graph(&f, k, 1.0, WitnessKind::Plain, SearchMode::Exact, &guard())
                .unwrap()
                .expect("witness");
            assert_eq!(w.len(), k);
            assert!(validate_witness(&f, &w).unwrap());
        }
    }

    #[test]
    fn constant_matrix_has_no_witness_beyond_length_one() {
        let f = ValueMatrix::constant(4, 4, 0.7, Range::Unit).unwrap();
        for k in 2..=3 {
            let r = find_half_graph(&f, k, 0.1, WitnessKind::Plain, SearchMode::Exact, &guard())
                .unwrap();
            assert!(r.is_none());
        }
        let rep =
            stability_index(&f, 0.1, WitnessKind::Plain, SearchMode::Exact, &guard(), None)
                .unwrap();
        assert_eq!(rep.plain_index, Some(1));
        assert!(rep.exact);
    }

    #[test]
    fn half_graph_plain_index_distinct_is_k() {
        let f = half_graph(4);
        let rep = stability_index_in(
            &f,
            1.0,
            WitnessKind::Plain,
            SearchMode::Exact,
            &guard(),
            None,
            ChainElements::Distinct,
        )
        .unwrap();
        assert_eq!(rep.plain_index, Some(4));
        assert!(rep.exact);
    }

    #[test]
    fn half_graph_repeats_lengthen_plain_chains() {
        // With repeated elements allowed, interleaving (t,t) and (t+1,t)
        // yields a chain of length 2k - 1.
        let f = half_graph(4);
        let rep =
            stability_index(&f, 1.0, WitnessKind::Plain, SearchMode::Exact, &guard(), None)
                .unwrap();
        assert_eq!(rep.plain_index, Some(7));
        let w = rep.plain_witness.unwrap();
        assert!(validate_witness(&f, &w).unwrap());
        // Star chains force distinct interleaved indices either way.
        let star =
            stability_index(&f, 1.0, WitnessKind::Star, SearchMode::Exact, &guard(), None)
                .unwrap();
        assert_eq!(star.star_index, Some(4));
    }

    #[test]
    fn half_graph_star_witness_exists() {
        let f = half_graph(3);
        let w = find_half_graph(&f, 3, 1.0, WitnessKind::Star, SearchMode::Exact, &guard())
            .unwrap()
            .expect("star witness");
        assert!(validate_witness(&f, &w).unwrap());
        assert!(validate_witness(&f, &w.as_plain()).unwrap());
    }

    #[test]
    fn star_index_never_exceeds_plain_index() {
        let f = half_graph(4);
        let p = stability_index(&f, 0.5, WitnessKind::Plain, SearchMode::Exact, &guard(), None)
            .unwrap();
        let s = stability_index(&f, 0.5, WitnessKind::Star, SearchMode::Exact, &guard(), None)
            .unwrap();
        assert!(s.star_index.unwrap() <= p.plain_index.unwrap());
    }

    #[test]
    fn guard_rejects_oversized_exact_requests() {
        let f = ValueMatrix::constant(30, 30, 0.5, Range::Unit).unwrap();
        let err = find_half_graph(&f, 8, 0.1, WitnessKind::Plain, SearchMode::Exact, &guard());
        assert!(matches!(err, Err(Error::Capability(_))));
    }

    #[test]
    fn zero_delta_is_an_input_error() {
        let f = half_graph(2);
        assert!(
            find_half_graph(&f, 2, 0.0, WitnessKind::Plain, SearchMode::Exact, &guard()).is_err()
        );
    }

    #[test]
    fn greedy_witnesses_validate() {
        let f = half_graph(5);
        let w = find_half_graph(&f, 3, 1.0, WitnessKind::Plain, SearchMode::Greedy, &guard())
            .unwrap();
        if let Some(w) = w {
            assert!(validate_witness(&f, &w).unwrap());
        }
    }

    #[test]
    fn extraction_on_monochromatic_chain() {
        // Half graph of size 2k+1: the plain diagonal chain is already
        // monochromatic in both stages.
        let k = 2;
        let f = half_graph(2 * k + 1);
        let idx: Vec<usize> = (0..2 * k + 1).collect();
        let w = HalfGraphWitness::plain(idx.clone(), idx, 1.0);
        let star = extract_star_witness(&f, &w, 1.0, 0.5, k).unwrap().expect("extracted");
        assert_eq!(star.len(), k);
        assert!(validate_witness(&f, &star).unwrap());
    }

    #[test]
    fn extraction_rejects_invalid_input() {
        let f = ValueMatrix::constant(3, 3, 0.5, Range::Unit).unwrap();
        let w = HalfGraphWitness::plain(vec![0, 1], vec![0, 1], 0.5);
        assert!(extract_star_witness(&f, &w, 0.5, 0.25, 1).is_err());
    }

    #[test]
    fn alternating_signs_defeat_greedy_extraction() {
        // A 5-chain whose sign branches alternate: both monochromatic
        // branches stay short of 2k+1 = 5.
        let n = 5;
        let mut entries = vec![0.5f64; n * n];
        let val = |i: usize, j: usize| -> f64 {
            // pair (i, j), i < j: ascending iff (i + j) odd
            if (i + j) % 2 == 1 {
                1.0
            } else {
                0.0
            }
        };
        for i in 0..n {
            for j in 0..n {
                if i < j {
                    entries[i * n + j] = val(i, j);
                    entries[j * n + i] = 1.0 - val(i, j);
                } else if i == j {
                    entries[i * n + j] = 0.5;
                }
            }
        }
        let f = ValueMatrix::unit(n, n, entries).unwrap();
        let idx: Vec<usize> = (0..n).collect();
        let w = HalfGraphWitness::plain(idx.clone(), idx, 1.0);
        assert!(validate_witness(&f, &w).unwrap());
        let res = extract_star_witness(&f, &w, 1.0, 0.5, 2).unwrap();
        assert!(res.is_none());
    }
}
