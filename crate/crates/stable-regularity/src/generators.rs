//! Seeded generators of test matrices with known stability behaviour.
//!
//! Generation is a pure function of the spec (seed included): random values
//! come from a counter-based mix keyed by the seed, so the same spec yields
//! byte-identical matrices on every platform.

use crate::error::{Error, Result};
use crate::matrix::{Range, ValueMatrix};
use crate::num_util::compensated_sum;
use crate::stability::{stability_index, SearchGuard, SearchMode, StabilityReport};
use crate::witness::WitnessKind;
use serde::{Deserialize, Serialize};

/// Counter-based pseudorandom function: a SplitMix64-style finalizer over
/// `seed`, `counter`.
pub fn prf(seed: u64, counter: u64) -> u64 {
    let mut z = seed ^ counter.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Uniform double in `[0, 1)` from 53 mixed bits.
pub fn prf_unit(seed: u64, counter: u64) -> f64 {
    (prf(seed, counter) >> 11) as f64 * (1.0 / 9007199254740992.0)
}

/// Uniform double in `[-1, 1]`.
pub fn prf_signed(seed: u64, counter: u64) -> f64 {
    2.0 * prf_unit(seed, counter) - 1.0
}

/// Description of a generated matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GeneratorSpec {
    /// `k x k` indicator of `i <= j`.
    HalfGraph { k: usize },
    /// `k x k` with value `(1+delta)/2` on or above the diagonal and
    /// `(1-delta)/2` below; the two levels are nudged so that their stored
    /// difference is at least `delta` exactly.
    FuzzyHalfGraph { k: usize, delta: f64 },
    /// `f(a,b) = (1/|X|) sum_x g(x,a) h(x,b)` with `[-1,1]`-valued tables;
    /// random tables when not supplied.
    InnerProduct {
        rows: usize,
        cols: usize,
        x_size: usize,
        seed: u64,
        #[serde(skip_serializing_if = "Option::is_none", default)]
        g: Option<Vec<Vec<f64>>>,
        #[serde(skip_serializing_if = "Option::is_none", default)]
        h: Option<Vec<Vec<f64>>>,
    },
    /// `f(x,y) = (1/n) sum_t g(t) h(x+y-t mod n)` on the cyclic group of
    /// order `n`; random tables when not supplied.
    CyclicConvolution {
        n: usize,
        seed: u64,
        #[serde(skip_serializing_if = "Option::is_none", default)]
        g: Option<Vec<f64>>,
        #[serde(skip_serializing_if = "Option::is_none", default)]
        h: Option<Vec<f64>>,
    },
    /// Block-constant unit matrix with independent per-cell value flips
    /// (`v -> 1 - v`) at the given rate.
    PlantedBlocks {
        row_blocks: Vec<usize>,
        col_blocks: Vec<usize>,
        /// Value per block pair, row-major over blocks.
        values: Vec<f64>,
        noise_rate: f64,
        seed: u64,
    },
    /// Block-constant matrix over a value set whose distinct values are
    /// pairwise more than `10 * delta` apart; block values drawn from the
    /// set by seed.
    DiscreteStable {
        row_blocks: Vec<usize>,
        col_blocks: Vec<usize>,
        value_set: Vec<f64>,
        delta: f64,
        seed: u64,
    },
    /// Independent uniform `[0,1)` entries.
    UniformRandom { rows: usize, cols: usize, seed: u64 },
}

fn check_positive(n: usize, what: &str) -> Result<()> {
    if n == 0 {
        Err(Error::input(format!("{what} must be positive")))
    } else {
        Ok(())
    }
}

fn fuzzy_levels(delta: f64) -> Result<(f64, f64)> {
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(Error::input("fuzzy half graph needs delta in (0, 1]"));
    }
    let lo = (1.0 - delta) / 2.0;
    let mut hi = (1.0 + delta) / 2.0;
    // Nudge upward until the stored difference clears delta; the loop runs
    // at most a couple of ulps.
    while !crate::num_util::ge_sum(hi, lo, delta) {
        hi = f64::from_bits(hi.to_bits() + 1);
    }
    if hi > 1.0 {
        return Err(Error::input("fuzzy half graph levels left the unit range"));
    }
    Ok((hi, lo))
}

/// Generate the matrix a spec describes.
pub fn generate(spec: &GeneratorSpec) -> Result<ValueMatrix> {
    match spec {
        GeneratorSpec::HalfGraph { k } => {
            check_positive(*k, "k")?;
            let entries = (0..*k)
                .flat_map(|i| (0..*k).map(move |j| if i <= j { 1.0 } else { 0.0 }))
                .collect();
            ValueMatrix::unit(*k, *k, entries)
        }
        GeneratorSpec::FuzzyHalfGraph { k, delta } => {
            check_positive(*k, "k")?;
            let (hi, lo) = fuzzy_levels(*delta)?;
            let entries = (0..*k)
                .flat_map(|i| (0..*k).map(move |j| if i <= j { hi } else { lo }))
                .collect();
            ValueMatrix::unit(*k, *k, entries)
        }
        GeneratorSpec::InnerProduct { rows, cols, x_size, seed, g, h } => {
            check_positive(*rows, "rows")?;
            check_positive(*cols, "cols")?;
            check_positive(*x_size, "x_size")?;
            let g = table2(g, *x_size, *rows, *seed, 0)?;
            let h = table2(h, *x_size, *cols, *seed, 1)?;
            let inv = 1.0 / *x_size as f64;
            let entries = (0..*rows)
                .flat_map(|a| {
                    let g = &g;
                    let h = &h;
                    (0..*cols).map(move |b| {
                        let s = compensated_sum((0..*x_size).map(|x| g[x][a] * h[x][b]));
                        (s * inv).clamp(-1.0, 1.0)
                    })
                })
                .collect();
            ValueMatrix::signed(*rows, *cols, entries)
        }
        GeneratorSpec::CyclicConvolution { n, seed, g, h } => {
            check_positive(*n, "n")?;
            let g = table1(g, *n, *seed, 2)?;
            let h = table1(h, *n, *seed, 3)?;
            let inv = 1.0 / *n as f64;
            let entries = (0..*n)
                .flat_map(|x| {
                    let g = &g;
                    let h = &h;
                    (0..*n).map(move |y| {
                        let s =
                            compensated_sum((0..*n).map(|t| g[t] * h[(x + y + *n - t) % *n]));
                        (s * inv).clamp(-1.0, 1.0)
                    })
                })
                .collect();
            ValueMatrix::signed(*n, *n, entries)
        }
        GeneratorSpec::PlantedBlocks { row_blocks, col_blocks, values, noise_rate, seed } => {
            let (rows, cols, cell_block) = block_layout(row_blocks, col_blocks)?;
            if values.len() != row_blocks.len() * col_blocks.len() {
                return Err(Error::input("need one value per block pair"));
            }
            if values.iter().any(|v| !(0.0..=1.0).contains(v)) {
                return Err(Error::input("planted block values must lie in [0,1]"));
            }
            if !(0.0..=1.0).contains(noise_rate) {
                return Err(Error::input("noise rate must lie in [0,1]"));
            }
            let entries = (0..rows * cols)
                .map(|idx| {
                    let v = values[cell_block(idx / cols, idx % cols)];
                    if prf_unit(*seed, idx as u64) < *noise_rate {
                        1.0 - v
                    } else {
                        v
                    }
                })
                .collect();
            ValueMatrix::unit(rows, cols, entries)
        }
        GeneratorSpec::DiscreteStable { row_blocks, col_blocks, value_set, delta, seed } => {
            let (rows, cols, cell_block) = block_layout(row_blocks, col_blocks)?;
            if value_set.is_empty() || value_set.iter().any(|v| !(0.0..=1.0).contains(v)) {
                return Err(Error::input("value set must be nonempty inside [0,1]"));
            }
            if !(*delta > 0.0) {
                return Err(Error::input("delta must be positive"));
            }
            for (i, &x) in value_set.iter().enumerate() {
                for &y in &value_set[i + 1..] {
                    if !((x - y).abs() > 10.0 * delta) {
                        return Err(Error::input(format!(
                            "values {x} and {y} are not separated by more than 10*delta"
                        )));
                    }
                }
            }
            let nblocks = row_blocks.len() * col_blocks.len();
            let choice: Vec<f64> = (0..nblocks)
                .map(|i| value_set[(prf(*seed, i as u64) % value_set.len() as u64) as usize])
                .collect();
            let entries =
                (0..rows * cols).map(|idx| choice[cell_block(idx / cols, idx % cols)]).collect();
            ValueMatrix::unit(rows, cols, entries)
        }
        GeneratorSpec::UniformRandom { rows, cols, seed } => {
            check_positive(*rows, "rows")?;
            check_positive(*cols, "cols")?;
            let entries = (0..rows * cols).map(|i| prf_unit(*seed, i as u64)).collect();
            ValueMatrix::unit(*rows, *cols, entries)
        }
    }
}

fn table2(
    given: &Option<Vec<Vec<f64>>>,
    x: usize,
    side: usize,
    seed: u64,
    stream: u64,
) -> Result<Vec<Vec<f64>>> {
    match given {
        Some(t) => {
            if t.len() != x || t.iter().any(|row| row.len() != side) {
                return Err(Error::input("table has wrong shape"));
            }
            if t.iter().flatten().any(|v| !(-1.0..=1.0).contains(v)) {
                return Err(Error::input("table values must lie in [-1,1]"));
            }
            Ok(t.clone())
        }
        None => Ok((0..x)
            .map(|xi| {
                (0..side)
                    .map(|s| prf_signed(seed, stream << 56 | (xi as u64) << 28 | s as u64))
                    .collect()
            })
            .collect()),
    }
}

fn table1(given: &Option<Vec<f64>>, n: usize, seed: u64, stream: u64) -> Result<Vec<f64>> {
    match given {
        Some(t) => {
            if t.len() != n {
                return Err(Error::input("table has wrong length"));
            }
            if t.iter().any(|v| !(-1.0..=1.0).contains(v)) {
                return Err(Error::input("table values must lie in [-1,1]"));
            }
            Ok(t.clone())
        }
        None => Ok((0..n).map(|i| prf_signed(seed, stream << 56 | i as u64)).collect()),
    }
}

#[allow(clippy::type_complexity)]
fn block_layout<'a>(
    row_blocks: &'a [usize],
    col_blocks: &'a [usize],
) -> Result<(usize, usize, impl Fn(usize, usize) -> usize + 'a)> {
    if row_blocks.is_empty() || col_blocks.is_empty() {
        return Err(Error::input("block layout must be nonempty"));
    }
    if row_blocks.iter().chain(col_blocks).any(|&s| s == 0) {
        return Err(Error::input("block sizes must be positive"));
    }
    let rows: usize = row_blocks.iter().sum();
    let cols: usize = col_blocks.iter().sum();
    let locate = move |sizes: &[usize], mut idx: usize| -> usize {
        for (i, &s) in sizes.iter().enumerate() {
            if idx < s {
                return i;
            }
            idx -= s;
        }
        sizes.len() - 1
    };
    let ncols_blocks = col_blocks.len();
    Ok((rows, cols, move |a: usize, b: usize| {
        locate(row_blocks, a) * ncols_blocks + locate(col_blocks, b)
    }))
}

/// Generate the spec's matrix and certify its stability index exactly up to
/// `k_max`. Signed outputs are rescaled into the unit range first, halving
/// `delta` per the rescaling contract; the report's `delta` field records
/// the threshold actually searched.
pub fn certify_stability(
    spec: &GeneratorSpec,
    delta: f64,
    k_max: usize,
    guard: &SearchGuard,
) -> Result<StabilityReport> {
    let m = generate(spec)?;
    let (m, delta) = match m.range() {
        Range::Signed => (m.rescale_to_unit()?, delta / 2.0),
        Range::Unit => (m, delta),
    };
    let plain =
        stability_index(&m, delta, WitnessKind::Plain, SearchMode::Exact, guard, Some(k_max))?;
    let star =
        stability_index(&m, delta, WitnessKind::Star, SearchMode::Exact, guard, Some(k_max))?;
    Ok(StabilityReport {
        delta,
        plain_index: plain.plain_index,
        star_index: star.star_index,
        exact: plain.exact && star.exact,
        plain_witness: plain.plain_witness,
        star_witness: star.star_witness,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn half_graph_matches_definition() {
        let m = generate(&GeneratorSpec::HalfGraph { k: 3 }).unwrap();
        assert_eq!(m.entries(), &[1.0, 1.0, 1.0, 0.0, 1.0, 1.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn inner_product_of_all_ones_is_all_ones() {
        let g = Some(vec![vec![1.0; 2]; 3]);
        let h = Some(vec![vec![1.0; 4]; 3]);
        let m = generate(&GeneratorSpec::InnerProduct {
            rows: 2,
            cols: 4,
            x_size: 3,
            seed: 7,
            g,
            h,
        })
        .unwrap();
        assert!(m.entries().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn cyclic_convolution_matches_direct_sum() {
        let g = vec![0.5, -0.25, 0.75];
        let h = vec![-1.0, 0.5, 0.0];
        let m = generate(&GeneratorSpec::CyclicConvolution {
            n: 3,
            seed: 0,
            g: Some(g.clone()),
            h: Some(h.clone()),
        })
        .unwrap();
        for x in 0..3 {
            for y in 0..3 {
                let direct: f64 =
                    (0..3).map(|t| g[t] * h[(x + y + 3 - t) % 3]).sum::<f64>() / 3.0;
                assert!((m.get(x, y) - direct).abs() < 1e-15);
            }
        }
        assert!(m.is_symmetric());
    }

    #[test]
    fn generation_is_deterministic() {
        let spec = GeneratorSpec::UniformRandom { rows: 5, cols: 7, seed: 99 };
        assert_eq!(generate(&spec).unwrap(), generate(&spec).unwrap());
        let other = GeneratorSpec::UniformRandom { rows: 5, cols: 7, seed: 100 };
        assert_ne!(generate(&spec).unwrap(), generate(&other).unwrap());
    }

    #[test]
    fn discrete_stable_rejects_crowded_value_sets() {
        let spec = GeneratorSpec::DiscreteStable {
            row_blocks: vec![2],
            col_blocks: vec![2],
            value_set: vec![0.1, 0.15],
            delta: 0.01,
            seed: 0,
        };
        assert!(generate(&spec).is_err());
    }

    #[test]
    fn fuzzy_half_graph_certifies_at_its_threshold() {
        for (k, delta) in [(3usize, 0.3f64), (4, 0.5), (2, 1.0)] {
            let spec = GeneratorSpec::FuzzyHalfGraph { k, delta };
            let rep = certify_stability(&spec, delta, k + 1, &SearchGuard::default()).unwrap();
            assert_eq!(rep.plain_index, Some(k), "k={k} delta={delta}");
            assert!(rep.exact);
        }
    }

    #[test]
    fn constant_generator_has_index_one() {
        let spec = GeneratorSpec::PlantedBlocks {
            row_blocks: vec![4],
            col_blocks: vec![4],
            values: vec![0.3],
            noise_rate: 0.0,
            seed: 5,
        };
        let rep = certify_stability(&spec, 0.2, 4, &SearchGuard::default()).unwrap();
        assert_eq!(rep.plain_index, Some(1));
    }
}
