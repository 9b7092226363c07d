//! Dense value matrices: bounded real functions on `V x W`.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Declared range of the entries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Range {
    /// All entries in `[0, 1]`.
    Unit,
    /// All entries in `[-1, 1]`.
    Signed,
}

/// A function `f : V x W -> [-1, 1]` stored dense, row-major.
///
/// Rows index `V`, columns index `W`. Construction rejects entries outside
/// the declared range with a closed-interval check on the stored doubles
/// (no tolerance); NaN is always rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueMatrix {
    rows: usize,
    cols: usize,
    entries: Vec<f64>,
    range: Range,
}

impl ValueMatrix {
    pub fn new(rows: usize, cols: usize, entries: Vec<f64>, range: Range) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::input("matrix must have at least one row and one column"));
        }
        if entries.len() != rows * cols {
            return Err(Error::input(format!(
                "expected {} entries for a {}x{} matrix, got {}",
                rows * cols,
                rows,
                cols,
                entries.len()
            )));
        }
        let lo = match range {
            Range::Unit => 0.0,
            Range::Signed => -1.0,
        };
        for (i, &v) in entries.iter().enumerate() {
            if !(lo..=1.0).contains(&v) {
                return Err(Error::input(format!(
                    "entry {} at flat index {} is outside the declared {:?} range",
                    v, i, range
                )));
            }
        }
        Ok(ValueMatrix { rows, cols, entries, range })
    }

    pub fn unit(rows: usize, cols: usize, entries: Vec<f64>) -> Result<Self> {
        Self::new(rows, cols, entries, Range::Unit)
    }

    pub fn signed(rows: usize, cols: usize, entries: Vec<f64>) -> Result<Self> {
        Self::new(rows, cols, entries, Range::Signed)
    }

    /// Constant matrix; `c` must lie in the declared range.
    pub fn constant(rows: usize, cols: usize, c: f64, range: Range) -> Result<Self> {
        Self::new(rows, cols, vec![c; rows * cols], range)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn range(&self) -> Range {
        self.range
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    #[inline]
    pub fn get(&self, a: usize, b: usize) -> f64 {
        debug_assert!(a < self.rows && b < self.cols);
        self.entries[a * self.cols + b]
    }

    /// Bounds-checked access; out-of-bounds indices are input errors.
    pub fn checked_get(&self, a: usize, b: usize) -> Result<f64> {
        if a >= self.rows || b >= self.cols {
            return Err(Error::input(format!(
                "index ({a},{b}) out of bounds for {}x{} matrix",
                self.rows, self.cols
            )));
        }
        Ok(self.get(a, b))
    }

    pub fn transpose(&self) -> ValueMatrix {
        let mut entries = vec![0.0; self.entries.len()];
        for a in 0..self.rows {
            for b in 0..self.cols {
                entries[b * self.rows + a] = self.get(a, b);
            }
        }
        ValueMatrix { rows: self.cols, cols: self.rows, entries, range: self.range }
    }

    /// `f(a,b) == f(b,a)` for all pairs, exact equality; requires square.
    pub fn is_symmetric(&self) -> bool {
        if self.rows != self.cols {
            return false;
        }
        for a in 0..self.rows {
            for b in (a + 1)..self.cols {
                if self.get(a, b) != self.get(b, a) {
                    return false;
                }
            }
        }
        true
    }

    /// Map a signed matrix into the unit range by `v -> (v + 1) / 2`.
    ///
    /// Contract: `f` is `(k, delta)`-stable iff `rescale_to_unit(f)` is
    /// `(k, delta/2)`-stable, up to one rounding of each entry. Applying
    /// the inverse map `u -> 2u - 1` recovers the original entries to
    /// within one unit in the last place.
    pub fn rescale_to_unit(&self) -> Result<ValueMatrix> {
        if self.range != Range::Signed {
            return Err(Error::input("rescale_to_unit requires a signed-range matrix"));
        }
        let entries = self.entries.iter().map(|&v| (v + 1.0) / 2.0).collect();
        ValueMatrix::new(self.rows, self.cols, entries, Range::Unit)
    }

    /// Number of entries with a nonzero stored value.
    pub fn support_size(&self) -> usize {
        self.entries.iter().filter(|&&v| v != 0.0).count()
    }

    /// All entries are exactly `0.0` or `1.0`.
    pub fn is_zero_one(&self) -> bool {
        self.entries.iter().all(|&v| v == 0.0 || v == 1.0)
    }
}

/// Validate that `idx` is a set of in-bounds, strictly increasing indices.
pub fn check_index_set(idx: &[usize], bound: usize, what: &str) -> Result<()> {
    for (i, &v) in idx.iter().enumerate() {
        if v >= bound {
            return Err(Error::input(format!("{what}: index {v} out of bounds ({bound})")));
        }
        if i > 0 && idx[i - 1] >= v {
            return Err(Error::input(format!("{what}: indices must be strictly increasing")));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn half_graph(k: usize) -> ValueMatrix {
        let entries = (0..k)
            .flat_map(|i| (0..k).map(move |j| if i <= j { 1.0 } else { 0.0 }))
            .collect();
        ValueMatrix::unit(k, k, entries).unwrap()
    }

    #[test]
    fn constructor_rejects_out_of_range() {
        assert!(ValueMatrix::unit(1, 2, vec![0.0, 1.0000001]).is_err());
        assert!(ValueMatrix::unit(1, 2, vec![-0.1, 0.5]).is_err());
        assert!(ValueMatrix::signed(1, 2, vec![-1.0, 1.0]).is_ok());
        assert!(ValueMatrix::signed(1, 2, vec![-1.1, 0.0]).is_err());
        assert!(ValueMatrix::unit(1, 1, vec![f64::NAN]).is_err());
        assert!(ValueMatrix::unit(0, 1, vec![]).is_err());
    }

    #[test]
    fn rescale_maps_endpoints() {
        let m = ValueMatrix::signed(1, 3, vec![-1.0, 0.0, 1.0]).unwrap();
        let u = m.rescale_to_unit().unwrap();
        assert_eq!(u.entries(), &[0.0, 0.5, 1.0]);
        assert_eq!(u.range(), Range::Unit);
        assert!(u.rescale_to_unit().is_err());
    }

    #[test]
    fn rescale_roundtrips_within_one_ulp() {
        let vals: Vec<f64> = (0..101).map(|i| -1.0 + 2.0 * (i as f64) / 100.0).collect();
        let m = ValueMatrix::signed(1, vals.len(), vals.clone()).unwrap();
        let u = m.rescale_to_unit().unwrap();
        for (orig, resc) in vals.iter().zip(u.entries()) {
            let back = 2.0 * resc - 1.0;
            let ulp = orig.abs().max(f64::MIN_POSITIVE) * f64::EPSILON;
            assert!((back - orig).abs() <= ulp, "{orig} -> {back}");
        }
    }

    #[test]
    fn symmetry_and_transpose() {
        let m = half_graph(3);
        assert!(!m.is_symmetric());
        let t = m.transpose();
        assert_eq!(t.get(2, 0), m.get(0, 2));
        let s = ValueMatrix::unit(2, 2, vec![0.1, 0.7, 0.7, 0.9]).unwrap();
        assert!(s.is_symmetric());
    }
}
