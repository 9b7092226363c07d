//! Exact numeric predicates and accurate summation.
//!
//! Every definitional comparison in this crate (`|f(a,b') - f(a',b)| >= delta`,
//! `f(a,b) >= r + delta`, `|f(a,b) - r| <= delta`, counting thresholds like
//! `count >= (1 - eps) * n`) is decided exactly over the stored doubles,
//! treating each double as the rational number it denotes. A fast
//! double-precision path answers when the comparison is not close; within a
//! few ulps of a tie the comparison is re-run in exact rational arithmetic.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Signed, ToPrimitive, Zero};
use std::cmp::Ordering;

/// Exact rational value of a finite double.
pub fn rational_of(v: f64) -> BigRational {
    BigRational::from_float(v).expect("finite double")
}

fn close_call(lhs: f64, rhs: f64) -> bool {
    let scale = lhs.abs().max(rhs.abs()).max(1.0);
    (lhs - rhs).abs() <= 8.0 * f64::EPSILON * scale
}

/// Exact sign of `(a - b) - c` for finite doubles.
///
/// Used for predicates of the form `a - b >= c` where `a - b` would round.
pub fn cmp_diff(a: f64, b: f64, c: f64) -> Ordering {
    let d = a - b;
    if close_call(d, c) {
        let exact = rational_of(a) - rational_of(b);
        exact.cmp(&rational_of(c))
    } else {
        d.partial_cmp(&c).expect("finite")
    }
}

/// Exact test of `|a - b| <= c`.
pub fn abs_diff_le(a: f64, b: f64, c: f64) -> bool {
    let d = (a - b).abs();
    if close_call(d, c) {
        let exact = (rational_of(a) - rational_of(b)).abs();
        exact <= rational_of(c)
    } else {
        d <= c
    }
}

/// Exact test of `a >= b + c`.
pub fn ge_sum(a: f64, b: f64, c: f64) -> bool {
    cmp_diff(a, b, c) != Ordering::Less
}

/// Exact test of `count >= (1 - frac) * n` with integer `count`, `n`.
pub fn count_meets_fraction(count: usize, frac: f64, n: usize) -> bool {
    // count >= n - frac * n  <=>  frac * n >= n - count
    let lhs = rational_of(frac) * BigRational::from_integer(BigInt::from(n));
    let rhs = BigRational::from_integer(BigInt::from(n - count.min(n)));
    lhs >= rhs
}

/// Exact test of `a <= frac * b` with integer `a`, `b`.
pub fn le_scaled(a: usize, frac: f64, b: usize) -> bool {
    let rhs = rational_of(frac) * BigRational::from_integer(BigInt::from(b));
    BigRational::from_integer(BigInt::from(a)) <= rhs
}

/// Exact test of `a <= (f1 + f2) * b` with integer `a`, `b`.
pub fn le_scaled_sum(a: usize, f1: f64, f2: f64, b: usize) -> bool {
    let rhs = (rational_of(f1) + rational_of(f2)) * BigRational::from_integer(BigInt::from(b));
    BigRational::from_integer(BigInt::from(a)) <= rhs
}

/// Exact `ceil(frac * n)` as an integer, for `frac >= 0`.
pub fn ceil_scaled(frac: f64, n: usize) -> usize {
    let q = rational_of(frac) * BigRational::from_integer(BigInt::from(n));
    q.ceil().to_integer().to_usize().unwrap_or(usize::MAX)
}

/// Neumaier-compensated sum.
pub fn compensated_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Nearest double to a positive rational, ties to even.
///
/// Falls back to a best-effort quotient when the value leaves the normal
/// range; every use in this crate stays comfortably inside it.
pub fn rational_to_f64_nearest(r: &BigRational) -> f64 {
    if r.is_zero() {
        return 0.0;
    }
    if r.is_negative() {
        return -rational_to_f64_nearest(&-r.clone());
    }
    let mut num = r.numer().clone();
    let mut den = r.denom().clone();
    // Scale so that floor(num/den) has exactly 54 bits, then round the
    // 54-bit quotient (53-bit mantissa + round bit) to nearest-even using
    // the remainder as the sticky bit. The tracked value is
    // (num/den) * 2^exp2.
    let mut exp2: i64 = 54 - (num.bits() as i64 - den.bits() as i64);
    if exp2 > 0 {
        num <<= exp2 as u64;
    } else if exp2 < 0 {
        den <<= (-exp2) as u64;
    }
    exp2 = -exp2;
    loop {
        let bits = (&num / &den).bits() as i64;
        if bits == 54 {
            break;
        }
        if bits < 54 {
            num <<= 1u64;
            exp2 -= 1;
        } else {
            den <<= 1u64;
            exp2 += 1;
        }
    }
    let q = &num / &den;
    let rem = &num - &q * &den;
    let mut m = (&q >> 1usize).to_u64().expect("54-bit quotient");
    let round_bit = (&q & BigInt::from(1)) == BigInt::from(1);
    let sticky = !rem.is_zero();
    if round_bit && (sticky || m & 1 == 1) {
        m += 1;
        if m == (1u64 << 53) {
            m >>= 1;
            exp2 += 1;
        }
    }
    // value = m * 2^(exp2 + 1); m has 53 bits.
    let e = exp2 + 1;
    if !(-1074..=971).contains(&e) {
        return r.numer().to_f64().unwrap_or(f64::MAX) / r.denom().to_f64().unwrap_or(1.0);
    }
    (m as f64) * 2.0f64.powi(e as i32)
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_bigint::BigInt;

    #[test]
    fn cmp_diff_handles_rounding_ties() {
        // 0.1 + 0.2 != 0.3 in doubles; the exact comparison must see it.
        assert_eq!(cmp_diff(0.3, 0.1, 0.2), Ordering::Less);
        assert_eq!(cmp_diff(0.75, 0.5, 0.25), Ordering::Equal);
        assert!(ge_sum(1.0, 0.0, 1.0));
        assert!(!ge_sum(0.9999999999999999, 0.0, 1.0));
    }

    #[test]
    fn abs_diff_le_is_exact_at_the_boundary() {
        assert!(abs_diff_le(0.75, 0.5, 0.25));
        assert!(!abs_diff_le(0.30000000000000004, 0.0, 0.3));
        assert!(abs_diff_le(0.3, 0.3, 0.0));
    }

    #[test]
    fn count_thresholds() {
        // count >= (1 - 0.4) * 2 = 1.2
        assert!(!count_meets_fraction(1, 0.4, 2));
        assert!(count_meets_fraction(2, 0.4, 2));
        // count >= (1 - 0.5) * 2 = 1, closed inequality
        assert!(count_meets_fraction(1, 0.5, 2));
        assert!(le_scaled(1, 0.5, 2));
        assert!(!le_scaled(2, 0.5, 3));
        assert_eq!(ceil_scaled(0.1, 100), ceil_scaled(0.1, 100));
    }

    #[test]
    fn ceil_scaled_is_exact_near_integers() {
        // 0.1 as a double is slightly above 1/10, so 0.1 * 100 > 10 exactly.
        let q = rational_of(0.1) * BigRational::from_integer(BigInt::from(100));
        assert!(q > BigRational::from_integer(BigInt::from(10)));
        assert_eq!(ceil_scaled(0.1, 100), 11);
        assert_eq!(ceil_scaled(0.25, 100), 25);
    }

    #[test]
    fn rational_rounding_matches_native() {
        for (n, d) in [(1i64, 3i64), (2, 3), (1, 10), (7, 11), (355, 113), (1, 7)] {
            let r = BigRational::new(BigInt::from(n), BigInt::from(d));
            assert_eq!(rational_to_f64_nearest(&r), n as f64 / d as f64, "{n}/{d}");
        }
        let r = BigRational::new(BigInt::from(1), BigInt::from(1) << 60);
        assert_eq!(rational_to_f64_nearest(&r), (1.0f64 / 2.0f64.powi(60)));
    }

    #[test]
    fn rational_rounding_roundtrips_doubles() {
        for v in [0.1, 0.3, 1.0 / 3.0, 0.9999999999, 5e-5, 123.456] {
            assert_eq!(rational_to_f64_nearest(&rational_of(v)), v);
        }
    }

    #[test]
    fn compensated_sum_exact_on_integers() {
        let s = compensated_sum((0..1000).map(|i| i as f64));
        assert_eq!(s, 499500.0);
    }
}
