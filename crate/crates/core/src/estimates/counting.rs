//! High-high low-modulation lattice counts.

use crate::error::{Result, ZyError};
use crate::spectral::{dyadic_shell_of, FreqIndex};

use super::{in_shell, Sign};

/// Largest number of candidate points a single count may visit.
pub const DEFAULT_ENUMERATION_CAP: u64 = 1 << 26;

/// `#{n1 : ||n1|^2 +- |n| - |n2|^2| <= M, n1 + n2 = n, |n1| ~ N1, |n2| ~ N2}`.
pub fn count_high_high(n: FreqIndex, n1: u32, n2: u32, m: f64, sign: Sign) -> Result<u64> {
    count_high_high_with_cap(n, n1, n2, m, sign, DEFAULT_ENUMERATION_CAP)
}

pub fn count_high_high_with_cap(n: FreqIndex, n1: u32, n2: u32, m: f64, sign: Sign, cap: u64) -> Result<u64> {
    if n1 == 0 || n2 == 0 || !m.is_finite() || m < 0.0 {
        return Err(ZyError::Invalid("shells must be positive and M finite and nonnegative".into()));
    }
    let r = 2 * n1 as i64;
    let side = (2 * r + 1) as u64;
    if side.saturating_mul(side) > cap {
        return Err(ZyError::Budget(format!("N1 = {n1} needs {} points, cap is {cap}", side * side)));
    }
    let r = r as i32;
    let shift = sign.value() * n.norm();
    let mut count = 0u64;
    for x in -r..=r {
        for y in -r..=r {
            let a = FreqIndex::new(x, y);
            if !in_shell(a, n1) {
                continue;
            }
            let b = n.sub(a);
            if !in_shell(b, n2) {
                continue;
            }
            let phi = (a.norm_sq() - b.norm_sq()) as f64 + shift;
            if phi.abs() <= m {
                count += 1;
            }
        }
    }
    Ok(count)
}

/// `(M/N + 1) N1` with `N` the dyadic shell of `n`.
pub fn high_high_bound(n: FreqIndex, n1: u32, m: f64) -> f64 {
    let dyad = dyadic_shell_of(n) as f64;
    (m / dyad + 1.0) * n1 as f64
}
