//! Exact counting, tensor norms, random matrices and a Strichartz probe.
//!
//! Frequencies satisfy `|n| ~ N` when `N/2 < |n| <= 2N`. Asymptotic windows of the form
//! `O(X^{a+})` are realized as `c * X^{a + eps}` with `c = 1` and `eps = 0.01` unless overridden.

pub mod counting;
pub mod divisors;
pub mod matrix;
pub mod strichartz;
pub mod suites;
pub mod tensor;

pub use counting::{count_high_high, count_high_high_with_cap, high_high_bound, DEFAULT_ENUMERATION_CAP};
pub use divisors::{count_gaussian_divisors, gaussian_divisors, GaussInt};
pub use matrix::{hs_vs_op, op_norm, schur_matrix_bound, HsVsOp, MatrixSchurBound, NormEstimate, SparseMatrix};
pub use strichartz::{strichartz_ratio, Coefficients, StrichartzProbe};
pub use tensor::{
    build_ball_block, build_tensor, random_matrix_opnorm, schur_bound, tensor_norm, BallPair, DyadicTensor, Partition,
    RandomMatrixStats, Slot, SparseTensor, TensorKind, TensorSpec,
};

use crate::spectral::FreqIndex;

/// Sign in front of the wave frequency in `|n1|^2 +- |n2| - |n|^2`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Sign {
    Plus,
    Minus,
}

impl Sign {
    pub fn value(self) -> f64 {
        match self {
            Sign::Plus => 1.0,
            Sign::Minus => -1.0,
        }
    }
}

/// `N/2 < |n| <= 2N`.
pub fn in_shell(n: FreqIndex, dyad: u32) -> bool {
    let r2 = n.norm_sq();
    let d = dyad as i64;
    4 * r2 > d * d && r2 <= 4 * d * d
}

/// Lattice points of the shell `N/2 < |n| <= 2N`, in lexicographic order.
pub fn shell_points(dyad: u32) -> Vec<FreqIndex> {
    let r = 2 * dyad as i32;
    let mut out = Vec::new();
    for x in -r..=r {
        for y in -r..=r {
            let n = FreqIndex::new(x, y);
            if in_shell(n, dyad) {
                out.push(n);
            }
        }
    }
    out
}

/// Nearest-rank quantile of an ascending slice.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let k = ((q * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    sorted[k - 1]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shell_convention() {
        assert!(!in_shell(FreqIndex::new(2, 0), 4));
        assert!(in_shell(FreqIndex::new(3, 0), 4));
        assert!(in_shell(FreqIndex::new(8, 0), 4));
        assert!(!in_shell(FreqIndex::new(8, 1), 4));
        assert!(!in_shell(FreqIndex::ZERO, 1));
        assert!(in_shell(FreqIndex::new(1, 1), 1));
        let pts = shell_points(4);
        assert_eq!(pts.len(), pts.iter().filter(|n| in_shell(**n, 4)).count());
        assert!(pts.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn quantiles() {
        let v: Vec<f64> = (1..=100).map(|i| i as f64).collect();
        assert_eq!(quantile(&v, 0.99), 99.0);
        assert_eq!(quantile(&v, 0.5), 50.0);
        assert_eq!(quantile(&v, 1.0), 100.0);
        assert_eq!(quantile(&v[..1], 0.99), 1.0);
    }
}
