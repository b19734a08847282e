use std::collections::HashSet;

use nalgebra::{Complex, DMatrix};
use proptest::prelude::*;
use zy_core::estimates::counting::count_high_high;
use zy_core::estimates::divisors::{count_gaussian_divisors, GaussInt};
use zy_core::estimates::matrix::{hs_vs_op, op_norm, schur_matrix_bound, SparseMatrix, POWER_TOL};
use zy_core::estimates::suites::random_sparse;
use zy_core::estimates::tensor::{
    random_matrix_opnorm_of, schur_bound, tensor_norm, Entry, Partition, Roles, Slot, SparseTensor,
};
use zy_core::estimates::Sign;
use zy_core::rng::{Channel, GaussianSampler};
use zy_core::spectral::FreqIndex;
use zy_core::Complex64;

fn dense(m: &SparseMatrix) -> DMatrix<Complex<f64>> {
    let d: Vec<Complex<f64>> = m.to_dense().iter().map(|z| Complex::new(z.re, z.im)).collect();
    DMatrix::from_row_slice(m.rows(), m.cols(), &d)
}

fn svd_norm(m: &SparseMatrix) -> f64 {
    if m.nnz() == 0 {
        return 0.0;
    }
    dense(m).singular_values().max()
}

/// Random tensor with indices in a small box, so unfoldings have many entries per row.
fn random_tensor(seed: u64, entries: usize, side: i32) -> SparseTensor {
    let mut s = GaussianSampler::new(seed, 0x7e).normals(Channel::Aux);
    let mut pick = |k: i32| ((s.uniform() * (2 * k + 1) as f64) as i32 - k, s.pair());
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for _ in 0..entries {
        let mut idx = [FreqIndex::ZERO; 3];
        for i in &mut idx {
            let (x, _) = pick(side);
            let (y, _) = pick(side);
            *i = FreqIndex::new(x, y);
        }
        let (_, (a, b)) = pick(0);
        if seen.insert(idx) {
            out.push(Entry { idx, value: Complex64::new(a, b) });
        }
    }
    SparseTensor::new(out)
}

/// `N/2 < |x| <= 2N` written out in integers.
fn shell(x: FreqIndex, d: u32) -> bool {
    let (r2, d2) = (x.norm_sq(), (d as i64).pow(2));
    d2 < 4 * r2 && r2 <= 4 * d2
}

/// Enumeration over `n2` instead of `n1`.
fn count_oracle(n: FreqIndex, n1: u32, n2: u32, m: f64, sign: Sign) -> u64 {
    let r = 2 * n2 as i32;
    let mut c = 0;
    for x in -r..=r {
        for y in -r..=r {
            let b = FreqIndex::new(x, y);
            let a = FreqIndex::new(n.x - x, n.y - y);
            if shell(b, n2) && shell(a, n1) {
                let s = if sign == Sign::Plus { 1.0 } else { -1.0 };
                let phi = a.norm_sq() as f64 + s * (n.norm_sq() as f64).sqrt() - b.norm_sq() as f64;
                if phi.abs() <= m {
                    c += 1;
                }
            }
        }
    }
    c
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 32, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn tensor_norms_match_dense_svd(seed in any::<u64>(), entries in 1usize..=1000, side in 1i32..4) {
        let h = random_tensor(seed, entries, side);
        for p in Partition::all() {
            let est = tensor_norm(&h, p);
            let exact = svd_norm(&h.unfold(p));
            prop_assert!((est.value - exact).abs() <= 1e-6 * exact, "{}: {} vs {exact}", p.name(), est.value);
            prop_assert!(est.lower <= exact * (1.0 + 1e-9) && exact <= est.upper * (1.0 + 1e-9));
        }
    }

    #[test]
    fn tensor_norm_invariants(seed in any::<u64>(), entries in 1usize..400, side in 1i32..4) {
        let h = random_tensor(seed, entries, side);
        for p in Partition::all() {
            let v = tensor_norm(&h, p).value;
            prop_assert!(v <= schur_bound(&h, p) * (1.0 + 1e-10));
            prop_assert!((v - tensor_norm(&h, p.dual()).value).abs() <= 1e-8 * v);
            prop_assert!(h.sup_entry() <= v * (1.0 + 1e-10));
        }
    }

    #[test]
    fn sparse_matrix_norms_match_dense_svd(seed in any::<u64>(), rows in 1usize..60, cols in 1usize..60, density in 0.02f64..0.6) {
        let m = random_sparse(rows, cols, density, &GaussianSampler::new(seed, 1), 0);
        let exact = svd_norm(&m);
        let est = op_norm(&m, POWER_TOL);
        prop_assert!((est.value - exact).abs() <= 1e-6 * exact.max(1e-300));
        let hs = hs_vs_op(&m);
        let d = dense(&m);
        let gram = &d * d.adjoint();
        prop_assert!((hs.hs_gram - gram.norm()).abs() <= 1e-10 * gram.norm().max(1e-300));
        prop_assert!(hs.holds(1e-10));
    }

    #[test]
    fn counts_match_enumeration(x in -16i32..=16, y in -16i32..=16, k in 0u32..3, m in 0.0f64..40.0, plus: bool) {
        let n1 = 4u32 << k;
        let n = FreqIndex::new(x, y);
        let sign = if plus { Sign::Plus } else { Sign::Minus };
        prop_assert_eq!(count_high_high(n, n1, n1, m, sign).unwrap(), count_oracle(n, n1, n1, m, sign));
    }

    #[test]
    fn gaussian_divisor_counts_match_brute_force(re in -30i64..=30, im in -30i64..=30, bm in 0.0f64..40.0, bn in 0.0f64..40.0) {
        prop_assume!(re != 0 || im != 0);
        let norm = re * re + im * im;
        // every divisor has norm at most N(m)
        let r = (norm as f64).sqrt().ceil() as i64;
        let mut brute = 0;
        for a_re in -r..=r {
            for a_im in -r..=r {
                let an = a_re * a_re + a_im * a_im;
                if an == 0 {
                    continue;
                }
                // b = m conj(a) / |a|^2
                let (br, bi) = (re * a_re + im * a_im, im * a_re - re * a_im);
                if br % an == 0 && bi % an == 0 {
                    let (br, bi) = (br / an, bi / an);
                    let ok_a = ((a_re * a_re + a_im * a_im) as f64).sqrt() <= bm;
                    let ok_b = ((br * br + bi * bi) as f64).sqrt() <= bn;
                    if ok_a && ok_b {
                        brute += 1;
                    }
                }
            }
        }
        let zero = Complex64::new(0.0, 0.0);
        prop_assert_eq!(count_gaussian_divisors(GaussInt::new(re, im), zero, zero, bm, bn).unwrap(), brute);
    }
}

#[test]
fn divisor_reference_cases() {
    let zero = Complex64::new(0.0, 0.0);
    assert_eq!(count_gaussian_divisors(GaussInt::new(1, 0), zero, zero, 1.0, 1.0).unwrap(), 4);
    assert_eq!(count_gaussian_divisors(GaussInt::new(2, 0), zero, zero, 2.0, 2.0).unwrap(), 12);
    assert_eq!(count_gaussian_divisors(GaussInt::new(2, 0), Complex64::new(10.0, 0.0), zero, 2.0, 2.0).unwrap(), 0);
}

#[test]
fn operator_norm_bound_on_random_matrices() {
    let s = GaussianSampler::new(1, 0x24);
    let mut worst: f64 = 0.0;
    for trial in 0..100 {
        let m = random_sparse(200, 200, 0.05, &s, trial);
        let b = schur_matrix_bound(&m);
        let exact = svd_norm(&m).powi(2);
        assert!((b.norm_sq - exact).abs() <= 1e-6 * exact);
        assert!(b.rhs >= exact, "trial {trial}: {} < {exact}", b.rhs);
        worst = worst.max(exact / b.rhs);
    }
    println!("largest ||s||^2 / rhs over 100 trials: {worst:.3}");
}

#[test]
fn single_entry_norm_follows_the_modulus_law() {
    let idx = [FreqIndex::new(2, 1), FreqIndex::new(-1, 3), FreqIndex::new(3, -2)];
    let weight = 0.37;
    let h = SparseTensor::new(vec![Entry { idx, value: Complex64::new(weight, 0.0) }]);
    let roles = Roles { input: Slot::N1, output: Slot::N, contracted: Slot::N2 };
    let stats = random_matrix_opnorm_of(&h, roles, 400, GaussianSampler::new(2, 0x55)).unwrap();
    let mut r: Vec<f64> = stats.norms.iter().map(|v| v / weight).collect();
    r.sort_by(f64::total_cmp);
    let n = r.len() as f64;
    // |g| with E|g|^2 = 1 has CDF 1 - exp(-r^2)
    let d = r
        .iter()
        .enumerate()
        .map(|(i, x)| {
            let f = 1.0 - (-x * x).exp();
            (f - i as f64 / n).abs().max((f - (i + 1) as f64 / n).abs())
        })
        .fold(0.0, f64::max);
    let critical = 1.358 / n.sqrt();
    println!("KS statistic {d:.4}, 5% critical value {critical:.4}");
    assert!(d < critical);
}
