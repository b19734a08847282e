use proptest::prelude::*;
use zy_core::grid::{from_grid_values, grid_values};
use zy_core::random_fields::{sample_schrodinger, sample_wave_noise};
use zy_core::rng::GaussianSampler;
use zy_core::spectral::{
    convolve_truncated, dyadic_shell_of, in_dyadic_shell, inner, is_dyadic, project_dirichlet, sobolev_norm_sq, Disk, FreqIndex,
    SpectralField,
};
use zy_core::Complex64;

fn field(seed: u64, n: u32, hermitian: bool) -> SpectralField {
    let s = GaussianSampler::new(seed, 77);
    if hermitian {
        sample_wave_noise(&s, n)
    } else {
        sample_schrodinger(&s, n)
    }
}

/// Plain double loop over both balls. The output is never flagged hermitian, so `set` touches
/// one coefficient only.
fn convolve_oracle(f: &SpectralField, g: &SpectralField, n_out: u32) -> SpectralField {
    let mut out = SpectralField::zeros(n_out, false);
    for (a, fa) in f.iter() {
        for (b, gb) in g.iter() {
            let c = a.add(b);
            if c.in_ball(n_out) {
                out.set(c, out.get(c) + fa * gb);
            }
        }
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 48, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn projection_idempotent_and_self_adjoint(seed in any::<u64>(), n in 0u32..7, cut in 0u32..9) {
        let f = field(seed, n, false);
        let g = field(seed ^ 1, 8, false);
        let p = project_dirichlet(&f, cut);
        prop_assert_eq!(project_dirichlet(&p, cut), p.clone());
        let lhs = inner(&project_dirichlet(&f, cut), &g);
        let rhs = inner(&f, &project_dirichlet(&g, cut));
        prop_assert!((lhs - rhs).norm() <= 1e-13 * (1.0 + lhs.norm()));
    }

    #[test]
    fn convolution_matches_double_loop(seed in any::<u64>(), nf in 0u32..5, ng in 0u32..5, n_out in 0u32..9, hf: bool, hg: bool) {
        let f = field(seed, nf, hf);
        let g = field(seed.wrapping_add(9), ng, hg);
        let fast = convolve_truncated(&f, &g, n_out);
        let slow = convolve_oracle(&f, &g, n_out);
        let scale = slow.coeffs().iter().map(|c| c.norm()).fold(1e-300, f64::max);
        let diff = fast.coeffs().iter().zip(slow.coeffs()).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        prop_assert!(diff <= 1e-12 * scale, "{}", diff / scale);
        if hf && hg {
            prop_assert!(fast.check_hermitian(1e-12 * scale).is_ok());
        }
    }

    #[test]
    fn grid_round_trip(seed in any::<u64>(), n in 0u32..9, extra in 0usize..6, h: bool) {
        let f = field(seed, n, h);
        let g = 2 * n as usize + 2 + extra;
        let vals = grid_values(&f, g).unwrap();
        let back = from_grid_values(&vals, g, n, h).unwrap();
        let scale = f.coeffs().iter().map(|c| c.norm()).fold(1e-300, f64::max);
        prop_assert!(back.max_abs_diff(&f) < 1e-12 * scale);
    }

    #[test]
    fn sobolev_norm_is_a_weighted_sum(seed in any::<u64>(), n in 0u32..7, s in -2.0f64..2.0) {
        let f = field(seed, n, false);
        let direct: f64 = f.iter().map(|(m, c)| (1.0 + m.norm_sq() as f64).powf(s) * c.norm_sqr()).sum();
        let v = sobolev_norm_sq(&f, s);
        prop_assert!(v >= 0.0);
        prop_assert!((v - direct).abs() <= 1e-12 * direct.max(1e-300));
    }

    #[test]
    fn every_frequency_has_exactly_one_shell(x in -300i32..300, y in -300i32..300) {
        let n = FreqIndex::new(x, y);
        let hits: Vec<u32> = (0..12).map(|k| 1u32 << k).filter(|d| in_dyadic_shell(n, *d)).collect();
        prop_assert_eq!(hits.len(), 1);
        prop_assert_eq!(hits[0], dyadic_shell_of(n));
        prop_assert!(is_dyadic(hits[0]));
    }
}

#[test]
fn grid_too_small_is_rejected() {
    let f = field(1, 4, false);
    assert!(grid_values(&f, 9).is_err());
    assert!(grid_values(&f, 10).is_ok());
}

#[test]
fn single_exponential_on_the_grid() {
    let f = SpectralField::delta(1, false, FreqIndex::new(1, 0), Complex64::new(1.0, 0.0));
    let vals = grid_values(&f, 8).unwrap();
    for j1 in 0..8 {
        let want = Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI * j1 as f64 / 8.0);
        for j2 in 0..8 {
            assert!((vals[j1 * 8 + j2] - want).norm() < 1e-13, "({j1},{j2})");
        }
    }
}

#[test]
fn ball_sizes_match_lattice_count() {
    for n in [0u32, 1, 2, 5, 10, 33] {
        let r = n as i64;
        let count = (-r..=r).flat_map(|x| (-r..=r).map(move |y| (x, y))).filter(|(x, y)| x * x + y * y <= r * r).count();
        assert_eq!(Disk::get(n).len(), count, "N = {n}");
    }
}
