use rayon::prelude::*;
use zy_core::random_fields::{
    neg_sobolev_sup_norm, potential_qn, sample_schrodinger, sample_state, sample_wave_position, sigma_n, sup_norm_grid, wick_mass,
};
use zy_core::rng::{Channel, GaussianSampler};
use zy_core::spectral::{Disk, FreqIndex, SpectralField};
use zy_core::Complex64;

struct Moments {
    mean: f64,
    var: f64,
    m4c: f64,
    count: f64,
}

fn moments(xs: &[f64]) -> Moments {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let m4c = xs.iter().map(|x| (x - mean).powi(4)).sum::<f64>() / n;
    Moments { mean, var, m4c, count: n }
}

impl Moments {
    fn mean_stderr(&self) -> f64 {
        (self.var / self.count).sqrt()
    }

    /// Large-sample standard error of the sample variance.
    fn var_stderr(&self) -> f64 {
        ((self.m4c - self.var * self.var) / self.count).sqrt()
    }
}

/// `sum_{|n| <= N} <n>^{-p}` by a loop over the square.
fn bracket_sum(n: u32, p: f64) -> f64 {
    let r = n as i64;
    let mut s = 0.0;
    for x in -r..=r {
        for y in -r..=r {
            if x * x + y * y <= r * r {
                s += (1.0 + (x * x + y * y) as f64).powf(-p / 2.0);
            }
        }
    }
    s
}

fn wick_masses(n: u32, m: usize, seed: u64) -> Vec<f64> {
    let base = GaussianSampler::new(seed, 11);
    (0..m as u64).into_par_iter().map(|i| wick_mass(&sample_schrodinger(&base.fork(i), n), n)).collect()
}

#[test]
fn sigma_exact_values_and_log_growth() {
    assert_eq!(sigma_n(0), 1.0);
    assert_eq!(sigma_n(1), 3.0);
    assert!((sigma_n(2) - 77.0 / 15.0).abs() < 1e-15);
    for n in [3, 10, 50] {
        assert!((sigma_n(n) - bracket_sum(n, 2.0)).abs() < 1e-11 * sigma_n(n));
    }
    let r = sigma_n(4096) / (4096f64).ln();
    println!("sigma_4096 / log 4096 = {r:.5} (2 pi = {:.5})", 2.0 * std::f64::consts::PI);
    assert!((r / (2.0 * std::f64::consts::PI) - 1.0).abs() < 0.05);
}

#[test]
fn wick_mass_mean_and_variance() {
    for n in [4u32, 16] {
        let mo = moments(&wick_masses(n, 100_000, 3));
        let want = bracket_sum(n, 4.0);
        println!("N={n}: mean {:.4e} +- {:.1e}, var {:.5} +- {:.1e} vs {want:.5}", mo.mean, mo.mean_stderr(), mo.var, mo.var_stderr());
        assert!(mo.mean.abs() < 3.0 * mo.mean_stderr());
        assert!((mo.var - want).abs() < 3.0 * mo.var_stderr());
    }
}

#[test]
fn mass_mean_is_sigma() {
    let n = 8;
    let base = GaussianSampler::new(4, 12);
    let masses: Vec<f64> =
        (0..20_000u64).into_par_iter().map(|i| sample_schrodinger(&base.fork(i), n).coeffs().iter().map(|c| c.norm_sqr()).sum()).collect();
    let mo = moments(&masses);
    assert!((mo.mean - sigma_n(n)).abs() < 3.0 * mo.mean_stderr(), "{} vs {}", mo.mean, sigma_n(n));
}

#[test]
fn potential_has_mean_zero_for_independent_fields() {
    let n = 8;
    let base = GaussianSampler::new(5, 13);
    let q: Vec<f64> = (0..20_000u64)
        .into_par_iter()
        .map(|i| {
            let s = base.fork(i);
            potential_qn(&sample_schrodinger(&s, n), &sample_wave_position(&s, n, 0.5), n).unwrap()
        })
        .collect();
    let mo = moments(&q);
    println!("E Q_N = {:.4e} +- {:.1e}", mo.mean, mo.mean_stderr());
    assert!(mo.mean.abs() < 3.0 * mo.mean_stderr());
}

#[test]
fn quadratic_chaos_hypercontractivity() {
    let f = wick_masses(8, 100_000, 6);
    let l2 = (f.iter().map(|x| x * x).sum::<f64>() / f.len() as f64).sqrt();
    let l4 = (f.iter().map(|x| x.powi(4)).sum::<f64>() / f.len() as f64).powf(0.25);
    println!("L4/L2 = {:.4}", l4 / l2);
    // (p - 1)^{k/2} with p = 4, k = 2
    assert!(l4 / l2 <= 3.0);
}

#[test]
fn max_of_gaussians_tail() {
    let n = 32u32;
    let modes = Disk::get(n).len() as f64;
    let trials = 4000u64;
    let base = GaussianSampler::new(7, 14);
    let maxima: Vec<f64> = (0..trials)
        .into_par_iter()
        .map(|i| {
            let mut st = base.fork(i).normals(Channel::Aux);
            (0..modes as usize)
                .map(|_| {
                    let (a, b) = st.pair();
                    // |g| with E|g|^2 = 1, so P(|g| > t) = exp(-t^2)
                    ((a * a + b * b) / 2.0).sqrt()
                })
                .fold(0.0, f64::max)
        })
        .collect();
    let mut prev = 1.0;
    for t in [3.0f64, 4.0, 5.0] {
        let p = maxima.iter().filter(|m| **m > t).count() as f64 / trials as f64;
        let union = (modes * (-t * t).exp()).min(1.0);
        let se = (union * (1.0 - union) / trials as f64).sqrt();
        println!("t={t}: P(max > t) = {p:.4e}, union bound {union:.4e}");
        assert!(p <= union + 3.0 * se + 1.0 / trials as f64);
        assert!(p <= prev);
        prev = p;
    }
}

#[test]
fn sampling_is_reproducible_and_ball_consistent() {
    let s = GaussianSampler::new(8, 3);
    assert_eq!(sample_state(&s, 6, 0.5), sample_state(&s, 6, 0.5));
    let small = sample_schrodinger(&s, 3);
    let big = sample_schrodinger(&s, 9);
    for (n, c) in small.iter() {
        assert_eq!(c, big.get(n));
    }
    assert_ne!(sample_schrodinger(&GaussianSampler::new(9, 3), 3), small);
}

#[test]
fn neg_sobolev_sup_norm_examples_and_trend() {
    let c = Complex64::new(0.3, -0.4);
    let f = SpectralField::delta(0, false, FreqIndex::ZERO, c);
    assert!((neg_sobolev_sup_norm(&f, 0.5, 4).unwrap() - 0.5).abs() < 1e-14);
    let e = SpectralField::delta(1, false, FreqIndex::new(1, 0), Complex64::new(1.0, 0.0));
    assert!((neg_sobolev_sup_norm(&e, 1.0, 8).unwrap() - 0.5f64.sqrt()).abs() < 1e-14);
    assert!((neg_sobolev_sup_norm(&e, 2.0, 8).unwrap() - 0.5).abs() < 1e-14);

    let median = |n: u32| {
        let mut v: Vec<f64> = (0..9u64)
            .map(|i| neg_sobolev_sup_norm(&sample_schrodinger(&GaussianSampler::new(10, i), n), 0.1, sup_norm_grid(n)).unwrap())
            .collect();
        v.sort_by(f64::total_cmp);
        v[4]
    };
    let m: Vec<f64> = [16u32, 64, 256].iter().map(|n| median(*n)).collect();
    println!("sup-norm medians at N = 16, 64, 256: {m:?}");
    // no more than logarithmic growth: log 256 / log 16 = 2
    assert!(m[2] / m[0] <= 2.0);
}
