//! Gaussian reference fields and their Wick-renormalized functionals.

use num_complex::Complex64;

use crate::error::{Result, ZyError};
use crate::grid::{fast_size, grid_values, with_grid};
use crate::rng::{Channel, GaussianSampler};
use crate::spectral::{correlate_direct, Disk, SpectralField};

/// Schrodinger field, wave field and wave velocity at a common cutoff.
#[derive(Clone, Debug, PartialEq)]
pub struct State {
    pub u: SpectralField,
    pub w: SpectralField,
    pub v: SpectralField,
    pub gamma: f64,
}

impl State {
    pub fn new(u: SpectralField, w: SpectralField, v: SpectralField, gamma: f64) -> Result<Self> {
        if u.cutoff() != w.cutoff() || u.cutoff() != v.cutoff() {
            return Err(ZyError::Invalid("fields of a state must share the cutoff".into()));
        }
        if !w.hermitian() || !v.hermitian() {
            return Err(ZyError::Invalid("wave fields must be hermitian".into()));
        }
        if !(0.0..=1.0).contains(&gamma) {
            return Err(ZyError::Invalid(format!("gamma = {gamma} outside [0, 1]")));
        }
        Ok(State { u, w, v, gamma })
    }

    pub fn zeros(cutoff: u32, gamma: f64) -> Self {
        State {
            u: SpectralField::zeros(cutoff, false),
            w: SpectralField::zeros(cutoff, true),
            v: SpectralField::zeros(cutoff, true),
            gamma,
        }
    }

    pub fn cutoff(&self) -> u32 {
        self.u.cutoff()
    }
}

/// Fills `f` with `weight(n) * g_n`, where `g_n` is a complex normal with `E|g|^2 = 1`,
/// drawn independently for every mode of the ball.
fn fill_complex(sampler: &GaussianSampler, channel: Channel, f: &mut SpectralField, weight: impl Fn(f64) -> f64) {
    let disk = f.disk().clone();
    let mut st = sampler.normals(channel);
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let coeffs = f.coeffs_mut();
    for &k in disk.shell_order() {
        let (a, b) = st.pair();
        let n = disk.modes()[k as usize];
        coeffs[k as usize] = Complex64::new(a * s, b * s) * weight(n.norm_sq() as f64);
    }
}

/// Hermitian version: draws on the half lattice, real unit variance at the origin.
fn fill_hermitian(sampler: &GaussianSampler, channel: Channel, f: &mut SpectralField, weight: impl Fn(f64) -> f64) {
    let disk = f.disk().clone();
    let mut st = sampler.normals(channel);
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let coeffs = f.coeffs_mut();
    for &k in disk.shell_order() {
        let n = disk.modes()[k as usize];
        if !n.in_half_lattice() {
            continue;
        }
        let (a, b) = st.pair();
        let wgt = weight(n.norm_sq() as f64);
        let k = k as usize;
        if n.x == 0 && n.y == 0 {
            coeffs[k] = Complex64::new(a * wgt, 0.0);
        } else {
            let z = Complex64::new(a * s, b * s) * wgt;
            coeffs[k] = z;
            coeffs[disk.mirror(k)] = z.conj();
        }
    }
}

/// `u(n) = g_n / <n>` on `|n| <= N`.
pub fn sample_schrodinger(sampler: &GaussianSampler, n: u32) -> SpectralField {
    let mut u = SpectralField::zeros(n, false);
    fill_complex(sampler, Channel::Schrodinger, &mut u, |r2| 1.0 / (1.0 + r2).sqrt());
    u
}

/// `(w0, w1)` with `w0(n) = h_n <n>^{gamma-1}` and `w1(n) = l_n <n>^gamma`, both real-valued.
pub fn sample_wave_pair(sampler: &GaussianSampler, n: u32, gamma: f64) -> (SpectralField, SpectralField) {
    let mut w0 = SpectralField::zeros(n, true);
    let mut w1 = SpectralField::zeros(n, true);
    fill_hermitian(sampler, Channel::WavePosition, &mut w0, |r2| (1.0 + r2).powf(0.5 * (gamma - 1.0)));
    fill_hermitian(sampler, Channel::WaveVelocity, &mut w1, |r2| (1.0 + r2).powf(0.5 * gamma));
    (w0, w1)
}

/// Only the wave position; same draws as the first component of `sample_wave_pair`.
pub fn sample_wave_position(sampler: &GaussianSampler, n: u32, gamma: f64) -> SpectralField {
    let mut w0 = SpectralField::zeros(n, true);
    fill_hermitian(sampler, Channel::WavePosition, &mut w0, |r2| (1.0 + r2).powf(0.5 * (gamma - 1.0)));
    w0
}

/// Unit-variance hermitian white noise `h_n` (weight 1 at every mode).
pub fn sample_wave_noise(sampler: &GaussianSampler, n: u32) -> SpectralField {
    let mut h = SpectralField::zeros(n, true);
    fill_hermitian(sampler, Channel::WavePosition, &mut h, |_| 1.0);
    h
}

/// A draw of the full Gaussian reference `mu x mu_{1-gamma} x mu_{-gamma}`.
pub fn sample_state(sampler: &GaussianSampler, n: u32, gamma: f64) -> State {
    let u = sample_schrodinger(sampler, n);
    let (w, v) = sample_wave_pair(sampler, n, gamma);
    State { u, w, v, gamma }
}

/// `sigma_N = sum_{|n| <= N} 1 / <n>^2`, summed with Neumaier compensation.
pub fn sigma_n(n: u32) -> f64 {
    let r = n as i64;
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    for x in -r..=r {
        let ymax = isqrt(r * r - x * x);
        for y in -ymax..=ymax {
            let t = 1.0 / (1 + x * x + y * y) as f64;
            let s = sum + t;
            comp += if sum.abs() >= t { (sum - s) + t } else { (t - s) + sum };
            sum = s;
        }
    }
    sum + comp
}

pub(crate) fn isqrt(v: i64) -> i64 {
    let mut y = (v as f64).sqrt() as i64;
    while y * y > v {
        y -= 1;
    }
    while (y + 1) * (y + 1) <= v {
        y += 1;
    }
    y
}

/// `sum_{|n| <= N} <n>^{-p}`.
pub fn bracket_power_sum(n: u32, p: f64) -> f64 {
    Disk::get(n).modes().iter().map(|m| m.bracket().powf(-p)).sum()
}

/// `int :|u_N|^2: dx = sum_{|n| <= N} |u(n)|^2 - sigma_N`.
pub fn wick_mass(u: &SpectralField, n: u32) -> f64 {
    wick_mass_with_sigma(u, n, sigma_n(n))
}

pub fn wick_mass_with_sigma(u: &SpectralField, n: u32, sigma: f64) -> f64 {
    let mass: f64 = u.iter().filter(|(m, _)| m.in_ball(n)).map(|(_, c)| c.norm_sqr()).sum();
    mass - sigma
}

/// Fourier coefficients of `|pi_N u|^2` on the ball of radius `m_out`, exact.
pub fn modulus_square(u: &SpectralField, n: u32, m_out: u32) -> SpectralField {
    let un = crate::spectral::project_dirichlet(u, n);
    let pairs = (un.disk().len() as f64).powi(2);
    let mut rho = if pairs < 4.0e4 {
        correlate_direct(&un, &un, m_out)
    } else {
        let g = fast_size((2 * un.cutoff() + m_out + 1) as usize);
        with_grid(g, |grid| {
            let mut buf = grid.new_buffer();
            grid.synthesize(&un, &mut buf);
            for z in buf.iter_mut() {
                *z = Complex64::new(z.norm_sqr(), 0.0);
            }
            let mut out = SpectralField::zeros(m_out, false);
            grid.analyze(&mut buf, &mut out);
            out
        })
    };
    rho.symmetrize();
    let mass: f64 = un.coeffs().iter().map(|c| c.norm_sqr()).sum();
    if let Some(k) = rho.disk().position(crate::spectral::FreqIndex::ZERO) {
        rho.coeffs_mut()[k] = Complex64::new(mass, 0.0);
    }
    rho
}

/// `:|u_N|^2:` with output cutoff `2N`.
pub fn wick_square(u: &SpectralField, n: u32) -> SpectralField {
    let mut rho = modulus_square(u, n, 2 * n);
    let k = rho.disk().position(crate::spectral::FreqIndex::ZERO).unwrap();
    rho.coeffs_mut()[k] -= Complex64::new(sigma_n(n), 0.0);
    rho
}

/// `Q_N(u, w) = 1/2 int :|u_N|^2: w dx`.
pub fn potential_qn(u: &SpectralField, w: &SpectralField, n: u32) -> Result<f64> {
    if !w.hermitian() {
        return Err(ZyError::Invalid("potential requires a real-valued wave field".into()));
    }
    let m = w.cutoff().min(2 * n);
    let mut rho = modulus_square(u, n, m);
    let k = rho.disk().position(crate::spectral::FreqIndex::ZERO).unwrap();
    rho.coeffs_mut()[k] -= Complex64::new(sigma_n(n), 0.0);
    Ok(0.5 * crate::spectral::inner(&rho, w).re)
}

/// Grid surrogate of `||<D>^{-eps} f||_{L^inf}` on a `G x G` grid.
pub fn neg_sobolev_sup_norm(f: &SpectralField, eps: f64, g: usize) -> Result<f64> {
    if eps <= 0.0 {
        return Err(ZyError::Invalid("eps must be positive".into()));
    }
    let smoothed = f.bessel(-eps);
    Ok(grid_values(&smoothed, g)?.iter().map(|z| z.norm()).fold(0.0, f64::max))
}

/// Default grid for the sup-norm surrogate.
pub fn sup_norm_grid(cutoff: u32) -> usize {
    (4 * cutoff as usize).max(2 * cutoff as usize + 2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::FreqIndex;

    #[test]
    fn sigma_small_values() {
        assert_eq!(sigma_n(0), 1.0);
        assert!((sigma_n(1) - 3.0).abs() < 1e-15);
        assert!((sigma_n(2) - 77.0 / 15.0).abs() < 1e-14);
        assert!((sigma_n(9) - bracket_power_sum(9, 2.0)).abs() < 1e-12);
    }

    #[test]
    fn wick_zero_field() {
        let u = SpectralField::zeros(3, false);
        let ws = wick_square(&u, 3);
        assert_eq!(ws.cutoff(), 6);
        assert!((ws.get(FreqIndex::ZERO).re + sigma_n(3)).abs() < 1e-14);
        assert!(ws.iter().filter(|(n, _)| *n != FreqIndex::ZERO).all(|(_, c)| c.norm() == 0.0));
        let one = SpectralField::delta(0, false, FreqIndex::ZERO, Complex64::new(1.0, 0.0));
        assert_eq!(wick_mass(&one, 0), 0.0);
        assert_eq!(wick_square(&one, 0).get(FreqIndex::ZERO).re, 0.0);
    }

    #[test]
    fn potential_zero_fields() {
        let u = SpectralField::zeros(4, false);
        let w = SpectralField::delta(4, true, FreqIndex::ZERO, Complex64::new(2.0, 0.0));
        assert!((potential_qn(&u, &w, 4).unwrap() + sigma_n(4)).abs() < 1e-13);
        let u = sample_schrodinger(&GaussianSampler::new(1, 2), 4);
        assert_eq!(potential_qn(&u, &SpectralField::zeros(4, true), 4).unwrap(), 0.0);
        assert!(potential_qn(&u, &SpectralField::zeros(4, false), 4).is_err());
    }

    #[test]
    fn wave_symmetry_and_gamma_one() {
        let s = GaussianSampler::new(5, 9);
        let (w0, w1) = sample_wave_pair(&s, 6, 1.0);
        w0.check_hermitian(0.0).unwrap();
        w1.check_hermitian(0.0).unwrap();
        assert_eq!(w0.get(FreqIndex::ZERO).im, 0.0);
        let h = sample_wave_noise(&s, 6);
        assert_eq!(h, w0);
        assert_eq!(sample_wave_position(&s, 6, 1.0), w0);
    }

    #[test]
    fn balls_share_draws() {
        let s = GaussianSampler::new(11, 4);
        let big = sample_schrodinger(&s, 10);
        let small = sample_schrodinger(&s, 4);
        assert_eq!(crate::spectral::project_dirichlet(&big, 4), small);
        let (wb, _) = sample_wave_pair(&s, 10, 0.3);
        let (ws, _) = sample_wave_pair(&s, 4, 0.3);
        assert_eq!(crate::spectral::project_dirichlet(&wb, 4), ws);
    }

    #[test]
    fn sup_norm_examples() {
        let c = SpectralField::delta(2, false, FreqIndex::ZERO, Complex64::new(0.0, -3.0));
        assert!((neg_sobolev_sup_norm(&c, 0.5, 8).unwrap() - 3.0).abs() < 1e-14);
        let d = SpectralField::delta(2, false, FreqIndex::new(1, 0), Complex64::new(1.0, 0.0));
        assert!((neg_sobolev_sup_norm(&d, 1.0, 8).unwrap() - 0.5f64.sqrt()).abs() < 1e-14);
        assert!((neg_sobolev_sup_norm(&d, 2.0, 8).unwrap() - 0.5).abs() < 1e-14);
    }
}
