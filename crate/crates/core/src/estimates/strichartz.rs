//! `L^4([0,1] x T^2)` norm of a linear Schrodinger wave over its `l^2` coefficient norm.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Result, ZyError};
use crate::grid::grid_values;
use crate::rng::{Channel, GaussianSampler};
use crate::spectral::{FreqIndex, SpectralField};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Coefficients {
    Ones,
    /// Standard complex Gaussians from the given seed.
    Random { seed: u64 },
}

/// Frequencies `|n - center| <= radius`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StrichartzProbe {
    pub center: FreqIndex,
    pub radius: u32,
    pub coeffs: Coefficients,
    /// Trapezoid intervals on `[0, 1]`.
    pub t_steps: usize,
    /// Spatial grid size; `|u|^4` is integrated exactly when `G >= 4 radius + 1`.
    pub grid: usize,
}

impl StrichartzProbe {
    pub fn new(radius: u32, coeffs: Coefficients) -> Self {
        let t_steps = (2 * radius as usize * radius as usize).max(64);
        StrichartzProbe { center: FreqIndex::ZERO, radius, coeffs, t_steps, grid: 4 * radius as usize + 2 }
    }

    fn coefficients(&self) -> SpectralField {
        match self.coeffs {
            Coefficients::Ones => SpectralField::from_fn(self.radius, false, |_| Complex64::new(1.0, 0.0)),
            Coefficients::Random { seed } => {
                let mut s = GaussianSampler::new(seed, 0).normals(Channel::Aux);
                SpectralField::from_fn(self.radius, false, |_| {
                    let (a, b) = s.pair();
                    Complex64::new(a, b) * std::f64::consts::FRAC_1_SQRT_2
                })
            }
        }
    }
}

/// `||sum a_n e^{i(n.x + |n|^2 t)}||_{L^4} / ||a||_{l^2}` on the normalized measure of `[0,1] x T^2`.
pub fn strichartz_ratio(p: &StrichartzProbe) -> Result<f64> {
    let a = p.coefficients();
    // Shifting the ball to the origin only multiplies the wave by a unimodular factor in x.
    let modes: Vec<(FreqIndex, f64, Complex64)> =
        a.iter().map(|(k, c)| (k, k.add(p.center).norm_sq() as f64, c)).collect();
    wave_l4_ratio(&modes, p.t_steps, p.grid)
}

/// Same ratio for explicit `(spatial mode k, temporal frequency w, a)` triples, the wave being
/// `sum a e^{i(k.x + w t)}`.
pub fn wave_l4_ratio(modes: &[(FreqIndex, f64, Complex64)], t_steps: usize, grid: usize) -> Result<f64> {
    if t_steps < 64 {
        return Err(ZyError::Invalid(format!("need at least 64 time steps, got {t_steps}")));
    }
    let r = modes.iter().map(|m| m.0.norm()).fold(0.0, f64::max).ceil() as usize;
    if grid < (4 * r + 1).max(2 * r + 2) {
        return Err(ZyError::Invalid(format!("grid {grid} aliases |u|^4 at radius {r}")));
    }
    let l2: f64 = modes.iter().map(|m| m.2.norm_sqr()).sum();
    if l2 == 0.0 {
        return Err(ZyError::Invalid("all coefficients vanish".into()));
    }
    let h = 1.0 / t_steps as f64;
    let g2 = (grid * grid) as f64;
    let quartic: Vec<f64> = (0..=t_steps)
        .into_par_iter()
        .map(|j| {
            let t = j as f64 * h;
            let mut f = SpectralField::zeros(r as u32, false);
            for &(k, w, c) in modes {
                f.set(k, f.get(k) + c * Complex64::from_polar(1.0, w * t));
            }
            let v = grid_values(&f, grid).expect("grid checked");
            v.iter().map(|z| z.norm_sqr() * z.norm_sqr()).sum::<f64>() / g2
        })
        .collect();
    let n = quartic.len();
    let integral = h * (quartic[1..n - 1].iter().sum::<f64>() + 0.5 * (quartic[0] + quartic[n - 1]));
    Ok(integral.powf(0.25) / l2.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_mode_is_one() {
        for center in [FreqIndex::ZERO, FreqIndex::new(3, -2)] {
            let p = StrichartzProbe { center, radius: 0, coeffs: Coefficients::Ones, t_steps: 64, grid: 2 };
            assert!((strichartz_ratio(&p).unwrap() - 1.0).abs() < 1e-12);
            let p = StrichartzProbe { coeffs: Coefficients::Random { seed: 3 }, grid: 8, ..p };
            assert!((strichartz_ratio(&p).unwrap() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn two_modes_closed_form() {
        // |u|^4 averages to 3/2 in x at every t when the modes differ.
        let a = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        for (m1, m2) in [((0, 0), (1, 0)), ((2, 1), (-1, 3))] {
            let (m1, m2) = (FreqIndex::from(m1), FreqIndex::from(m2));
            let modes = [(m1, m1.norm_sq() as f64, a), (m2, m2.norm_sq() as f64, a)];
            let v = wave_l4_ratio(&modes, 64, 32).unwrap();
            assert!((v - 1.5f64.powf(0.25)).abs() < 1e-6, "{v}");
        }
    }

    #[test]
    fn rejects_bad_grids() {
        let p = StrichartzProbe::new(4, Coefficients::Ones);
        assert!(strichartz_ratio(&StrichartzProbe { grid: 16, ..p }).is_err());
        assert!(strichartz_ratio(&StrichartzProbe { t_steps: 63, ..p }).is_err());
        assert!(strichartz_ratio(&p).is_ok());
    }

    #[test]
    fn ratio_at_least_one() {
        // Holder on a probability space: L^4 >= L^2 = l^2.
        for r in [1, 2, 4] {
            let v = strichartz_ratio(&StrichartzProbe::new(r, Coefficients::Random { seed: 1 })).unwrap();
            assert!(v >= 1.0 - 1e-3, "{v}");
        }
    }
}
