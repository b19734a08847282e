//! Physical-grid transforms on T^2 built on rustfft.
//!
//! Internally a grid buffer is stored with the second coordinate as the slow index
//! (`buf[j2 * G + j1]`), which saves one transpose per round trip. The public
//! `grid_values` returns the natural layout `values[j1 * G + j2]`.

use std::cell::RefCell;
use std::collections::HashMap;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Result, ZyError};
use crate::spectral::SpectralField;

/// Smallest integer `>= min` of the form `2^a 3^b 5^c`.
pub fn fast_size(min: usize) -> usize {
    let mut g = min.max(1);
    loop {
        let mut r = g;
        for p in [2, 3, 5] {
            while r % p == 0 {
                r /= p;
            }
        }
        if r == 1 {
            return g;
        }
        g += 1;
    }
}

/// Smallest integer `>= min` of the form `2^a 3^b`; these sizes transform fastest.
pub fn fast_size_23(min: usize) -> usize {
    let mut best = usize::MAX;
    let mut p3 = 1usize;
    while p3 < 2 * min.max(1) {
        let mut g = p3;
        while g < min {
            g *= 2;
        }
        best = best.min(g);
        p3 *= 3;
    }
    best
}

pub struct FftGrid {
    g: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    scratch: Vec<Complex64>,
}

impl FftGrid {
    pub fn new(g: usize) -> Self {
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(g);
        let inv = planner.plan_fft_inverse(g);
        let len = fwd.get_inplace_scratch_len().max(inv.get_inplace_scratch_len());
        FftGrid { g, fwd, inv, scratch: vec![Complex64::new(0.0, 0.0); len] }
    }

    pub fn size(&self) -> usize {
        self.g
    }

    pub fn new_buffer(&self) -> Vec<Complex64> {
        vec![Complex64::new(0.0, 0.0); self.g * self.g]
    }

    fn wrap(&self, k: i32) -> usize {
        k.rem_euclid(self.g as i32) as usize
    }

    fn band_rows(&self, fft: &Arc<dyn Fft<f64>>, buf: &mut [Complex64], band: usize, scratch: &mut [Complex64]) {
        let g = self.g;
        if 2 * band + 1 >= g {
            fft.process_with_scratch(buf, scratch);
            return;
        }
        fft.process_with_scratch(&mut buf[..(band + 1) * g], scratch);
        fft.process_with_scratch(&mut buf[(g - band) * g..], scratch);
    }

    /// Coefficients to grid values `f(x_j) = sum f(n) e^{i n.x_j}` (slow index j2).
    pub fn synthesize(&mut self, f: &SpectralField, buf: &mut [Complex64]) {
        let g = self.g;
        assert!(2 * f.cutoff() as usize + 1 <= g, "grid too small for cutoff");
        buf.iter_mut().for_each(|z| *z = Complex64::new(0.0, 0.0));
        for (n, c) in f.iter() {
            buf[self.wrap(n.x) * g + self.wrap(n.y)] = c;
        }
        let mut scratch = std::mem::take(&mut self.scratch);
        let inv = self.inv.clone();
        self.band_rows(&inv, buf, f.cutoff() as usize, &mut scratch);
        transpose(buf, g);
        inv.process_with_scratch(buf, &mut scratch);
        self.scratch = scratch;
    }

    /// Grid values (slow index j2) to the coefficients on the ball of `out`. Destroys `buf`.
    pub fn analyze(&mut self, buf: &mut [Complex64], out: &mut SpectralField) {
        let g = self.g;
        let mut scratch = std::mem::take(&mut self.scratch);
        let fwd = self.fwd.clone();
        fwd.process_with_scratch(buf, &mut scratch);
        transpose(buf, g);
        self.band_rows(&fwd, buf, out.cutoff() as usize, &mut scratch);
        self.scratch = scratch;
        let norm = 1.0 / (g * g) as f64;
        let disk = out.disk().clone();
        for (c, n) in out.coeffs_mut().iter_mut().zip(disk.modes()) {
            *c = buf[self.wrap(n.x) * g + self.wrap(n.y)] * norm;
        }
    }
}

fn transpose(buf: &mut [Complex64], g: usize) {
    const B: usize = 16;
    for ib in (0..g).step_by(B) {
        for jb in (ib..g).step_by(B) {
            for i in ib..(ib + B).min(g) {
                let j0 = if ib == jb { i + 1 } else { jb };
                for j in j0..(jb + B).min(g) {
                    buf.swap(i * g + j, j * g + i);
                }
            }
        }
    }
}

thread_local! {
    static GRIDS: RefCell<HashMap<usize, FftGrid>> = RefCell::new(HashMap::new());
}

/// Runs `f` with a cached per-thread grid of size `g`.
pub fn with_grid<R>(g: usize, f: impl FnOnce(&mut FftGrid) -> R) -> R {
    GRIDS.with(|cell| {
        let mut map = cell.borrow_mut();
        let grid = map.entry(g).or_insert_with(|| FftGrid::new(g));
        f(grid)
    })
}

/// `pi_{n_out}(f g)` through a grid wide enough that aliases miss the output ball.
pub fn padded_product(f: &SpectralField, g: &SpectralField, n_out: u32) -> SpectralField {
    let wide = 2 * f.cutoff().max(g.cutoff()) + 1;
    let size = fast_size((f.cutoff() + g.cutoff() + n_out + 1).max(wide) as usize);
    with_grid(size, |grid| {
        let mut a = grid.new_buffer();
        let mut b = grid.new_buffer();
        grid.synthesize(f, &mut a);
        grid.synthesize(g, &mut b);
        for (x, y) in a.iter_mut().zip(&b) {
            *x *= y;
        }
        let mut out = SpectralField::zeros(n_out, false);
        grid.analyze(&mut a, &mut out);
        out
    })
}

/// Values of `f` on the uniform `G x G` grid, `values[j1 * G + j2] = f(2 pi j / G)`.
pub fn grid_values(f: &SpectralField, g: usize) -> Result<Vec<Complex64>> {
    if g < 2 * f.cutoff() as usize + 2 {
        return Err(ZyError::Invalid(format!("grid {g} aliases cutoff {}", f.cutoff())));
    }
    with_grid(g, |grid| {
        let mut buf = grid.new_buffer();
        grid.synthesize(f, &mut buf);
        transpose(&mut buf, g);
        Ok(buf)
    })
}

/// Inverse of `grid_values`: coefficients on the ball of radius `cutoff`.
pub fn from_grid_values(values: &[Complex64], g: usize, cutoff: u32, hermitian: bool) -> Result<SpectralField> {
    if values.len() != g * g {
        return Err(ZyError::Invalid("grid buffer has wrong length".into()));
    }
    if g < 2 * cutoff as usize + 1 {
        return Err(ZyError::Invalid(format!("grid {g} aliases cutoff {cutoff}")));
    }
    let mut buf = values.to_vec();
    transpose(&mut buf, g);
    let mut out = SpectralField::zeros(cutoff, false);
    with_grid(g, |grid| grid.analyze(&mut buf, &mut out));
    if hermitian {
        out.symmetrize();
    }
    Ok(out)
}
