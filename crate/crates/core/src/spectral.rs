//! Lattice indexing, truncated Fourier fields and the basic linear operations on them.
//!
//! Fields live on the Euclidean ball `{|n| <= N}` in Z^2, stored in lexicographic order of
//! `(n1, n2)`. Physical quantities use the normalized measure on T^2, so the Parseval
//! identity carries no constant.

use std::cmp::Ordering;
use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use num_complex::Complex64;

use crate::error::{Result, ZyError};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct FreqIndex {
    pub x: i32,
    pub y: i32,
}

impl FreqIndex {
    pub const ZERO: FreqIndex = FreqIndex { x: 0, y: 0 };

    pub const fn new(x: i32, y: i32) -> Self {
        FreqIndex { x, y }
    }

    pub fn norm_sq(self) -> i64 {
        let (x, y) = (self.x as i64, self.y as i64);
        x * x + y * y
    }

    pub fn norm(self) -> f64 {
        (self.norm_sq() as f64).sqrt()
    }

    /// Japanese bracket `(1 + |n|^2)^{1/2}`.
    pub fn bracket(self) -> f64 {
        (1.0 + self.norm_sq() as f64).sqrt()
    }

    pub fn neg(self) -> Self {
        FreqIndex::new(-self.x, -self.y)
    }

    pub fn add(self, o: Self) -> Self {
        FreqIndex::new(self.x + o.x, self.y + o.y)
    }

    pub fn sub(self, o: Self) -> Self {
        FreqIndex::new(self.x - o.x, self.y - o.y)
    }

    pub fn in_ball(self, n: u32) -> bool {
        self.norm_sq() <= (n as i64) * (n as i64)
    }

    /// Representative half-lattice: `y > 0`, or `y == 0 && x > 0`, or the origin.
    pub fn in_half_lattice(self) -> bool {
        self.y > 0 || (self.y == 0 && self.x >= 0)
    }

    /// Order used by the sampler: by `|n|^2`, then lexicographic. Every ball is a prefix.
    pub fn shell_cmp(&self, o: &Self) -> Ordering {
        self.norm_sq().cmp(&o.norm_sq()).then(self.cmp(o))
    }
}

impl From<(i32, i32)> for FreqIndex {
    fn from((x, y): (i32, i32)) -> Self {
        FreqIndex::new(x, y)
    }
}

/// Enumeration of a frequency ball, shared between all fields with the same cutoff.
#[derive(Debug)]
pub struct Disk {
    cutoff: u32,
    modes: Vec<FreqIndex>,
    lookup: Vec<u32>,
    mirror: Vec<u32>,
    shell_order: Vec<u32>,
}

const NONE: u32 = u32::MAX;

impl Disk {
    fn build(cutoff: u32) -> Disk {
        let r = cutoff as i32;
        let side = (2 * r + 1) as usize;
        let mut modes = Vec::new();
        let mut lookup = vec![NONE; side * side];
        for x in -r..=r {
            for y in -r..=r {
                let n = FreqIndex::new(x, y);
                if n.in_ball(cutoff) {
                    lookup[(x + r) as usize * side + (y + r) as usize] = modes.len() as u32;
                    modes.push(n);
                }
            }
        }
        let mut disk = Disk { cutoff, modes, lookup, mirror: Vec::new(), shell_order: Vec::new() };
        disk.mirror = disk.modes.iter().map(|n| disk.position(n.neg()).unwrap() as u32).collect();
        let mut order: Vec<u32> = (0..disk.modes.len() as u32).collect();
        order.sort_by(|&a, &b| disk.modes[a as usize].shell_cmp(&disk.modes[b as usize]));
        disk.shell_order = order;
        disk
    }

    /// Cached disk for the given cutoff.
    pub fn get(cutoff: u32) -> Arc<Disk> {
        static CACHE: OnceLock<Mutex<HashMap<u32, Arc<Disk>>>> = OnceLock::new();
        let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
        let mut map = cache.lock().unwrap();
        map.entry(cutoff).or_insert_with(|| Arc::new(Disk::build(cutoff))).clone()
    }

    pub fn cutoff(&self) -> u32 {
        self.cutoff
    }

    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    pub fn modes(&self) -> &[FreqIndex] {
        &self.modes
    }

    pub fn position(&self, n: FreqIndex) -> Option<usize> {
        let r = self.cutoff as i32;
        if n.x.abs() > r || n.y.abs() > r {
            return None;
        }
        let side = (2 * r + 1) as usize;
        match self.lookup[(n.x + r) as usize * side + (n.y + r) as usize] {
            NONE => None,
            k => Some(k as usize),
        }
    }

    /// Position of `-n` for the mode stored at `k`.
    pub fn mirror(&self, k: usize) -> usize {
        self.mirror[k] as usize
    }

    /// Positions sorted by `FreqIndex::shell_cmp`.
    pub fn shell_order(&self) -> &[u32] {
        &self.shell_order
    }
}

/// Dyadic shell test: shell 1 is `{|n| <= 1}`, shell `D >= 2` is `D/2 < |n| <= D`.
pub fn in_dyadic_shell(n: FreqIndex, dyad: u32) -> bool {
    let r2 = n.norm_sq();
    let d = dyad as i64;
    if dyad == 1 {
        r2 <= 1
    } else {
        4 * r2 > d * d && r2 <= d * d
    }
}

pub fn is_dyadic(d: u32) -> bool {
    d.is_power_of_two()
}

/// The dyadic shell containing `n`.
pub fn dyadic_shell_of(n: FreqIndex) -> u32 {
    let mut d = 1u32;
    while !in_dyadic_shell(n, d) {
        d *= 2;
    }
    d
}

#[derive(Clone, Debug)]
pub struct SpectralField {
    disk: Arc<Disk>,
    coeffs: Vec<Complex64>,
    hermitian: bool,
}

impl PartialEq for SpectralField {
    fn eq(&self, o: &Self) -> bool {
        self.cutoff() == o.cutoff() && self.hermitian == o.hermitian && self.coeffs == o.coeffs
    }
}

impl SpectralField {
    pub fn zeros(cutoff: u32, hermitian: bool) -> Self {
        let disk = Disk::get(cutoff);
        let coeffs = vec![Complex64::new(0.0, 0.0); disk.len()];
        SpectralField { disk, coeffs, hermitian }
    }

    pub fn from_fn(cutoff: u32, hermitian: bool, mut f: impl FnMut(FreqIndex) -> Complex64) -> Self {
        let mut out = Self::zeros(cutoff, hermitian);
        for (c, n) in out.coeffs.iter_mut().zip(out.disk.modes.iter()) {
            *c = f(*n);
        }
        out
    }

    /// Builds a field from coefficients in lexicographic order. Hermitian symmetry is checked.
    pub fn from_coeffs(cutoff: u32, hermitian: bool, coeffs: Vec<Complex64>) -> Result<Self> {
        let disk = Disk::get(cutoff);
        if coeffs.len() != disk.len() {
            return Err(ZyError::Invalid(format!(
                "expected {} coefficients for cutoff {}, got {}",
                disk.len(),
                cutoff,
                coeffs.len()
            )));
        }
        let f = SpectralField { disk, coeffs, hermitian };
        if hermitian {
            f.check_hermitian(0.0)?;
        }
        Ok(f)
    }

    /// Single mode `amp * e^{i n.x}`; for hermitian fields the mirror mode gets the conjugate.
    pub fn delta(cutoff: u32, hermitian: bool, n: FreqIndex, amp: Complex64) -> Self {
        let mut f = Self::zeros(cutoff, hermitian);
        if let Some(k) = f.disk.position(n) {
            f.coeffs[k] = amp;
            if hermitian {
                let m = f.disk.mirror(k);
                if m == k {
                    f.coeffs[k] = Complex64::new(amp.re, 0.0);
                } else {
                    f.coeffs[m] = amp.conj();
                }
            }
        }
        f
    }

    pub fn cutoff(&self) -> u32 {
        self.disk.cutoff
    }

    pub fn hermitian(&self) -> bool {
        self.hermitian
    }

    pub fn disk(&self) -> &Arc<Disk> {
        &self.disk
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [Complex64] {
        &mut self.coeffs
    }

    pub fn get(&self, n: FreqIndex) -> Complex64 {
        self.disk.position(n).map_or(Complex64::new(0.0, 0.0), |k| self.coeffs[k])
    }

    /// Sets one coefficient. Hermitian fields also set the mirror coefficient.
    pub fn set(&mut self, n: FreqIndex, c: Complex64) {
        self.coeffs[self.disk.position(n).expect("mode outside cutoff")] = c;
        if self.hermitian {
            let m = self.disk.position(n.neg()).unwrap();
            self.coeffs[m] = c.conj();
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (FreqIndex, Complex64)> + '_ {
        self.disk.modes.iter().copied().zip(self.coeffs.iter().copied())
    }

    pub fn check_hermitian(&self, tol: f64) -> Result<()> {
        for k in 0..self.coeffs.len() {
            let m = self.disk.mirror(k);
            if (self.coeffs[k] - self.coeffs[m].conj()).norm() > tol {
                return Err(ZyError::NotHermitian(self.disk.modes[k]));
            }
        }
        Ok(())
    }

    /// Replaces the coefficients by their hermitian part and flags the field as real-valued.
    pub fn symmetrize(&mut self) {
        let old = self.coeffs.clone();
        for (k, c) in self.coeffs.iter_mut().enumerate() {
            *c = 0.5 * (old[k] + old[self.disk.mirror(k)].conj());
        }
        self.hermitian = true;
    }

    pub fn scale(&mut self, a: f64) {
        for c in &mut self.coeffs {
            *c *= a;
        }
    }

    /// `self += a * other` on the common ball.
    pub fn axpy(&mut self, a: Complex64, other: &SpectralField) {
        if other.cutoff() == self.cutoff() {
            for (c, o) in self.coeffs.iter_mut().zip(&other.coeffs) {
                *c += a * o;
            }
        } else {
            for (k, n) in self.disk.clone().modes.iter().enumerate() {
                self.coeffs[k] += a * other.get(*n);
            }
        }
    }

    /// Fourier multiplier `f(n) * coeff(n)`. The multiplier must be even for hermitian output.
    pub fn multiplier(&self, mut m: impl FnMut(FreqIndex) -> f64) -> SpectralField {
        let mut out = self.clone();
        for (c, n) in out.coeffs.iter_mut().zip(self.disk.modes.iter()) {
            *c *= m(*n);
        }
        out
    }

    /// `<D>^s` applied to the field.
    pub fn bessel(&self, s: f64) -> SpectralField {
        self.multiplier(|n| (1.0 + n.norm_sq() as f64).powf(0.5 * s))
    }

    /// Copy onto a different cutoff, padding with zeros or truncating.
    pub fn with_cutoff(&self, cutoff: u32) -> SpectralField {
        if cutoff == self.cutoff() {
            return self.clone();
        }
        let mut out = SpectralField::zeros(cutoff, self.hermitian);
        for (k, n) in out.disk.clone().modes.iter().enumerate() {
            out.coeffs[k] = self.get(*n);
        }
        out
    }

    pub fn max_abs_diff(&self, o: &SpectralField) -> f64 {
        let c = self.cutoff().max(o.cutoff());
        let d = Disk::get(c);
        d.modes.iter().map(|n| (self.get(*n) - o.get(*n)).norm()).fold(0.0, f64::max)
    }
}

/// `pi_N f`: keeps the modes with `|n| <= N`.
pub fn project_dirichlet(f: &SpectralField, n: u32) -> SpectralField {
    if n >= f.cutoff() {
        return f.clone();
    }
    f.with_cutoff(n)
}

/// Dyadic Littlewood-Paley piece of `f`, kept at the cutoff of `f`.
pub fn littlewood_paley(f: &SpectralField, dyad: u32) -> Result<SpectralField> {
    if !is_dyadic(dyad) {
        return Err(ZyError::Invalid(format!("{dyad} is not a dyadic scale")));
    }
    Ok(f.multiplier(|n| if in_dyadic_shell(n, dyad) { 1.0 } else { 0.0 }))
}

/// Parseval inner product `int f conj(g) dx`.
pub fn inner(f: &SpectralField, g: &SpectralField) -> Complex64 {
    if f.cutoff() == g.cutoff() {
        return f.coeffs.iter().zip(&g.coeffs).map(|(a, b)| a * b.conj()).sum();
    }
    f.iter().map(|(n, a)| a * g.get(n).conj()).sum()
}

pub fn sobolev_norm_sq(f: &SpectralField, s: f64) -> f64 {
    f.iter().map(|(n, c)| (1.0 + n.norm_sq() as f64).powf(s) * c.norm_sqr()).sum()
}

/// `sum |f(n)|^2`, i.e. the L^2 mass.
pub fn l2_norm_sq(f: &SpectralField) -> f64 {
    f.coeffs.iter().map(|c| c.norm_sqr()).sum()
}

/// Exact truncated convolution by direct summation over pairs.
pub fn convolve_direct(f: &SpectralField, g: &SpectralField, n_out: u32) -> SpectralField {
    let mut out = SpectralField::zeros(n_out, f.hermitian && g.hermitian);
    let disk = out.disk.clone();
    for (n1, a) in f.iter() {
        if a == Complex64::new(0.0, 0.0) {
            continue;
        }
        for (n2, b) in g.iter() {
            if let Some(k) = disk.position(n1.add(n2)) {
                out.coeffs[k] += a * b;
            }
        }
    }
    out
}

/// `pi_N (f g)`, computed exactly. Large inputs go through a zero-padded transform whose
/// grid is wide enough that no alias lands on the output ball.
pub fn convolve_truncated(f: &SpectralField, g: &SpectralField, n_out: u32) -> SpectralField {
    let work = (f.disk.len() as f64) * (g.disk.len() as f64);
    if work < 4.0e4 {
        return convolve_direct(f, g, n_out);
    }
    let mut out = crate::grid::padded_product(f, g, n_out);
    if f.hermitian && g.hermitian {
        out.symmetrize();
    }
    out
}

/// Correlation `sum_{n1 - n2 = n} f(n1) conj(g(n2))`, exact, output cutoff `n_out`.
pub fn correlate_direct(f: &SpectralField, g: &SpectralField, n_out: u32) -> SpectralField {
    let mut out = SpectralField::zeros(n_out, false);
    let disk = out.disk.clone();
    for (n1, a) in f.iter() {
        for (n2, b) in g.iter() {
            if let Some(k) = disk.position(n1.sub(n2)) {
                out.coeffs[k] += a * b.conj();
            }
        }
    }
    out
}
