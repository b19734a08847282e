//! Frequency-truncated, renormalized Zakharov-Yukawa flow
//!
//! ```text
//! du/dt = -i|n|^2 u - i lambda pi_N(u w)
//! dw/dt = v
//! dv/dt = -<n>^2 w - lambda <n>^{2 gamma} pi_N(|u|^2 - mean |u|^2)
//! ```
//!
//! `lambda = 1` is the usual normalization. With the Gaussian reference sampled as
//! `u(n) = g_n/<n>` and the weight `exp(-1/2 int :|u|^2: w)`, the flow that leaves the
//! weighted measure invariant is the one with `lambda = 1/2`; it is conjugate to the
//! `lambda = 1` flow by `(u, w, v) -> (u, w, v) / 2`.

use num_complex::Complex64;

use crate::error::{Result, ZyError};
use crate::grid::{fast_size_23, FftGrid};
use crate::random_fields::{modulus_square, wick_mass, State};
use crate::spectral::{FreqIndex, SpectralField};

const TAYLOR_TOL: f64 = 1e-16;
const MAX_TERMS: usize = 60;
/// Largest `lambda h sup|w|` summed in one Taylor piece.
const MAX_PIECE_PHASE: f64 = 2.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scheme {
    /// Exact linear half steps around the coupling step.
    Strang,
    /// Classical RK4 on the full right-hand side.
    Rk4,
}

/// Integrator for the coupling step of the Strang scheme.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CouplingSolver {
    /// Taylor exponential summed to rounding level; conserves mass to rounding.
    Exponential,
    /// Classical RK4 with `substeps` sub-iterations.
    Rk4,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FlowConfig {
    pub n: u32,
    pub gamma: f64,
    pub dt: f64,
    pub scheme: Scheme,
    pub solver: CouplingSolver,
    /// RK4 sub-iterations, or the minimum number of pieces the coupling step is cut into.
    pub substeps: u32,
    /// Coupling constant `lambda`.
    pub coupling: f64,
    /// Warn when `dt * N^2` exceeds this.
    pub stability_ceiling: f64,
}

impl FlowConfig {
    pub fn new(n: u32, gamma: f64, dt: f64) -> Self {
        FlowConfig { n, gamma, dt, scheme: Scheme::Strang, solver: CouplingSolver::Exponential, substeps: 1, coupling: 1.0, stability_ceiling: 0.5 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(ZyError::Invalid(format!("dt = {} must be positive", self.dt)));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(ZyError::Invalid(format!("gamma = {} outside [0, 1]", self.gamma)));
        }
        if self.substeps == 0 {
            return Err(ZyError::Invalid("substeps must be at least 1".into()));
        }
        if !self.coupling.is_finite() {
            return Err(ZyError::Invalid("coupling must be finite".into()));
        }
        Ok(())
    }

    /// True when `dt N^2` is above the configured ceiling.
    pub fn exceeds_stability_guard(&self) -> bool {
        self.dt * (self.n as f64).powi(2) > self.stability_ceiling
    }
}

/// `|u|^2 - mean |u|^2` projected to the ball of radius `N`, i.e. the zero mode removed.
pub fn renormalized_square(u: &SpectralField, n: u32) -> SpectralField {
    let mut rho = modulus_square(u, n, n);
    let k = rho.disk().position(FreqIndex::ZERO).unwrap();
    rho.coeffs_mut()[k] = Complex64::new(0.0, 0.0);
    rho
}

pub fn mass(u: &SpectralField) -> f64 {
    crate::spectral::l2_norm_sq(u)
}

fn quadratic_energy(state: &State) -> f64 {
    let g = state.gamma;
    let mut e = 0.0;
    for (k, n) in state.u.disk().modes().iter().enumerate() {
        let r2 = n.norm_sq() as f64;
        let b2 = 1.0 + r2;
        e += 0.5 * r2 * state.u.coeffs()[k].norm_sqr();
        e += 0.25 * b2.powf(1.0 - g) * state.w.coeffs()[k].norm_sqr();
        e += 0.25 * b2.powf(-g) * state.v.coeffs()[k].norm_sqr();
    }
    e
}

/// Conserved energy of the truncated flow with coupling `lambda`: quadratic part plus
/// `lambda/2 <|u|^2 - mean, w>`. The zero-mode oscillator energy is part of the quadratic part.
pub fn energy_with_coupling(state: &State, lambda: f64) -> f64 {
    let rho = renormalized_square(&state.u, state.cutoff());
    quadratic_energy(state) + 0.5 * lambda * crate::spectral::inner(&rho, &state.w).re
}

/// Renormalized energy at the standard coupling.
pub fn energy(state: &State) -> f64 {
    energy_with_coupling(state, 1.0)
}

/// Hamiltonian with the plain coupling `lambda/2 int |u|^2 w`.
pub fn energy_plain_with_coupling(state: &State, lambda: f64) -> f64 {
    let rho = modulus_square(&state.u, state.cutoff(), state.cutoff());
    quadratic_energy(state) + 0.5 * lambda * crate::spectral::inner(&rho, &state.w).re
}

pub fn energy_plain(state: &State) -> f64 {
    energy_plain_with_coupling(state, 1.0)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Diagnostics {
    pub t: f64,
    pub mass: f64,
    pub energy_renorm: f64,
    pub energy_plain: f64,
    pub wick_mass: f64,
    pub w0: Complex64,
}

pub const TRAJECTORY_HEADER: &str = "t,mass,energy_renorm,energy_plain,wick_mass,w0_re,w0_im";

impl Diagnostics {
    pub fn of(state: &State, t: f64, lambda: f64) -> Self {
        Diagnostics {
            t,
            mass: mass(&state.u),
            energy_renorm: energy_with_coupling(state, lambda),
            energy_plain: energy_plain_with_coupling(state, lambda),
            wick_mass: wick_mass(&state.u, state.cutoff()),
            w0: state.w.get(FreqIndex::ZERO),
        }
    }

    pub fn csv(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.t, self.mass, self.energy_renorm, self.energy_plain, self.wick_mass, self.w0.re, self.w0.im
        )
    }
}

#[derive(Clone, Debug)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<State>,
    pub diagnostics: Vec<Diagnostics>,
}

impl Trajectory {
    pub fn last(&self) -> &State {
        self.states.last().unwrap()
    }

    /// Largest relative deviation of a diagnostic from its initial value.
    pub fn relative_drift(&self, f: impl Fn(&Diagnostics) -> f64) -> f64 {
        let f0 = f(&self.diagnostics[0]);
        let scale = f0.abs().max(f64::MIN_POSITIVE);
        self.diagnostics.iter().map(|d| (f(d) - f0).abs() / scale).fold(0.0, f64::max)
    }
}

/// Reusable integrator for one configuration: transform plans, scratch and phase tables.
pub struct FlowEngine {
    cfg: FlowConfig,
    grid: FftGrid,
    wbuf: Vec<Complex64>,
    ubuf: Vec<Complex64>,
    rbuf: Vec<Complex64>,
    lap: Vec<f64>,
    bracket: Vec<f64>,
    forcing: Vec<f64>,
    half_u: Vec<Complex64>,
    half_cos: Vec<f64>,
    half_sin: Vec<f64>,
    prod: SpectralField,
    rho: SpectralField,
    terms: Vec<Vec<Complex64>>,
    acc: Vec<f64>,
    /// Operator applications spent in the coupling step so far.
    pub applications: u64,
}

impl FlowEngine {
    pub fn new(cfg: FlowConfig) -> Result<Self> {
        cfg.validate()?;
        let g = fast_size_23((3 * cfg.n + 1) as usize);
        let grid = FftGrid::new(g);
        let disk = crate::spectral::Disk::get(cfg.n);
        let lap: Vec<f64> = disk.modes().iter().map(|n| n.norm_sq() as f64).collect();
        let bracket: Vec<f64> = lap.iter().map(|r2| (1.0 + r2).sqrt()).collect();
        let forcing = disk
            .modes()
            .iter()
            .zip(&lap)
            .map(|(n, r2)| if *n == FreqIndex::ZERO { 0.0 } else { -cfg.coupling * (1.0 + r2).powf(cfg.gamma) })
            .collect();
        let tau = 0.5 * cfg.dt;
        let half_u = lap.iter().map(|r2| Complex64::from_polar(1.0, -r2 * tau)).collect();
        let half_cos = bracket.iter().map(|b| (b * tau).cos()).collect();
        let half_sin = bracket.iter().map(|b| (b * tau).sin()).collect();
        Ok(FlowEngine {
            cfg,
            wbuf: grid.new_buffer(),
            ubuf: grid.new_buffer(),
            rbuf: grid.new_buffer(),
            grid,
            lap,
            bracket,
            forcing,
            half_u,
            half_cos,
            half_sin,
            prod: SpectralField::zeros(cfg.n, false),
            rho: SpectralField::zeros(cfg.n, false),
            terms: Vec::new(),
            acc: vec![0.0; 2 * g * g],
            applications: 0,
        })
    }

    pub fn config(&self) -> &FlowConfig {
        &self.cfg
    }

    fn check(&self, state: &State) -> Result<()> {
        if state.cutoff() != self.cfg.n {
            return Err(ZyError::Invalid(format!("state cutoff {} but flow cutoff {}", state.cutoff(), self.cfg.n)));
        }
        if (state.gamma - self.cfg.gamma).abs() > 0.0 {
            return Err(ZyError::Invalid("state and flow disagree on gamma".into()));
        }
        Ok(())
    }

    /// Loads `w` onto the grid (real part only).
    fn load_wave(&mut self, w: &SpectralField) {
        self.grid.synthesize(w, &mut self.wbuf);
        for z in self.wbuf.iter_mut() {
            z.im = 0.0;
        }
    }

    /// Coupling terms for the loaded wave: `du = -i lambda pi_N(u w)` and
    /// `dv = -lambda <n>^{2 gamma} (|u|^2 - mean)`, written into `du`, `dv`.
    fn coupling(&mut self, u: &[Complex64], du: &mut [Complex64], dv: &mut [Complex64]) {
        let lam = self.cfg.coupling;
        self.prod.coeffs_mut().copy_from_slice(u);
        self.grid.synthesize(&self.prod, &mut self.ubuf);
        for ((r, x), w) in self.rbuf.iter_mut().zip(self.ubuf.iter_mut()).zip(&self.wbuf) {
            *r = Complex64::new(x.norm_sqr(), 0.0);
            *x *= w.re;
        }
        self.grid.analyze(&mut self.ubuf, &mut self.prod);
        self.grid.analyze(&mut self.rbuf, &mut self.rho);
        self.rho.symmetrize();
        let neg_i_lam = Complex64::new(0.0, -lam);
        for (d, p) in du.iter_mut().zip(self.prod.coeffs()) {
            *d = neg_i_lam * p;
        }
        for ((d, r), f) in dv.iter_mut().zip(self.rho.coeffs()).zip(&self.forcing) {
            *d = r * *f;
        }
    }

    /// Right-hand side of the full system.
    pub fn rhs(&mut self, state: &State) -> Result<(SpectralField, SpectralField, SpectralField)> {
        self.check(state)?;
        let n = self.cfg.n;
        let mut du = SpectralField::zeros(n, false);
        let mut dw = state.v.clone();
        let mut dv = SpectralField::zeros(n, true);
        self.load_wave(&state.w);
        self.coupling(state.u.coeffs(), du.coeffs_mut(), dv.coeffs_mut());
        for k in 0..self.lap.len() {
            du.coeffs_mut()[k] += Complex64::new(0.0, -self.lap[k]) * state.u.coeffs()[k];
            dv.coeffs_mut()[k] -= state.w.coeffs()[k] * (self.bracket[k] * self.bracket[k]);
        }
        dw.symmetrize();
        Ok((du, dw, dv))
    }

    /// Exact linear flow over half a step.
    fn half_linear(&self, state: &mut State) {
        for (c, e) in state.u.coeffs_mut().iter_mut().zip(&self.half_u) {
            *c *= e;
        }
        let (w, v) = (state.w.coeffs_mut(), state.v.coeffs_mut());
        for k in 0..self.bracket.len() {
            let (c, s, b) = (self.half_cos[k], self.half_sin[k], self.bracket[k]);
            let (w0, v0) = (w[k], v[k]);
            w[k] = w0 * c + v0 * (s / b);
            v[k] = v0 * c - w0 * (s * b);
        }
    }

    /// Coupling flow over `h` with the wave frozen: RK4 in `u`, the same quadrature in `v`.
    fn coupling_rk4(&mut self, state: &mut State, h: f64) {
        self.load_wave(&state.w);
        let len = self.lap.len();
        let zero = Complex64::new(0.0, 0.0);
        let mut k = [vec![zero; len], vec![zero; len], vec![zero; len], vec![zero; len]];
        let mut f = [vec![zero; len], vec![zero; len], vec![zero; len], vec![zero; len]];
        let mut tmp = vec![zero; len];
        let hs = h / self.cfg.substeps as f64;
        for _ in 0..self.cfg.substeps {
            let u0 = state.u.coeffs().to_vec();
            for stage in 0..4 {
                let input = if stage == 0 {
                    u0.clone()
                } else {
                    let c = if stage == 3 { hs } else { 0.5 * hs };
                    for i in 0..len {
                        tmp[i] = u0[i] + k[stage - 1][i] * c;
                    }
                    tmp.clone()
                };
                let (ks, fs) = (&mut k[stage], &mut f[stage]);
                self.coupling(&input, ks, fs);
            }
            let u = state.u.coeffs_mut();
            let v = state.v.coeffs_mut();
            for i in 0..len {
                u[i] += (k[0][i] + (k[1][i] + k[2][i]) * 2.0 + k[3][i]) * (hs / 6.0);
                v[i] += (f[0][i] + (f[1][i] + f[2][i]) * 2.0 + f[3][i]) * (hs / 6.0);
            }
        }
    }

    /// Coupling flow over `h` with the wave frozen. It is linear in `u`, so `u(s)` is a
    /// Taylor series of `exp(-i lambda s P w)` summed to rounding level, and the `v`
    /// increment integrates `|u(s)|^2` exactly in `s` from the same coefficients.
    fn coupling_exp(&mut self, state: &mut State, h: f64) {
        self.load_wave(&state.w);
        // a constant part of w only turns the phase of u, so it is split off exactly
        let (lo, hi) = self.wbuf.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), z| (a.min(z.re), b.max(z.re)));
        let centre = 0.5 * (lo + hi);
        self.wbuf.iter_mut().for_each(|z| z.re -= centre);
        let theta = (self.cfg.coupling * h).abs() * 0.5 * (hi - lo);
        let pieces = (self.cfg.substeps as usize).max((theta / MAX_PIECE_PHASE).ceil() as usize);
        let hs = h / pieces as f64;
        let factor = Complex64::new(0.0, -self.cfg.coupling * hs);
        let g2 = self.wbuf.len();
        for _ in 0..pieces {
            let norm0 = mass(&state.u).sqrt();
            let mut a = state.u.clone();
            let mut total = state.u.clone();
            let mut k = 0;
            loop {
                if self.terms.len() <= k {
                    self.terms.push(vec![Complex64::new(0.0, 0.0); g2]);
                }
                self.grid.synthesize(&a, &mut self.terms[k]);
                if k + 1 >= MAX_TERMS {
                    break;
                }
                for ((x, t), w) in self.ubuf.iter_mut().zip(&self.terms[k]).zip(&self.wbuf) {
                    *x = t * w.re;
                }
                self.grid.analyze(&mut self.ubuf, &mut a);
                let c = factor / (k + 1) as f64;
                a.coeffs_mut().iter_mut().for_each(|z| *z *= c);
                let size = mass(&a).sqrt();
                if size <= TAYLOR_TOL * norm0 {
                    break;
                }
                total.axpy(Complex64::new(1.0, 0.0), &a);
                k += 1;
            }
            let used = k + 1;
            self.applications += used as u64;
            // integral over the piece of |sum_i s^i g_i|^2, pairwise on the flattened re/im parts
            self.acc.iter_mut().for_each(|x| *x = 0.0);
            for i in 0..used {
                let gi = flat(&self.terms[i]);
                for j in i..used {
                    let gj = flat(&self.terms[j]);
                    let c = if i == j { hs } else { 2.0 * hs } / (i + j + 1) as f64;
                    for ((a, x), y) in self.acc.iter_mut().zip(gi).zip(gj) {
                        *a += c * x * y;
                    }
                }
            }
            for (r, pair) in self.rbuf.iter_mut().zip(self.acc.chunks_exact(2)) {
                *r = Complex64::new(pair[0] + pair[1], 0.0);
            }
            self.grid.analyze(&mut self.rbuf, &mut self.rho);
            self.rho.symmetrize();
            for ((v, r), f) in state.v.coeffs_mut().iter_mut().zip(self.rho.coeffs()).zip(&self.forcing) {
                *v += r * *f;
            }
            let turn = Complex64::from_polar(1.0, -self.cfg.coupling * hs * centre);
            total.coeffs_mut().iter_mut().for_each(|z| *z *= turn);
            state.u = total;
        }
    }

    fn rk4_step(&mut self, state: &mut State) -> Result<()> {
        let dt = self.cfg.dt;
        let s0 = state.clone();
        let (a1, b1, c1) = self.rhs(&s0)?;
        let s1 = combine(&s0, 0.5 * dt, &a1, &b1, &c1);
        let (a2, b2, c2) = self.rhs(&s1)?;
        let s2 = combine(&s0, 0.5 * dt, &a2, &b2, &c2);
        let (a3, b3, c3) = self.rhs(&s2)?;
        let s3 = combine(&s0, dt, &a3, &b3, &c3);
        let (a4, b4, c4) = self.rhs(&s3)?;
        for (dst, parts) in [
            (state.u.coeffs_mut(), [a1.coeffs(), a2.coeffs(), a3.coeffs(), a4.coeffs()]),
            (state.w.coeffs_mut(), [b1.coeffs(), b2.coeffs(), b3.coeffs(), b4.coeffs()]),
            (state.v.coeffs_mut(), [c1.coeffs(), c2.coeffs(), c3.coeffs(), c4.coeffs()]),
        ] {
            for k in 0..dst.len() {
                dst[k] += (parts[0][k] + (parts[1][k] + parts[2][k]) * 2.0 + parts[3][k]) * (dt / 6.0);
            }
        }
        Ok(())
    }

    /// One time step in place.
    pub fn step_in_place(&mut self, state: &mut State, t: f64) -> Result<()> {
        self.check(state)?;
        match self.cfg.scheme {
            Scheme::Strang => {
                self.half_linear(state);
                match self.cfg.solver {
                    CouplingSolver::Exponential => self.coupling_exp(state, self.cfg.dt),
                    CouplingSolver::Rk4 => self.coupling_rk4(state, self.cfg.dt),
                }
                self.half_linear(state);
            }
            Scheme::Rk4 => self.rk4_step(state)?,
        }
        let finite = |f: &SpectralField| f.coeffs().iter().all(|c| c.re.is_finite() && c.im.is_finite());
        if !(finite(&state.u) && finite(&state.w) && finite(&state.v)) {
            return Err(ZyError::NonFinite { t: t + self.cfg.dt, what: format!("dt = {}", self.cfg.dt) });
        }
        Ok(())
    }

    /// Advances by `steps` steps of size `dt` without recording anything.
    pub fn advance(&mut self, state: &mut State, steps: usize) -> Result<()> {
        for i in 0..steps {
            self.step_in_place(state, i as f64 * self.cfg.dt)?;
        }
        Ok(())
    }
}

fn flat(v: &[Complex64]) -> &[f64] {
    // Complex64 is repr(C) with two f64 fields
    unsafe { std::slice::from_raw_parts(v.as_ptr() as *const f64, 2 * v.len()) }
}

fn combine(s: &State, h: f64, du: &SpectralField, dw: &SpectralField, dv: &SpectralField) -> State {
    let mut out = s.clone();
    out.u.axpy(Complex64::new(h, 0.0), du);
    out.w.axpy(Complex64::new(h, 0.0), dw);
    out.v.axpy(Complex64::new(h, 0.0), dv);
    out
}

/// Right-hand side `(du, dw, dv)` of the truncated system.
pub fn rhs(state: &State, cfg: &FlowConfig) -> Result<(SpectralField, SpectralField, SpectralField)> {
    FlowEngine::new(FlowConfig { n: state.cutoff(), gamma: state.gamma, ..*cfg })?.rhs(state)
}

/// One step of the configured scheme.
pub fn step(state: &State, cfg: &FlowConfig) -> Result<State> {
    let mut s = state.clone();
    FlowEngine::new(*cfg)?.step_in_place(&mut s, 0.0)?;
    Ok(s)
}

/// Number of steps used to reach `t`: `t / dt` rounded up, the step then shrunk to fit.
pub fn steps_for(t: f64, dt: f64) -> usize {
    if t <= 0.0 {
        return 0;
    }
    let k = (t / dt).round();
    if (k * dt - t).abs() <= 1e-9 * t {
        k as usize
    } else {
        (t / dt).ceil() as usize
    }
}

/// Integrates to time `t`, recording diagnostics and states every `stride` steps and at the end.
pub fn evolve(state: &State, t: f64, cfg: &FlowConfig, stride: usize) -> Result<Trajectory> {
    if t < 0.0 || !t.is_finite() {
        return Err(ZyError::Invalid(format!("final time {t} must be nonnegative")));
    }
    let steps = steps_for(t, cfg.dt);
    let dt = if steps == 0 { cfg.dt } else { t / steps as f64 };
    let mut engine = FlowEngine::new(FlowConfig { dt, ..*cfg })?;
    let stride = stride.max(1);
    let lam = cfg.coupling;
    let mut s = state.clone();
    let mut traj = Trajectory { times: vec![0.0], states: vec![s.clone()], diagnostics: vec![Diagnostics::of(&s, 0.0, lam)] };
    for i in 0..steps {
        engine.step_in_place(&mut s, i as f64 * dt)?;
        if (i + 1) % stride == 0 || i + 1 == steps {
            let ti = (i + 1) as f64 * dt;
            traj.times.push(ti);
            traj.diagnostics.push(Diagnostics::of(&s, ti, lam));
            traj.states.push(s.clone());
        }
    }
    Ok(traj)
}

/// First-order form `(u, w_+)` with `w_+ = w + i <D>^{-1} v`.
#[derive(Clone, Debug, PartialEq)]
pub struct ReducedState {
    pub u: SpectralField,
    pub w_plus: SpectralField,
    pub gamma: f64,
}

impl ReducedState {
    /// `w_- = w - i <D>^{-1} v = conj(w_+)` in physical space.
    pub fn w_minus(&self) -> SpectralField {
        let d = self.w_plus.disk().clone();
        SpectralField::from_fn(self.w_plus.cutoff(), false, |n| {
            self.w_plus.coeffs()[d.mirror(d.position(n).unwrap())].conj()
        })
    }
}

pub fn to_reduced(state: &State) -> ReducedState {
    let mut wp = SpectralField::zeros(state.cutoff(), false);
    for (k, n) in state.w.disk().modes().iter().enumerate() {
        wp.coeffs_mut()[k] = state.w.coeffs()[k] + Complex64::new(0.0, 1.0 / n.bracket()) * state.v.coeffs()[k];
    }
    ReducedState { u: state.u.clone(), w_plus: wp, gamma: state.gamma }
}

pub fn from_reduced(r: &ReducedState) -> State {
    let d = r.w_plus.disk().clone();
    let wp = r.w_plus.coeffs();
    let mut w = SpectralField::zeros(r.w_plus.cutoff(), true);
    let mut v = SpectralField::zeros(r.w_plus.cutoff(), true);
    for (k, n) in d.modes().iter().enumerate() {
        let wk = 0.5 * (wp[k] + wp[d.mirror(k)].conj());
        w.coeffs_mut()[k] = wk;
        v.coeffs_mut()[k] = Complex64::new(0.0, -n.bracket()) * (wp[k] - wk);
    }
    w.symmetrize();
    v.symmetrize();
    State { u: r.u.clone(), w, v, gamma: r.gamma }
}

/// Classical RK4 on the first-order system
/// `i dw_+/dt = <D> w_+ + lambda <D>^{-1+2 gamma}(|u|^2 - mean)`, used as a cross-check.
pub fn evolve_reduced(state: &State, t: f64, cfg: &FlowConfig) -> Result<State> {
    let steps = steps_for(t, cfg.dt);
    let dt = if steps == 0 { 0.0 } else { t / steps as f64 };
    let n = state.cutoff();
    let mut engine = FlowEngine::new(FlowConfig { n, gamma: state.gamma, dt: cfg.dt, ..*cfg })?;
    let lam = cfg.coupling;
    let g = state.gamma;
    let mut rhs = |r: &ReducedState| -> (SpectralField, SpectralField) {
        let s = from_reduced(r);
        let mut du = SpectralField::zeros(n, false);
        let mut dv = SpectralField::zeros(n, false);
        engine.load_wave(&s.w);
        engine.coupling(s.u.coeffs(), du.coeffs_mut(), dv.coeffs_mut());
        let rho = renormalized_square(&s.u, n);
        let mut dwp = SpectralField::zeros(n, false);
        for (k, m) in r.u.disk().modes().iter().enumerate() {
            let b = m.bracket();
            du.coeffs_mut()[k] += Complex64::new(0.0, -(m.norm_sq() as f64)) * r.u.coeffs()[k];
            dwp.coeffs_mut()[k] = Complex64::new(0.0, -1.0)
                * (r.w_plus.coeffs()[k] * b + rho.coeffs()[k] * (lam * b.powf(2.0 * g - 1.0)));
        }
        (du, dwp)
    };
    let mut r = to_reduced(state);
    let c = |a: &SpectralField, h: f64, d: &SpectralField| {
        let mut o = a.clone();
        o.axpy(Complex64::new(h, 0.0), d);
        o
    };
    for _ in 0..steps {
        let (a1, b1) = rhs(&r);
        let r1 = ReducedState { u: c(&r.u, 0.5 * dt, &a1), w_plus: c(&r.w_plus, 0.5 * dt, &b1), gamma: g };
        let (a2, b2) = rhs(&r1);
        let r2 = ReducedState { u: c(&r.u, 0.5 * dt, &a2), w_plus: c(&r.w_plus, 0.5 * dt, &b2), gamma: g };
        let (a3, b3) = rhs(&r2);
        let r3 = ReducedState { u: c(&r.u, dt, &a3), w_plus: c(&r.w_plus, dt, &b3), gamma: g };
        let (a4, b4) = rhs(&r3);
        for (dst, p) in [(&mut r.u, [&a1, &a2, &a3, &a4]), (&mut r.w_plus, [&b1, &b2, &b3, &b4])] {
            let out = dst.coeffs_mut();
            for k in 0..out.len() {
                out[k] += (p[0].coeffs()[k] + (p[1].coeffs()[k] + p[2].coeffs()[k]) * 2.0 + p[3].coeffs()[k])
                    * (dt / 6.0);
            }
        }
    }
    Ok(from_reduced(&r))
}
