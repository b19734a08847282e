//! Truncated Gibbs measure: density, partition function estimates, weighted ensembles and
//! the variational objective at fixed drifts.
//!
//! Everything here is importance sampling against the Gaussian reference. Log weights are
//! accumulated relative to their running maximum, so nothing overflows for finite inputs.

use std::io::{Read, Write};

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Result, ZyError};
use crate::grid::{fast_size, with_grid};
use crate::random_fields::{
    modulus_square, sample_schrodinger, sample_state, sample_wave_noise, sigma_n, wick_mass_with_sigma, State,
};
use crate::rng::GaussianSampler;
use crate::snapshot::{read_exact, read_field, write_field};
use crate::spectral::{project_dirichlet, FreqIndex, SpectralField};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GibbsParams {
    pub n: u32,
    pub gamma: f64,
    pub k: f64,
    pub a: f64,
    pub alpha: f64,
}

impl GibbsParams {
    pub fn new(n: u32, gamma: f64, k: f64) -> Result<Self> {
        GibbsParams { n, gamma, k, a: 1.0, alpha: 4.0 }.validated()
    }

    pub fn validated(self) -> Result<Self> {
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(ZyError::Invalid(format!("gamma = {} outside [0, 1]", self.gamma)));
        }
        if !(self.k > 0.0) || self.k.is_nan() {
            return Err(ZyError::Invalid(format!("cutoff K = {} must be positive", self.k)));
        }
        if !self.a.is_finite() || self.a < 0.0 || !self.alpha.is_finite() || self.alpha < 1.0 {
            return Err(ZyError::Invalid("need A >= 0 and alpha >= 1, both finite".into()));
        }
        Ok(self)
    }
}

/// `(-Q_N(u, w), |int :|u_N|^2:| <= K)`.
pub fn log_density(state: &State, params: &GibbsParams) -> Result<(f64, bool)> {
    if state.cutoff() < params.n {
        return Err(ZyError::Invalid("state cutoff below the measure cutoff".into()));
    }
    let sigma = sigma_n(params.n);
    let q = crate::random_fields::potential_qn(&state.u, &state.w, params.n)?;
    let wm = wick_mass_with_sigma(&state.u, params.n, sigma);
    Ok((-q, wm.abs() <= params.k))
}

/// Weighted statistics of a set of log weights, all relative to their maximum.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WeightSummary {
    pub max_log: f64,
    /// `sum exp(l - max_log)`.
    pub s1: f64,
    /// `sum exp(2 (l - max_log))`.
    pub s2: f64,
    pub count: usize,
}

impl WeightSummary {
    pub fn from_logs(logs: impl Iterator<Item = f64> + Clone) -> Self {
        let max_log = logs.clone().fold(f64::NEG_INFINITY, f64::max);
        let (mut s1, mut s2, mut count) = (0.0, 0.0, 0);
        if max_log.is_finite() {
            for l in logs {
                let e = (l - max_log).exp();
                s1 += e;
                s2 += e * e;
                count += 1;
            }
        }
        WeightSummary { max_log, s1, s2, count }
    }

    /// `(sum w)^2 / sum w^2`.
    pub fn ess(&self) -> f64 {
        if self.s2 > 0.0 {
            self.s1 * self.s1 / self.s2
        } else {
            0.0
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PartitionEstimate {
    pub m: usize,
    pub accepted: usize,
    pub mean: f64,
    pub log_mean: f64,
    pub stderr: f64,
    pub p2_moment: f64,
    pub max_log_density: f64,
    pub ess: f64,
    /// Quantiles 0.5, 0.9, 0.99 of the log density over the cutoff set.
    pub quantiles: [f64; 3],
}

fn clamp_exp(x: f64) -> f64 {
    if x.is_nan() {
        0.0
    } else {
        x.exp().min(f64::MAX)
    }
}

fn summarize(logs: &[(f64, bool)]) -> PartitionEstimate {
    let m = logs.len();
    let acc: Vec<f64> = logs.iter().filter(|l| l.1).map(|l| l.0).collect();
    let ws = WeightSummary::from_logs(acc.iter().copied());
    let mf = m as f64;
    if acc.is_empty() {
        return PartitionEstimate {
            m,
            accepted: 0,
            mean: 0.0,
            log_mean: f64::NEG_INFINITY,
            stderr: 0.0,
            p2_moment: 0.0,
            max_log_density: f64::NEG_INFINITY,
            ess: 0.0,
            quantiles: [f64::NEG_INFINITY; 3],
        };
    }
    let log_mean = ws.max_log + (ws.s1 / mf).ln();
    let log_p2 = 2.0 * ws.max_log + (ws.s2 / mf).ln();
    // sample variance of the indicator-weighted values, in units of exp(2 max_log)
    let var_rel = ((ws.s2 / mf) - (ws.s1 / mf).powi(2)).max(0.0) * mf / (mf - 1.0);
    let stderr = clamp_exp(ws.max_log) * (var_rel / mf).sqrt();
    let mut sorted = acc.clone();
    sorted.sort_by(f64::total_cmp);
    let q = |p: f64| sorted[((p * (sorted.len() - 1) as f64).round() as usize).min(sorted.len() - 1)];
    PartitionEstimate {
        m,
        accepted: acc.len(),
        mean: clamp_exp(log_mean),
        log_mean,
        stderr: stderr.min(f64::MAX),
        p2_moment: clamp_exp(log_p2),
        max_log_density: ws.max_log,
        ess: ws.ess(),
        quantiles: [q(0.5), q(0.9), q(0.99)],
    }
}

/// Monte Carlo estimate of `E[1_{|wick mass| <= K} exp(-Q_N)]` under the Gaussian reference.
pub fn estimate_partition(params: &GibbsParams, m: usize, sampler: &GaussianSampler) -> Result<PartitionEstimate> {
    let rows = scan_gamma(&[params.n], &[params.gamma], params, m, sampler)?;
    Ok(rows.into_iter().next().unwrap().estimate)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScanRow {
    pub n: u32,
    pub gamma: f64,
    pub k: f64,
    pub seed: u64,
    pub estimate: PartitionEstimate,
}

pub const SCAN_HEADER: &str = "N,gamma,K,M,seed,Z_mean,Z_stderr,p2_moment,max_logw,ESS";

impl ScanRow {
    pub fn csv(&self) -> String {
        let e = &self.estimate;
        format!(
            "{},{},{},{},{},{:e},{:e},{:e},{},{}",
            self.n, self.gamma, self.k, e.m, self.seed, e.mean, e.stderr, e.p2_moment, e.max_log_density, e.ess
        )
    }
}

/// Partition estimates over a grid of cutoffs and exponents.
///
/// Member `i` uses `sampler.fork(i)` for every cell, and draws at a small cutoff coincide with
/// the low modes of draws at a larger one, so the cells are coupled sample by sample. Each
/// cell equals what `estimate_partition` returns for it alone.
pub fn scan_gamma(
    ns: &[u32],
    gammas: &[f64],
    template: &GibbsParams,
    m: usize,
    sampler: &GaussianSampler,
) -> Result<Vec<ScanRow>> {
    if ns.is_empty() || gammas.is_empty() {
        return Err(ZyError::Invalid("scan lists must be nonempty".into()));
    }
    if m < 100 {
        return Err(ZyError::Invalid(format!("M = {m} below the minimum of 100")));
    }
    for &g in gammas {
        GibbsParams { gamma: g, ..*template }.validated()?;
    }
    let nmax = *ns.iter().max().unwrap();
    let sigmas: Vec<f64> = ns.iter().map(|&n| sigma_n(n)).collect();
    let cells = ns.len() * gammas.len();
    let per_member: Vec<Vec<(f64, bool)>> = (0..m)
        .into_par_iter()
        .map(|i| {
            let s = sampler.fork(i as u64);
            let u_max = sample_schrodinger(&s, nmax);
            let h_max = sample_wave_noise(&s, nmax);
            let mut out = Vec::with_capacity(cells);
            for (j, &n) in ns.iter().enumerate() {
                let u = project_dirichlet(&u_max, n);
                let h = project_dirichlet(&h_max, n);
                let wm = wick_mass_with_sigma(&u, n, sigmas[j]);
                let inside = wm.abs() <= template.k;
                let mut rho = modulus_square(&u, n, n);
                let k0 = rho.disk().position(FreqIndex::ZERO).unwrap();
                rho.coeffs_mut()[k0] -= Complex64::new(sigmas[j], 0.0);
                for &g in gammas {
                    let w = h.multiplier(|q| (1.0 + q.norm_sq() as f64).powf(0.5 * (g - 1.0)));
                    let q = 0.5 * crate::spectral::inner(&rho, &w).re;
                    out.push((-q, inside));
                }
            }
            out
        })
        .collect();
    let mut rows = Vec::with_capacity(cells);
    for (j, &n) in ns.iter().enumerate() {
        for (l, &g) in gammas.iter().enumerate() {
            let c = j * gammas.len() + l;
            let logs: Vec<(f64, bool)> = per_member.iter().map(|v| v[c]).collect();
            rows.push(ScanRow { n, gamma: g, k: template.k, seed: sampler.seed, estimate: summarize(&logs) });
        }
    }
    Ok(rows)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Member {
    pub state: State,
    pub log_weight: f64,
    pub in_cutoff: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GibbsEnsemble {
    pub params: GibbsParams,
    pub seed: u64,
    pub stream: u64,
    pub members: Vec<Member>,
}

pub const ENSEMBLE_MAGIC: &[u8; 4] = b"ZYE1";

pub fn sample_gibbs_ensemble(params: &GibbsParams, m: usize, sampler: &GaussianSampler) -> Result<GibbsEnsemble> {
    let params = params.validated()?;
    if m < 100 {
        return Err(ZyError::Invalid(format!("M = {m} below the minimum of 100")));
    }
    sample_members(&params, m, sampler)
}

/// Same as `sample_gibbs_ensemble` without the minimum-size check (used for small snapshots).
pub fn sample_members(params: &GibbsParams, m: usize, sampler: &GaussianSampler) -> Result<GibbsEnsemble> {
    let members = (0..m)
        .into_par_iter()
        .map(|i| {
            let state = sample_state(&sampler.fork(i as u64), params.n, params.gamma);
            let (log_weight, in_cutoff) = log_density(&state, params)?;
            Ok(Member { state, log_weight, in_cutoff })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(GibbsEnsemble { params: *params, seed: sampler.seed, stream: sampler.stream, members })
}

impl GibbsEnsemble {
    pub fn weight_summary(&self) -> WeightSummary {
        WeightSummary::from_logs(self.members.iter().filter(|m| m.in_cutoff).map(|m| m.log_weight))
    }

    pub fn ess(&self) -> f64 {
        self.weight_summary().ess()
    }

    /// Flag for weight degeneracy.
    pub fn unreliable(&self) -> bool {
        self.ess() < 50.0
    }

    /// Self-normalized weights over the cutoff set (zero outside).
    pub fn normalized_weights(&self) -> Vec<f64> {
        let ws = self.weight_summary();
        self.members
            .iter()
            .map(|m| if m.in_cutoff && ws.s1 > 0.0 { (m.log_weight - ws.max_log).exp() / ws.s1 } else { 0.0 })
            .collect()
    }

    /// `E_rho[O]` by self-normalized importance sampling.
    pub fn expectation(&self, obs: impl Fn(&State) -> f64) -> f64 {
        self.normalized_weights()
            .iter()
            .zip(&self.members)
            .filter(|(w, _)| **w > 0.0)
            .map(|(w, m)| w * obs(&m.state))
            .sum()
    }

    /// Expectation and its delta-method standard error.
    pub fn expectation_stderr(&self, obs: impl Fn(&State) -> f64) -> (f64, f64) {
        let w = self.normalized_weights();
        let vals: Vec<f64> = self.members.iter().map(|m| obs(&m.state)).collect();
        let mean: f64 = w.iter().zip(&vals).filter(|(w, _)| **w > 0.0).map(|(w, o)| w * o).sum();
        let var: f64 = w.iter().zip(&vals).filter(|(w, _)| **w > 0.0).map(|(w, o)| w * w * (o - mean).powi(2)).sum();
        (mean, var.sqrt())
    }

    pub fn write<W: Write>(&self, out: &mut W, digest: &[u8; 32]) -> Result<()> {
        out.write_all(ENSEMBLE_MAGIC)?;
        out.write_all(&1u16.to_le_bytes())?;
        out.write_all(&self.params.n.to_le_bytes())?;
        for x in [self.params.gamma, self.params.k, self.params.a, self.params.alpha] {
            out.write_all(&x.to_le_bytes())?;
        }
        out.write_all(&self.seed.to_le_bytes())?;
        out.write_all(&self.stream.to_le_bytes())?;
        out.write_all(digest)?;
        out.write_all(&(self.members.len() as u64).to_le_bytes())?;
        for m in &self.members {
            write_field(out, &m.state.u)?;
            write_field(out, &m.state.w)?;
            write_field(out, &m.state.v)?;
            out.write_all(&m.log_weight.to_le_bytes())?;
            out.write_all(&[m.in_cutoff as u8])?;
        }
        Ok(())
    }

    /// Reads an ensemble and the digest stored in its header.
    pub fn read<R: Read>(inp: &mut R) -> Result<(GibbsEnsemble, [u8; 32])> {
        let magic: [u8; 4] = read_exact(inp)?;
        if &magic != ENSEMBLE_MAGIC {
            return Err(ZyError::Format("missing ZYE1 magic".into()));
        }
        let version = u16::from_le_bytes(read_exact(inp)?);
        if version != 1 {
            return Err(ZyError::Format(format!("unsupported ensemble version {version}")));
        }
        let n = u32::from_le_bytes(read_exact(inp)?);
        let mut f = [0.0; 4];
        for x in f.iter_mut() {
            *x = f64::from_le_bytes(read_exact(inp)?);
        }
        let seed = u64::from_le_bytes(read_exact(inp)?);
        let stream = u64::from_le_bytes(read_exact(inp)?);
        let digest: [u8; 32] = read_exact(inp)?;
        let count = u64::from_le_bytes(read_exact(inp)?);
        let params = GibbsParams { n, gamma: f[0], k: f[1], a: f[2], alpha: f[3] };
        let mut members = Vec::new();
        for _ in 0..count {
            let u = read_field(inp)?;
            let w = read_field(inp)?;
            let v = read_field(inp)?;
            let log_weight = f64::from_le_bytes(read_exact(inp)?);
            let in_cutoff = read_exact::<_, 1>(inp)?[0] != 0;
            members.push(Member { state: State::new(u, w, v, params.gamma)?, log_weight, in_cutoff });
        }
        Ok((GibbsEnsemble { params, seed, stream, members }, digest))
    }
}

/// Time-constant drifts `theta1` (complex) and `theta2` (real-valued).
#[derive(Clone, Debug, PartialEq)]
pub struct DriftPair {
    pub theta1: SpectralField,
    pub theta2: SpectralField,
}

/// `(Theta1, Theta2) = (pi_N <D>^{-1} theta1, pi_N <D>^{-1+gamma} theta2)`.
pub fn drift_map(drift: &DriftPair, n: u32, gamma: f64) -> (SpectralField, SpectralField) {
    let t1 = project_dirichlet(&drift.theta1, n).bessel(-1.0).with_cutoff(n);
    let t2 = project_dirichlet(&drift.theta2, n).bessel(gamma - 1.0).with_cutoff(n);
    (t1, t2)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VariationalTerms {
    /// The seven summands of `R_N(Y + Theta)`, in order:
    /// `int :|Y1|^2: Y2`, `int :|Y1|^2: Theta2`, `2 int Re(Y1 conj Theta1) Y2`,
    /// `2 int Re(Y1 conj Theta1) Theta2`, `int |Theta1|^2 Y2`, `int |Theta1|^2 Theta2`,
    /// `A |int (:|Y1|^2: + 2 Re(Y1 conj Theta1) + |Theta1|^2)|^alpha`.
    pub terms: [f64; 7],
    /// `(||theta1||^2 + ||theta2||^2) / 2`.
    pub cost: f64,
}

impl VariationalTerms {
    pub fn objective(&self) -> f64 {
        self.terms.iter().sum::<f64>() + self.cost
    }
}

/// The expansion of `R_N(Y + Theta)` for a sample `Y = (u, w)` and a constant drift, by exact
/// grid quadrature (all integrands are trigonometric polynomials of degree at most `3N`).
pub fn variational_terms(y: &State, drift: &DriftPair, params: &GibbsParams) -> Result<VariationalTerms> {
    let n = params.n;
    if drift.theta1.cutoff() > n || drift.theta2.cutoff() > n {
        return Err(ZyError::Invalid("drift cutoff exceeds N".into()));
    }
    if !drift.theta2.hermitian() {
        return Err(ZyError::Invalid("theta2 must be real-valued".into()));
    }
    let (th1, th2) = drift_map(drift, n, params.gamma);
    let y1 = project_dirichlet(&y.u, n).with_cutoff(n);
    let y2 = project_dirichlet(&y.w, n).with_cutoff(n);
    let sigma = sigma_n(n);
    let g = fast_size((3 * n + 1) as usize);
    let mut t = [0.0f64; 7];
    with_grid(g, |grid| {
        let mut b = [grid.new_buffer(), grid.new_buffer(), grid.new_buffer(), grid.new_buffer()];
        for (buf, f) in b.iter_mut().zip([&y1, &th1, &y2, &th2]) {
            grid.synthesize(f, buf);
        }
        let mut mass = [0.0f64; 3];
        for j in 0..g * g {
            let (a, c, w, d) = (b[0][j], b[1][j], b[2][j].re, b[3][j].re);
            let wick = a.norm_sqr() - sigma;
            let cross = 2.0 * (a * c.conj()).re;
            let th = c.norm_sqr();
            t[0] += wick * w;
            t[1] += wick * d;
            t[2] += cross * w;
            t[3] += cross * d;
            t[4] += th * w;
            t[5] += th * d;
            mass[0] += wick;
            mass[1] += cross;
            mass[2] += th;
        }
        let norm = 1.0 / (g * g) as f64;
        for x in t.iter_mut().take(6) {
            *x *= norm;
        }
        let total = (mass[0] + mass[1] + mass[2]) * norm;
        t[6] = params.a * total.abs().powf(params.alpha);
    });
    let cost = 0.5 * (crate::spectral::l2_norm_sq(&drift.theta1) + crate::spectral::l2_norm_sq(&drift.theta2));
    Ok(VariationalTerms { terms: t, cost })
}

/// `R_N(u, w) = int :|u_N|^2: w + A |int :|u_N|^2:|^alpha`, evaluated spectrally.
pub fn r_functional(u: &SpectralField, w: &SpectralField, params: &GibbsParams) -> Result<f64> {
    let q = crate::random_fields::potential_qn(u, w, params.n)?;
    let wm = crate::random_fields::wick_mass(u, params.n);
    Ok(2.0 * q + params.a * wm.abs().powf(params.alpha))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(n: u32) -> GibbsParams {
        GibbsParams::new(n, 0.5, 10.0).unwrap()
    }

    #[test]
    fn zero_field_density() {
        let p = params(4);
        let s = State::zeros(4, 0.5);
        let (lw, inside) = log_density(&s, &p).unwrap();
        assert_eq!(lw, 0.0);
        assert_eq!(inside, sigma_n(4) <= 10.0);
        let mut s2 = s.clone();
        s2.w.set(FreqIndex::ZERO, Complex64::new(2.0, 0.0));
        assert!((log_density(&s2, &p).unwrap().0 - sigma_n(4)).abs() < 1e-13);
    }

    #[test]
    fn params_validation() {
        assert!(GibbsParams::new(4, 1.5, 1.0).is_err());
        assert!(GibbsParams::new(4, 0.5, 0.0).is_err());
        assert!(GibbsParams { alpha: 0.5, ..params(4) }.validated().is_err());
    }

    #[test]
    fn tiny_cutoff_kills_everything() {
        let p = GibbsParams { k: 1e-6, ..params(4) };
        let e = estimate_partition(&p, 200, &GaussianSampler::new(1, 0)).unwrap();
        assert_eq!(e.mean, 0.0);
        assert!(e.mean.is_finite() && e.stderr.is_finite());
    }

    #[test]
    fn scan_cells_match_single_estimates() {
        let p = params(4);
        let s = GaussianSampler::new(9, 1);
        let rows = scan_gamma(&[2, 4], &[0.0, 0.5, 1.0], &p, 150, &s).unwrap();
        for r in &rows {
            let single = estimate_partition(&GibbsParams { n: r.n, gamma: r.gamma, ..p }, 150, &s).unwrap();
            assert_eq!(single, r.estimate);
        }
    }

    #[test]
    fn scan_agrees_with_ensemble_weights() {
        let p = params(5);
        let s = GaussianSampler::new(2, 8);
        let ens = sample_gibbs_ensemble(&p, 120, &s).unwrap();
        let est = estimate_partition(&p, 120, &s).unwrap();
        let ws = ens.weight_summary();
        assert_eq!(ws.max_log, est.max_log_density);
        assert!((ens.ess() - est.ess).abs() <= 1e-9 * est.ess);
    }

    #[test]
    fn ensemble_expectations() {
        let p = params(4);
        let ens = sample_gibbs_ensemble(&p, 300, &GaussianSampler::new(4, 4)).unwrap();
        assert!((ens.expectation(|_| 1.0) - 1.0).abs() < 1e-12);
        let e = ens.expectation(|s| crate::random_fields::wick_mass(&s.u, 4));
        assert!(e.abs() <= p.k);
        let mut shifted = ens.clone();
        shifted.members.iter_mut().for_each(|m| m.log_weight += 100.0);
        let a = ens.expectation(|s| s.u.get(FreqIndex::ZERO).norm_sqr());
        let b = shifted.expectation(|s| s.u.get(FreqIndex::ZERO).norm_sqr());
        assert!((a - b).abs() <= 1e-12 * a.abs());
    }

    #[test]
    fn ensemble_snapshot_round_trip() {
        let ens = sample_members(&params(3), 5, &GaussianSampler::new(1, 1)).unwrap();
        let mut bytes = Vec::new();
        ens.write(&mut bytes, &[7u8; 32]).unwrap();
        let (back, digest) = GibbsEnsemble::read(&mut bytes.as_slice()).unwrap();
        assert_eq!(digest, [7u8; 32]);
        assert_eq!(back, ens);
    }

    #[test]
    fn zero_drift_terms() {
        let p = params(6);
        let y = sample_state(&GaussianSampler::new(3, 3), 6, 0.5);
        let d = DriftPair { theta1: SpectralField::zeros(6, false), theta2: SpectralField::zeros(6, true) };
        let v = variational_terms(&y, &d, &p).unwrap();
        let q = crate::random_fields::potential_qn(&y.u, &y.w, 6).unwrap();
        let wm = crate::random_fields::wick_mass(&y.u, 6);
        assert!((v.terms[0] - 2.0 * q).abs() < 1e-11);
        assert!(v.terms[1..6].iter().all(|t| t.abs() < 1e-14));
        assert!((v.terms[6] - wm.abs().powi(4)).abs() <= 1e-11 * wm.abs().powi(4).max(1.0));
        assert_eq!(v.cost, 0.0);
    }
}
