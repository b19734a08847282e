//! Transport test of Gibbs invariance: sample a weighted ensemble, push every member through
//! the truncated flow with the weights frozen, and compare weighted means before and after.

use rayon::prelude::*;

use crate::dynamics::{steps_for, FlowConfig, FlowEngine};
use crate::error::{Result, ZyError};
use crate::gibbs::{log_density, GibbsParams, WeightSummary};
use crate::random_fields::{sample_state, wick_mass, State};
use crate::rng::GaussianSampler;
use crate::spectral::{sobolev_norm_sq, FreqIndex, SpectralField};

/// Relative floating-point resolution added to the combined standard error, so that a
/// quantity the integrator conserves to rounding does not produce a huge z from rounding noise.
pub const RESOLUTION: f64 = 1e-12;

pub const REPORT_HEADER: &str = "observable,mean_before,mean_after,combined_stderr,z";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Field {
    U,
    W,
    V,
}

impl Field {
    fn name(self) -> &'static str {
        match self {
            Field::U => "u",
            Field::W => "w",
            Field::V => "v",
        }
    }

    fn of(self, s: &State) -> &SpectralField {
        match self {
            Field::U => &s.u,
            Field::W => &s.w,
            Field::V => &s.v,
        }
    }
}

/// Test functionals. On `w` and `v` the zero mode is never used: it oscillates freely and
/// the Gibbs weight tilts it, so its marginal law is not preserved.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Observable {
    WickMass,
    /// `sum <n>^{2s} |f(n)|^2`.
    SobolevSq { field: Field, s: f64 },
    ModeRe { field: Field, n: FreqIndex },
    ModeAbsSq { field: Field, n: FreqIndex },
    /// `cos(xi |u(n)|)` for `u`, `cos(xi Re f(n))` for the wave fields.
    CharFn { field: Field, n: FreqIndex, xi: f64 },
}

impl Observable {
    pub fn name(&self) -> String {
        match *self {
            Observable::WickMass => "wick_mass".into(),
            Observable::SobolevSq { field, s } => format!("sobolev_sq({},{s})", field.name()),
            Observable::ModeRe { field, n } => format!("mode_re({},({};{}))", field.name(), n.x, n.y),
            Observable::ModeAbsSq { field, n } => format!("mode_abs_sq({},({};{}))", field.name(), n.x, n.y),
            Observable::CharFn { field, n, xi } => format!("char_fn({},({};{}),{xi})", field.name(), n.x, n.y),
        }
    }

    /// Rejects observables whose law is not expected to be preserved: phases of `u`
    /// (the flow rotates them through the wave zero mode) and zero modes of `w`, `v`.
    pub fn check_gauge_safe(&self) -> Result<()> {
        let bad = |why: &str| Err(ZyError::Invalid(format!("{} is not gauge-safe: {why}", self.name())));
        match *self {
            Observable::ModeRe { field: Field::U, .. } => bad("depends on the phase of u"),
            Observable::ModeRe { field, n } | Observable::ModeAbsSq { field, n } | Observable::CharFn { field, n, .. }
                if field != Field::U && n == FreqIndex::ZERO =>
            {
                bad("uses the wave zero mode")
            }
            _ => Ok(()),
        }
    }

    pub fn eval(&self, s: &State) -> f64 {
        match *self {
            Observable::WickMass => wick_mass(&s.u, s.cutoff()),
            Observable::SobolevSq { field: Field::U, s: p } => sobolev_norm_sq(&s.u, p),
            Observable::SobolevSq { field, s: p } => {
                let f = field.of(s);
                f.iter().filter(|(n, _)| *n != FreqIndex::ZERO).map(|(n, c)| n.bracket().powf(2.0 * p) * c.norm_sqr()).sum()
            }
            Observable::ModeRe { field, n } => field.of(s).get(n).re,
            Observable::ModeAbsSq { field, n } => field.of(s).get(n).norm_sqr(),
            Observable::CharFn { field: Field::U, n, xi } => (xi * s.u.get(n).norm()).cos(),
            Observable::CharFn { field, n, xi } => (xi * field.of(s).get(n).re).cos(),
        }
    }
}

/// The four observables used by the standard run.
pub fn standard_observables() -> Vec<Observable> {
    vec![
        Observable::WickMass,
        Observable::SobolevSq { field: Field::U, s: -0.1 },
        Observable::ModeAbsSq { field: Field::U, n: FreqIndex::new(1, 0) },
        Observable::ModeRe { field: Field::W, n: FreqIndex::new(0, 1) },
    ]
}

/// Observables that respond to the coupling: wave energies and low Schrodinger modes.
pub fn coupling_sensitive_observables(gamma: f64) -> Vec<Observable> {
    vec![
        Observable::SobolevSq { field: Field::W, s: 1.0 - gamma },
        Observable::SobolevSq { field: Field::V, s: -gamma },
        Observable::SobolevSq { field: Field::U, s: 1.0 },
        Observable::ModeAbsSq { field: Field::U, n: FreqIndex::ZERO },
        Observable::ModeAbsSq { field: Field::W, n: FreqIndex::new(1, 0) },
    ]
}

#[derive(Clone, Debug, PartialEq)]
pub struct ObservableResult {
    pub name: String,
    pub mean_before: f64,
    pub mean_after: f64,
    pub combined_stderr: f64,
    pub z: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct InvarianceReport {
    pub rows: Vec<ObservableResult>,
    pub ess: f64,
    pub unreliable: bool,
    /// False for the negative control (weights identically one).
    pub weighted: bool,
    pub params: GibbsParams,
    pub flow: FlowConfig,
    pub t: f64,
    pub steps: usize,
    pub m: usize,
    pub seed: u64,
    pub stream: u64,
}

impl InvarianceReport {
    pub fn max_abs_z(&self) -> f64 {
        self.rows.iter().map(|r| r.z.abs()).fold(0.0, f64::max)
    }

    pub fn all_below(&self, threshold: f64) -> bool {
        self.rows.iter().all(|r| r.z.abs() < threshold)
    }

    pub fn csv(&self) -> String {
        let mut out = String::from(REPORT_HEADER);
        out.push('\n');
        for r in &self.rows {
            // names such as sobolev_sq(u,-0.1) contain commas
            out.push_str(&format!("\"{}\",{},{},{},{}\n", r.name, r.mean_before, r.mean_after, r.combined_stderr, r.z));
        }
        out
    }

    pub fn summary(&self) -> String {
        let mut s = format!(
            "{} N={} gamma={} K={} t={} steps={} dt={} coupling={} M={} seed={} ESS={:.1}{}\n",
            if self.weighted { "invariance" } else { "negative control" },
            self.params.n,
            self.params.gamma,
            self.params.k,
            self.t,
            self.steps,
            if self.steps > 0 { self.t / self.steps as f64 } else { 0.0 },
            self.flow.coupling,
            self.m,
            self.seed,
            self.ess,
            if self.unreliable { " (UNRELIABLE: low ESS)" } else { "" }
        );
        for r in &self.rows {
            s.push_str(&format!(
                "  {:<28} before {:>14.6e} after {:>14.6e} stderr {:>10.3e} z {:>8.3}\n",
                r.name, r.mean_before, r.mean_after, r.combined_stderr, r.z
            ));
        }
        s
    }
}

struct MemberRecord {
    log_weight: f64,
    in_cutoff: bool,
    before: Vec<f64>,
    after: Vec<f64>,
}

/// Weighted paired comparison with the self-normalized delta-method error.
fn compare(name: String, w: &[f64], a: &[f64], b: &[f64]) -> ObservableResult {
    let (mut mb, mut ma, mut scale) = (0.0, 0.0, 0.0);
    for i in 0..w.len() {
        mb += w[i] * a[i];
        ma += w[i] * b[i];
        scale += w[i] * a[i].abs().max(b[i].abs());
    }
    let d = ma - mb;
    let var: f64 = (0..w.len()).map(|i| (w[i] * (b[i] - a[i] - d)).powi(2)).sum();
    let combined_stderr = (var + (RESOLUTION * scale).powi(2)).sqrt();
    let z = if d == 0.0 { 0.0 } else { d / combined_stderr };
    ObservableResult { name, mean_before: mb, mean_after: ma, combined_stderr, z }
}

fn run(
    params: &GibbsParams,
    t: f64,
    cfg: &FlowConfig,
    observables: &[Observable],
    m: usize,
    sampler: &GaussianSampler,
    weighted: bool,
) -> Result<InvarianceReport> {
    let params = params.validated()?;
    if m < 1000 {
        return Err(ZyError::Invalid(format!("M = {m} below the minimum of 1000")));
    }
    if !(t >= 0.0) || !t.is_finite() {
        return Err(ZyError::Invalid(format!("time {t} must be nonnegative")));
    }
    if observables.is_empty() {
        return Err(ZyError::Invalid("no observables".into()));
    }
    for o in observables {
        o.check_gauge_safe()?;
    }
    if cfg.n != params.n || cfg.gamma != params.gamma {
        return Err(ZyError::Invalid("flow and measure disagree on N or gamma".into()));
    }
    cfg.validate()?;
    let steps = steps_for(t, cfg.dt);
    let flow = FlowConfig { dt: if steps > 0 { t / steps as f64 } else { cfg.dt }, ..*cfg };
    let records = (0..m)
        .into_par_iter()
        .map_init(
            || if steps > 0 { FlowEngine::new(flow).ok() } else { None },
            |engine, i| -> Result<MemberRecord> {
                let mut state = sample_state(&sampler.fork(i as u64), params.n, params.gamma);
                let (log_weight, in_cutoff) = log_density(&state, &params)?;
                let before: Vec<f64> = observables.iter().map(|o| o.eval(&state)).collect();
                let after = match engine {
                    Some(e) if in_cutoff => {
                        e.advance(&mut state, steps)?;
                        observables.iter().map(|o| o.eval(&state)).collect()
                    }
                    _ => before.clone(),
                };
                Ok(MemberRecord { log_weight, in_cutoff, before, after })
            },
        )
        .collect::<Result<Vec<_>>>()?;
    let logs = records.iter().filter(|r| r.in_cutoff).map(|r| if weighted { r.log_weight } else { 0.0 });
    let ws = WeightSummary::from_logs(logs);
    if ws.s1 <= 0.0 {
        return Err(ZyError::Invalid("no member inside the cutoff".into()));
    }
    let w: Vec<f64> = records
        .iter()
        .map(|r| {
            if !r.in_cutoff {
                0.0
            } else if weighted {
                (r.log_weight - ws.max_log).exp() / ws.s1
            } else {
                1.0 / ws.s1
            }
        })
        .collect();
    let rows = observables
        .iter()
        .enumerate()
        .map(|(j, o)| {
            let a: Vec<f64> = records.iter().map(|r| r.before[j]).collect();
            let b: Vec<f64> = records.iter().map(|r| r.after[j]).collect();
            compare(o.name(), &w, &a, &b)
        })
        .collect();
    let ess = ws.ess();
    Ok(InvarianceReport {
        rows,
        ess,
        unreliable: ess < 50.0,
        weighted,
        params,
        flow,
        t,
        steps,
        m,
        seed: sampler.seed,
        stream: sampler.stream,
    })
}

/// Weighted-ensemble transport test of invariance of the truncated Gibbs measure.
pub fn test_invariance(
    params: &GibbsParams,
    t: f64,
    cfg: &FlowConfig,
    observables: &[Observable],
    m: usize,
    sampler: &GaussianSampler,
) -> Result<InvarianceReport> {
    run(params, t, cfg, observables, m, sampler, true)
}

/// Same pipeline with the density removed (weights one inside the cutoff, zero outside).
pub fn counterexample_probe(
    params: &GibbsParams,
    t: f64,
    cfg: &FlowConfig,
    observables: &[Observable],
    m: usize,
    sampler: &GaussianSampler,
) -> Result<InvarianceReport> {
    run(params, t, cfg, observables, m, sampler, false)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn setup() -> (GibbsParams, FlowConfig) {
        let p = GibbsParams::new(4, 0.5, 10.0).unwrap();
        let f = FlowConfig { coupling: 0.5, ..FlowConfig::new(4, 0.5, 0.02) };
        (p, f)
    }

    #[test]
    fn gauge_safety() {
        assert!(Observable::ModeRe { field: Field::U, n: FreqIndex::new(1, 0) }.check_gauge_safe().is_err());
        assert!(Observable::ModeRe { field: Field::W, n: FreqIndex::ZERO }.check_gauge_safe().is_err());
        assert!(Observable::ModeAbsSq { field: Field::V, n: FreqIndex::ZERO }.check_gauge_safe().is_err());
        assert!(Observable::ModeAbsSq { field: Field::U, n: FreqIndex::ZERO }.check_gauge_safe().is_ok());
        for o in standard_observables().iter().chain(&coupling_sensitive_observables(0.5)) {
            assert!(o.check_gauge_safe().is_ok(), "{}", o.name());
        }
        let (p, f) = setup();
        let bad = [Observable::ModeRe { field: Field::U, n: FreqIndex::new(1, 0) }];
        assert!(test_invariance(&p, 0.1, &f, &bad, 1000, &GaussianSampler::new(1, 0)).is_err());
    }

    #[test]
    fn observables_gauge_invariant() {
        let s = sample_state(&GaussianSampler::new(5, 5), 4, 0.5);
        let mut r = s.clone();
        let phase = crate::Complex64::from_polar(1.0, 1.234);
        r.u.coeffs_mut().iter_mut().for_each(|c| *c *= phase);
        for o in standard_observables().iter().chain(&coupling_sensitive_observables(0.5)) {
            let (a, b) = (o.eval(&s), o.eval(&r));
            assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0), "{}", o.name());
        }
    }

    #[test]
    fn zero_time_gives_zero_z() {
        let (p, f) = setup();
        let rep = test_invariance(&p, 0.0, &f, &standard_observables(), 1000, &GaussianSampler::new(2, 0)).unwrap();
        assert!(rep.rows.iter().all(|r| r.z == 0.0 && r.mean_before == r.mean_after));
    }

    #[test]
    fn small_ensemble_rejected() {
        let (p, f) = setup();
        assert!(test_invariance(&p, 0.1, &f, &standard_observables(), 999, &GaussianSampler::new(2, 0)).is_err());
    }

    #[test]
    fn compare_arithmetic() {
        let w = [0.25, 0.25, 0.5];
        let r = compare("x".into(), &w, &[1.0, 2.0, 3.0], &[2.0, 2.0, 3.0]);
        assert!((r.mean_before - 2.25).abs() < 1e-15 && (r.mean_after - 2.5).abs() < 1e-15);
        let d = 0.25;
        let var = (0.25f64 * (1.0 - d)).powi(2) + (0.25f64 * (0.0 - d)).powi(2) + (0.5f64 * (0.0 - d)).powi(2);
        assert!((r.combined_stderr - var.sqrt()).abs() < 1e-9);
        assert!((r.z - d / r.combined_stderr).abs() < 1e-12);
    }
}
