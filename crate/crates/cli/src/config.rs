//! Line-oriented run configuration: `key = value`, `[section]` headers, `#` comments and
//! comma-separated arrays. Unknown sections and keys are errors carrying the line number.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use sha2::{Digest, Sha256};
use zy_core::dynamics::{CouplingSolver, FlowConfig, Scheme};
use zy_core::estimates::suites::{EstimatesConfig, Suite};
use zy_core::estimates::{Sign, TensorKind};

use crate::CliError;

pub const TOOL_VERSION: &str = concat!("zy ", env!("CARGO_PKG_VERSION"));

#[derive(Clone, Debug, PartialEq)]
pub struct SampleConfig {
    pub n: Vec<u32>,
    pub gamma: Vec<f64>,
    pub k: Vec<f64>,
    pub m: usize,
    pub a: f64,
    pub alpha: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScanConfig {
    pub n: Vec<u32>,
    pub gamma: Vec<f64>,
    pub k: f64,
    pub m: usize,
    pub a: f64,
    pub alpha: f64,
    /// Allowed relative spread of the p=2 moment across N for gamma < 1.
    pub p2_spread: f64,
    /// Required growth of maxLogDensity across N at gamma = 1.
    pub growth_nats: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Initial {
    /// Draw from the Gaussian reference with the run seed.
    Gaussian,
    /// Read a state snapshot.
    File(String),
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvolveConfig {
    pub n: u32,
    pub gamma: f64,
    pub dt: f64,
    pub t: f64,
    pub stride: usize,
    pub scheme: Scheme,
    pub solver: CouplingSolver,
    pub substeps: u32,
    pub coupling: f64,
    pub initial: Initial,
    pub mass_tol: f64,
    pub energy_tol: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ObservableSet {
    Standard,
    Coupling,
    Both,
}

#[derive(Clone, Debug, PartialEq)]
pub struct InvarianceConfig {
    pub n: u32,
    pub gamma: f64,
    pub k: f64,
    pub t: f64,
    pub m: usize,
    pub dt: f64,
    pub coupling: f64,
    /// False runs the negative control (density dropped).
    pub weighted: bool,
    pub observables: ObservableSet,
    pub threshold: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EstimatesSection {
    pub suites: Vec<Suite>,
    pub params: EstimatesConfig,
    /// Appends a fabricated failing hard row, to exercise the exit gate.
    pub inject_violation: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NormsConfig {
    pub kind: TensorKind,
    pub n: u32,
    pub n1: u32,
    /// 0 picks the default second shell of the kind.
    pub n2: u32,
    pub s: f64,
    pub gamma: f64,
    pub t: f64,
    pub eps: f64,
    pub window_scale: f64,
    pub sign: Sign,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub sample: SampleConfig,
    pub scan: ScanConfig,
    pub evolve: EvolveConfig,
    pub invariance: InvarianceConfig,
    pub estimates: EstimatesSection,
    pub norms: NormsConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 1,
            sample: SampleConfig { n: vec![4], gamma: vec![0.5], k: vec![10.0], m: 10, a: 1.0, alpha: 4.0 },
            scan: ScanConfig {
                n: vec![8, 16, 32, 64],
                gamma: vec![0.5, 1.0],
                k: 10.0,
                m: 100_000,
                a: 1.0,
                alpha: 4.0,
                p2_spread: 0.5,
                growth_nats: 4.0,
            },
            evolve: EvolveConfig {
                n: 16,
                gamma: 0.5,
                dt: 1e-3,
                t: 1.0,
                stride: 10,
                scheme: Scheme::Strang,
                solver: CouplingSolver::Exponential,
                substeps: 1,
                coupling: 1.0,
                initial: Initial::Gaussian,
                mass_tol: 1e-8,
                energy_tol: 1e-6,
            },
            invariance: InvarianceConfig {
                n: 8,
                gamma: 0.5,
                k: 10.0,
                t: 0.5,
                m: 20_000,
                dt: 0.05,
                coupling: 0.5,
                weighted: true,
                observables: ObservableSet::Standard,
                threshold: 3.0,
            },
            estimates: EstimatesSection { suites: Suite::ALL.to_vec(), params: EstimatesConfig::default(), inject_violation: false },
            norms: NormsConfig {
                kind: TensorKind::Lemma53,
                n: 16,
                n1: 16,
                n2: 0,
                s: 0.1,
                gamma: 0.2,
                t: 0.0,
                eps: 0.01,
                window_scale: 1.0,
                sign: Sign::Plus,
            },
        }
    }
}

fn err(line: usize, msg: impl Into<String>) -> CliError {
    CliError::Config { line, msg: msg.into() }
}

fn list<T>(v: &str, line: usize, one: impl Fn(&str) -> Option<T>) -> Result<Vec<T>, CliError> {
    let items: Vec<&str> = v.split(',').map(str::trim).filter(|s| !s.is_empty()).collect();
    if items.is_empty() {
        return Err(err(line, "empty list"));
    }
    items.into_iter().map(|s| one(s).ok_or_else(|| err(line, format!("cannot parse '{s}'")))).collect()
}

fn scalar<T>(v: &str, line: usize, one: impl Fn(&str) -> Option<T>) -> Result<T, CliError> {
    one(v.trim()).ok_or_else(|| err(line, format!("cannot parse '{}'", v.trim())))
}

fn f(s: &str) -> Option<f64> {
    s.parse().ok()
}
fn u32_(s: &str) -> Option<u32> {
    s.parse().ok()
}
fn usize_(s: &str) -> Option<usize> {
    // accept 1e5 style counts
    s.parse().ok().or_else(|| s.parse::<f64>().ok().filter(|x| x.fract() == 0.0 && *x >= 0.0 && *x < 1e15).map(|x| x as usize))
}
fn u64_(s: &str) -> Option<u64> {
    s.parse().ok()
}
fn bool_(s: &str) -> Option<bool> {
    s.parse().ok()
}

fn scheme(s: &str) -> Option<Scheme> {
    match s {
        "strang" => Some(Scheme::Strang),
        "rk4" => Some(Scheme::Rk4),
        _ => None,
    }
}
fn scheme_name(s: Scheme) -> &'static str {
    match s {
        Scheme::Strang => "strang",
        Scheme::Rk4 => "rk4",
    }
}
fn solver(s: &str) -> Option<CouplingSolver> {
    match s {
        "exponential" => Some(CouplingSolver::Exponential),
        "rk4" => Some(CouplingSolver::Rk4),
        _ => None,
    }
}
fn solver_name(s: CouplingSolver) -> &'static str {
    match s {
        CouplingSolver::Exponential => "exponential",
        CouplingSolver::Rk4 => "rk4",
    }
}
fn observables(s: &str) -> Option<ObservableSet> {
    match s {
        "standard" => Some(ObservableSet::Standard),
        "coupling" => Some(ObservableSet::Coupling),
        "both" => Some(ObservableSet::Both),
        _ => None,
    }
}
fn observables_name(o: ObservableSet) -> &'static str {
    match o {
        ObservableSet::Standard => "standard",
        ObservableSet::Coupling => "coupling",
        ObservableSet::Both => "both",
    }
}
fn sign(s: &str) -> Option<Sign> {
    match s {
        "+" | "plus" => Some(Sign::Plus),
        "-" | "minus" => Some(Sign::Minus),
        _ => None,
    }
}

fn join<T: std::fmt::Display>(v: &[T]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(", ")
}

impl RunConfig {
    /// Parses a config text on top of the defaults.
    pub fn parse(text: &str) -> Result<RunConfig, CliError> {
        let mut c = RunConfig::default();
        let mut section = String::new();
        let mut seen = BTreeSet::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let body = raw.split('#').next().unwrap().trim();
            if body.is_empty() {
                continue;
            }
            if let Some(rest) = body.strip_prefix('[') {
                let name = rest.strip_suffix(']').ok_or_else(|| err(line, "unterminated section header"))?.trim();
                if !["sample", "gibbs_scan", "evolve", "invariance", "estimates", "norms"].contains(&name) {
                    return Err(err(line, format!("unknown section [{name}]")));
                }
                section = name.to_string();
                continue;
            }
            let (key, value) = body.split_once('=').ok_or_else(|| err(line, "expected 'key = value'"))?;
            let (key, value) = (key.trim(), value.trim());
            if !seen.insert((section.clone(), key.to_string())) {
                return Err(err(line, format!("duplicate key '{key}'")));
            }
            c.set(&section, key, value, line)?;
        }
        Ok(c)
    }

    fn set(&mut self, section: &str, key: &str, v: &str, line: usize) -> Result<(), CliError> {
        let unknown = || Err(err(line, format!("unknown key '{key}' in [{section}]")));
        match section {
            "" => match key {
                "seed" => self.seed = scalar(v, line, u64_)?,
                _ => return unknown(),
            },
            "sample" => {
                let s = &mut self.sample;
                match key {
                    "N" => s.n = list(v, line, u32_)?,
                    "gamma" => s.gamma = list(v, line, f)?,
                    "K" => s.k = list(v, line, f)?,
                    "M" => s.m = scalar(v, line, usize_)?,
                    "A" => s.a = scalar(v, line, f)?,
                    "alpha" => s.alpha = scalar(v, line, f)?,
                    _ => return unknown(),
                }
            }
            "gibbs_scan" => {
                let s = &mut self.scan;
                match key {
                    "N" => s.n = list(v, line, u32_)?,
                    "gamma" => s.gamma = list(v, line, f)?,
                    "K" => s.k = scalar(v, line, f)?,
                    "M" => s.m = scalar(v, line, usize_)?,
                    "A" => s.a = scalar(v, line, f)?,
                    "alpha" => s.alpha = scalar(v, line, f)?,
                    "p2_spread" => s.p2_spread = scalar(v, line, f)?,
                    "growth_nats" => s.growth_nats = scalar(v, line, f)?,
                    _ => return unknown(),
                }
            }
            "evolve" => {
                let e = &mut self.evolve;
                match key {
                    "N" => e.n = scalar(v, line, u32_)?,
                    "gamma" => e.gamma = scalar(v, line, f)?,
                    "dt" => e.dt = scalar(v, line, f)?,
                    "T" => e.t = scalar(v, line, f)?,
                    "stride" => e.stride = scalar(v, line, usize_)?,
                    "scheme" => e.scheme = scalar(v, line, scheme)?,
                    "solver" => e.solver = scalar(v, line, solver)?,
                    "substeps" => e.substeps = scalar(v, line, u32_)?,
                    "coupling" => e.coupling = scalar(v, line, f)?,
                    "initial" => e.initial = if v == "gaussian" { Initial::Gaussian } else { Initial::File(v.to_string()) },
                    "mass_tol" => e.mass_tol = scalar(v, line, f)?,
                    "energy_tol" => e.energy_tol = scalar(v, line, f)?,
                    _ => return unknown(),
                }
            }
            "invariance" => {
                let s = &mut self.invariance;
                match key {
                    "N" => s.n = scalar(v, line, u32_)?,
                    "gamma" => s.gamma = scalar(v, line, f)?,
                    "K" => s.k = scalar(v, line, f)?,
                    "t" => s.t = scalar(v, line, f)?,
                    "M" => s.m = scalar(v, line, usize_)?,
                    "dt" => s.dt = scalar(v, line, f)?,
                    "coupling" => s.coupling = scalar(v, line, f)?,
                    "weighted" => s.weighted = scalar(v, line, bool_)?,
                    "observables" => s.observables = scalar(v, line, observables)?,
                    "threshold" => s.threshold = scalar(v, line, f)?,
                    _ => return unknown(),
                }
            }
            "estimates" => {
                let e = &mut self.estimates;
                let p = &mut e.params;
                match key {
                    "suites" => {
                        e.suites = if v.trim().is_empty() || v.trim() == "none" { Vec::new() } else { list(v, line, Suite::parse)? }
                    }
                    "inject_violation" => e.inject_violation = scalar(v, line, bool_)?,
                    "counting_N1" => p.counting_n1 = list(v, line, u32_)?,
                    "counting_samples" => p.counting_samples = scalar(v, line, usize_)?,
                    "counting_C" => p.counting_c = scalar(v, line, f)?,
                    "s" => p.s = scalar(v, line, f)?,
                    "gamma" => p.gamma = scalar(v, line, f)?,
                    "eps" => p.eps = scalar(v, line, f)?,
                    "tensor_N1" => p.tensor_n1 = list(v, line, u32_)?,
                    "tensor_C" => p.tensor_c = scalar(v, line, f)?,
                    "random_N1" => p.random_n1 = list(v, line, u32_)?,
                    "random_trials" => p.random_trials = scalar(v, line, usize_)?,
                    "random_C" => p.random_c = scalar(v, line, f)?,
                    "appendix_N2" => p.appendix_n2 = list(v, line, u32_)?,
                    "appendix_trials" => p.appendix_trials = scalar(v, line, usize_)?,
                    "schur_trials" => p.schur_trials = scalar(v, line, usize_)?,
                    "schur_dim" => p.schur_dim = scalar(v, line, usize_)?,
                    "schur_density" => p.schur_density = scalar(v, line, f)?,
                    "strichartz_N" => p.strichartz_n = list(v, line, u32_)?,
                    "strichartz_C" => p.strichartz_c = scalar(v, line, f)?,
                    _ => return unknown(),
                }
            }
            "norms" => {
                let n = &mut self.norms;
                match key {
                    "kind" => n.kind = scalar(v, line, |s| TensorKind::parse(s).ok())?,
                    "N" => n.n = scalar(v, line, u32_)?,
                    "N1" => n.n1 = scalar(v, line, u32_)?,
                    "N2" => n.n2 = scalar(v, line, u32_)?,
                    "s" => n.s = scalar(v, line, f)?,
                    "gamma" => n.gamma = scalar(v, line, f)?,
                    "t" => n.t = scalar(v, line, f)?,
                    "eps" => n.eps = scalar(v, line, f)?,
                    "window_scale" => n.window_scale = scalar(v, line, f)?,
                    "sign" => n.sign = scalar(v, line, sign)?,
                    _ => return unknown(),
                }
            }
            _ => unreachable!("sections are checked on entry"),
        }
        Ok(())
    }

    /// Every setting, in a fixed order, as a config text that parses back to `self`.
    pub fn canonical(&self) -> String {
        let mut o = String::new();
        let _ = writeln!(o, "seed = {}", self.seed);
        let s = &self.sample;
        let _ = writeln!(o, "\n[sample]\nN = {}\ngamma = {}\nK = {}\nM = {}\nA = {}\nalpha = {}", join(&s.n), join(&s.gamma), join(&s.k), s.m, s.a, s.alpha);
        let s = &self.scan;
        let _ = writeln!(
            o,
            "\n[gibbs_scan]\nN = {}\ngamma = {}\nK = {}\nM = {}\nA = {}\nalpha = {}\np2_spread = {}\ngrowth_nats = {}",
            join(&s.n),
            join(&s.gamma),
            s.k,
            s.m,
            s.a,
            s.alpha,
            s.p2_spread,
            s.growth_nats
        );
        let e = &self.evolve;
        let initial = match &e.initial {
            Initial::Gaussian => "gaussian".to_string(),
            Initial::File(p) => p.clone(),
        };
        let _ = writeln!(
            o,
            "\n[evolve]\nN = {}\ngamma = {}\ndt = {}\nT = {}\nstride = {}\nscheme = {}\nsolver = {}\nsubsteps = {}\ncoupling = {}\ninitial = {}\nmass_tol = {}\nenergy_tol = {}",
            e.n,
            e.gamma,
            e.dt,
            e.t,
            e.stride,
            scheme_name(e.scheme),
            solver_name(e.solver),
            e.substeps,
            e.coupling,
            initial,
            e.mass_tol,
            e.energy_tol
        );
        let s = &self.invariance;
        let _ = writeln!(
            o,
            "\n[invariance]\nN = {}\ngamma = {}\nK = {}\nt = {}\nM = {}\ndt = {}\ncoupling = {}\nweighted = {}\nobservables = {}\nthreshold = {}",
            s.n,
            s.gamma,
            s.k,
            s.t,
            s.m,
            s.dt,
            s.coupling,
            s.weighted,
            observables_name(s.observables),
            s.threshold
        );
        let e = &self.estimates;
        let p = &e.params;
        let suites = if e.suites.is_empty() { "none".to_string() } else { e.suites.iter().map(|s| s.name()).collect::<Vec<_>>().join(", ") };
        let _ = writeln!(
            o,
            "\n[estimates]\nsuites = {suites}\ninject_violation = {}\ncounting_N1 = {}\ncounting_samples = {}\ncounting_C = {}\ns = {}\ngamma = {}\neps = {}\ntensor_N1 = {}\ntensor_C = {}\nrandom_N1 = {}\nrandom_trials = {}\nrandom_C = {}\nappendix_N2 = {}\nappendix_trials = {}\nschur_trials = {}\nschur_dim = {}\nschur_density = {}\nstrichartz_N = {}\nstrichartz_C = {}",
            e.inject_violation,
            join(&p.counting_n1),
            p.counting_samples,
            p.counting_c,
            p.s,
            p.gamma,
            p.eps,
            join(&p.tensor_n1),
            p.tensor_c,
            join(&p.random_n1),
            p.random_trials,
            p.random_c,
            join(&p.appendix_n2),
            p.appendix_trials,
            p.schur_trials,
            p.schur_dim,
            p.schur_density,
            join(&p.strichartz_n),
            p.strichartz_c
        );
        let n = &self.norms;
        let _ = writeln!(
            o,
            "\n[norms]\nkind = {}\nN = {}\nN1 = {}\nN2 = {}\ns = {}\ngamma = {}\nt = {}\neps = {}\nwindow_scale = {}\nsign = {}",
            n.kind.name(),
            n.n,
            n.n1,
            n.n2,
            n.s,
            n.gamma,
            n.t,
            n.eps,
            n.window_scale,
            if n.sign == Sign::Plus { "+" } else { "-" }
        );
        o
    }

    /// SHA-256 of the tool version and the canonical text. Output paths and worker counts
    /// are not part of the config, so they never change results or digests.
    pub fn digest(&self) -> [u8; 32] {
        let mut h = Sha256::new();
        h.update(TOOL_VERSION.as_bytes());
        h.update(b"\n");
        h.update(self.canonical().as_bytes());
        h.finalize().into()
    }

    pub fn flow(&self) -> FlowConfig {
        let e = &self.evolve;
        FlowConfig { scheme: e.scheme, solver: e.solver, substeps: e.substeps, coupling: e.coupling, ..FlowConfig::new(e.n, e.gamma, e.dt) }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_round_trip() {
        let c = RunConfig::default();
        assert_eq!(RunConfig::parse(&c.canonical()).unwrap(), c);
        let text = "seed = 7\n[sample]\nN = 4, 8 # two cutoffs\ngamma = 0.25,0.5\nM = 1e2\n[estimates]\nsuites = none\n[norms]\nsign = -\n";
        let c = RunConfig::parse(text).unwrap();
        assert_eq!((c.seed, c.sample.n.clone(), c.sample.gamma.clone(), c.sample.m), (7, vec![4, 8], vec![0.25, 0.5], 100));
        assert!(c.estimates.suites.is_empty());
        assert_eq!(RunConfig::parse(&c.canonical()).unwrap(), c);
        assert_ne!(c.digest(), RunConfig::default().digest());
    }

    #[test]
    fn errors_carry_line_numbers() {
        let line_of = |t: &str| match RunConfig::parse(t) {
            Err(CliError::Config { line, .. }) => line,
            other => panic!("{other:?}"),
        };
        assert_eq!(line_of("seed = 1\n\n[sample]\nNN = 4\n"), 4);
        assert_eq!(line_of("[nope]\n"), 1);
        assert_eq!(line_of("seed = 1\nseed = 2\n"), 2);
        assert_eq!(line_of("[evolve]\nscheme = euler\n"), 2);
        assert_eq!(line_of("[sample]\nN = 4, x\n"), 2);
        assert_eq!(line_of("\n\ngarbage\n"), 3);
        assert_eq!(line_of("[sample\n"), 1);
        // keys are per section
        assert_eq!(line_of("[sample]\ndt = 0.1\n"), 2);
    }
}
