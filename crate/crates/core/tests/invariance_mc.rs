use zy_core::dynamics::FlowConfig;
use zy_core::gibbs::GibbsParams;
use zy_core::invariance::{
    counterexample_probe, coupling_sensitive_observables, standard_observables, test_invariance, Field, Observable,
};
use zy_core::rng::GaussianSampler;
use zy_core::spectral::FreqIndex;

fn params() -> GibbsParams {
    GibbsParams::new(4, 0.5, 10.0).unwrap()
}

fn flow(coupling: f64) -> FlowConfig {
    FlowConfig { coupling, ..FlowConfig::new(4, 0.5, 0.05) }
}

fn all_observables() -> Vec<Observable> {
    [standard_observables(), coupling_sensitive_observables(0.5)].concat()
}

#[test]
fn reports_are_deterministic() {
    let s = GaussianSampler::new(3, 0);
    let a = test_invariance(&params(), 0.3, &flow(0.5), &standard_observables(), 1000, &s).unwrap();
    let b = test_invariance(&params(), 0.3, &flow(0.5), &standard_observables(), 1000, &s).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.csv(), b.csv());
    assert!(a.rows.iter().all(|r| r.z.is_finite()));
}

#[test]
fn zero_time_gives_zero_z_for_both_pipelines() {
    let s = GaussianSampler::new(4, 0);
    let w = test_invariance(&params(), 0.0, &flow(1.0), &all_observables(), 1000, &s).unwrap();
    let c = counterexample_probe(&params(), 0.0, &flow(1.0), &all_observables(), 1000, &s).unwrap();
    assert!(w.rows.iter().chain(&c.rows).all(|r| r.z == 0.0));
}

#[test]
fn gaussian_is_invariant_under_the_linear_flow() {
    let rep = counterexample_probe(&params(), 0.5, &flow(0.0), &all_observables(), 4000, &GaussianSampler::new(5, 0)).unwrap();
    println!("{}", rep.summary());
    assert!(rep.all_below(3.0), "max |z| = {}", rep.max_abs_z());
}

#[test]
fn doubling_m_scales_z_like_root_two() {
    let obs = coupling_sensitive_observables(0.5);
    let run = |m: usize| counterexample_probe(&params(), 1.0, &flow(1.0), &obs, m, &GaussianSampler::new(6, 0)).unwrap();
    let (a, b) = (run(4000), run(8000));
    let k = (0..obs.len()).max_by(|i, j| a.rows[*i].z.abs().total_cmp(&a.rows[*j].z.abs())).unwrap();
    let r = b.rows[k].z / a.rows[k].z;
    println!("{}: z = {:.2} at M=4000, {:.2} at M=8000, ratio {r:.3}", a.rows[k].name, a.rows[k].z, b.rows[k].z);
    assert!(a.rows[k].z.abs() >= 3.0, "the control must detect the broken density");
    assert!((r - 2f64.sqrt()).abs() < 0.35, "ratio {r}");
}

#[test]
fn gauge_unsafe_observables_are_rejected() {
    let s = GaussianSampler::new(7, 0);
    for bad in [
        Observable::ModeRe { field: Field::U, n: FreqIndex::new(1, 0) },
        Observable::ModeAbsSq { field: Field::W, n: FreqIndex::ZERO },
    ] {
        assert!(test_invariance(&params(), 0.1, &flow(1.0), &[bad], 1000, &s).is_err());
    }
}
