use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;
use zy_cli::{RunConfig, EXIT_GATE, EXIT_OK, EXIT_USAGE};
use zy_core::snapshot::read_state;

fn zy(dir: &Path, args: &[&str], config: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_zy"));
    cmd.args(args).arg("--out").arg(dir.join("out"));
    if let Some(text) = config {
        let p = dir.join("run.toml");
        std::fs::write(&p, text).unwrap();
        cmd.arg("--config").arg(p);
    }
    cmd.output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn read(dir: &Path, name: &str) -> String {
    std::fs::read_to_string(dir.join("out").join(name)).unwrap()
}

fn data_lines(csv: &str) -> Vec<&str> {
    csv.lines().filter(|l| !l.starts_with('#')).skip(1).collect()
}

const SMALL_SAMPLE: &str = "seed = 3\n[sample]\nN = 2\ngamma = 0.5\nK = 10\nM = 5\n";

#[test]
fn config_errors_exit_one_with_line() {
    let d = TempDir::new().unwrap();
    let o = zy(d.path(), &["sample"], Some("seed = 1\n[sample]\nN = 4\nbogus = 2\n"));
    assert_eq!(code(&o), EXIT_USAGE);
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 4"), "{}", String::from_utf8_lossy(&o.stderr));
    let o = zy(d.path(), &["sample"], Some("[sample]\nM = many\n"));
    assert_eq!(code(&o), EXIT_USAGE);
    let o = zy(d.path(), &["frobnicate"], None);
    assert_eq!(code(&o), EXIT_USAGE);
}

#[test]
fn sample_is_deterministic_and_manifest_reruns() {
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    assert_eq!(code(&zy(a.path(), &["sample"], Some(SMALL_SAMPLE))), EXIT_OK);
    assert_eq!(code(&zy(b.path(), &["sample"], Some(SMALL_SAMPLE))), EXIT_OK);
    let f = "ensemble_N2_gamma0.5_K10.zye";
    assert_eq!(std::fs::read(a.path().join("out").join(f)).unwrap(), std::fs::read(b.path().join("out").join(f)).unwrap());
    assert_eq!(read(a.path(), "sample.csv"), read(b.path(), "sample.csv"));

    // the manifest is a config that reproduces the run
    let manifest = read(a.path(), "manifest_sample.txt");
    let c = TempDir::new().unwrap();
    assert_eq!(code(&zy(c.path(), &["sample"], Some(&manifest))), EXIT_OK);
    assert_eq!(read(c.path(), "manifest_sample.txt"), manifest);
    assert_eq!(read(c.path(), "sample.csv"), read(a.path(), "sample.csv"));
    let digest = hex::encode(RunConfig::parse(SMALL_SAMPLE).unwrap().digest());
    assert!(manifest.contains(&digest));
    assert!(read(a.path(), "sample.csv").starts_with(&format!("# config_digest = {digest}")));
}

#[test]
fn seed_flag_overrides_config() {
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    zy(a.path(), &["sample"], Some(SMALL_SAMPLE));
    zy(b.path(), &["sample", "--seed", "4"], Some(SMALL_SAMPLE));
    assert_ne!(read(a.path(), "sample.csv"), read(b.path(), "sample.csv"));
    assert!(read(b.path(), "manifest_sample.txt").contains("seed = 4"));
}

#[test]
fn workers_do_not_change_outputs() {
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    zy(a.path(), &["sample", "--workers", "1"], Some(SMALL_SAMPLE));
    zy(b.path(), &["sample", "--workers", "3"], Some(SMALL_SAMPLE));
    assert_eq!(read(a.path(), "manifest_sample.txt"), read(b.path(), "manifest_sample.txt"));
}

#[test]
fn sweep_is_a_cartesian_product() {
    let d = TempDir::new().unwrap();
    let o = zy(d.path(), &["sample"], Some("[sample]\nN = 2, 3\ngamma = 0.25, 0.5\nK = 10\nM = 3\n"));
    assert_eq!(code(&o), EXIT_OK);
    let manifest = read(d.path(), "manifest_sample.txt");
    for n in [2, 3] {
        for g in ["0.25", "0.5"] {
            let f = format!("ensemble_N{n}_gamma{g}_K10.zye");
            assert!(d.path().join("out").join(&f).exists(), "{f}");
            assert!(manifest.contains(&format!("# output {f} sha256=")), "{f}");
        }
    }
    assert_eq!(data_lines(&read(d.path(), "sample.csv")).len(), 4);
}

const EVOLVE: &str = "seed = 5\n[evolve]\nN = 4\ngamma = 0.5\ndt = 0.001\nstride = 1\nmass_tol = 1e-8\n";

#[test]
fn evolve_zero_time_is_one_row() {
    let d = TempDir::new().unwrap();
    let o = zy(d.path(), &["evolve"], Some(&format!("{EVOLVE}T = 0\n")));
    assert_eq!(code(&o), EXIT_OK, "{}", String::from_utf8_lossy(&o.stdout));
    assert_eq!(data_lines(&read(d.path(), "trajectory.csv")).len(), 1);
}

#[test]
fn evolve_gate_follows_tolerance() {
    let d = TempDir::new().unwrap();
    let tight = zy(d.path(), &["evolve"], Some(&format!("{EVOLVE}T = 0.2\nenergy_tol = 1e-14\n")));
    assert_eq!(code(&tight), EXIT_GATE);
    assert!(String::from_utf8_lossy(&tight.stdout).contains("GATE FAILURE: energy drift"));
    let loose = zy(d.path(), &["evolve"], Some(&format!("{EVOLVE}T = 0.2\nenergy_tol = 1e-2\n")));
    assert_eq!(code(&loose), EXIT_OK, "{}", String::from_utf8_lossy(&loose.stdout));
}

#[test]
fn evolve_restarts_from_final_state() {
    let cfg = |t: &str, initial: &str| format!("{EVOLVE}T = {t}\nenergy_tol = 1\ninitial = {initial}\n");
    let full = TempDir::new().unwrap();
    zy(full.path(), &["evolve"], Some(&cfg("0.1", "gaussian")));
    let first = TempDir::new().unwrap();
    zy(first.path(), &["evolve"], Some(&cfg("0.05", "gaussian")));
    let mid = first.path().join("out").join("final_state.zys");
    let second = TempDir::new().unwrap();
    let o = zy(second.path(), &["evolve"], Some(&cfg("0.05", mid.to_str().unwrap())));
    assert_eq!(code(&o), EXIT_OK, "{}", String::from_utf8_lossy(&o.stderr));

    let load = |d: &TempDir| read_state(&mut std::fs::read(d.path().join("out").join("final_state.zys")).unwrap().as_slice()).unwrap().0;
    let (a, b) = (load(&full), load(&second));
    let max_diff = a.u.coeffs().iter().zip(b.u.coeffs()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max);
    assert!(max_diff <= 1e-12, "restart differs by {max_diff:e}");
}

#[test]
fn evolve_rejects_mismatched_initial_state() {
    let d = TempDir::new().unwrap();
    zy(d.path(), &["evolve"], Some(&format!("{EVOLVE}T = 0\n")));
    let state = d.path().join("out").join("final_state.zys");
    let e = TempDir::new().unwrap();
    let o = zy(e.path(), &["evolve"], Some(&format!("[evolve]\nN = 6\nT = 0\ninitial = {}\n", state.display())));
    assert_eq!(code(&o), EXIT_USAGE);
}

#[test]
fn invariance_at_time_zero_has_zero_z() {
    let d = TempDir::new().unwrap();
    let o = zy(d.path(), &["invariance"], Some("[invariance]\nN = 1\nK = 1\nt = 0\nM = 1000\n"));
    assert_eq!(code(&o), EXIT_OK, "{}", String::from_utf8_lossy(&o.stdout));
    let csv = read(d.path(), "invariance.csv");
    assert!(csv.lines().any(|l| l.ends_with(",z")));
    for l in data_lines(&csv) {
        assert!(l.starts_with('"'), "{l}");
        let z: f64 = l.rsplit(',').next().unwrap().parse().unwrap();
        assert_eq!(z, 0.0, "{l}");
    }
}

#[test]
fn empty_estimates_suite_is_header_only() {
    let d = TempDir::new().unwrap();
    let o = zy(d.path(), &["verify-estimates"], Some("[estimates]\nsuites = none\n"));
    assert_eq!(code(&o), EXIT_OK);
    assert!(data_lines(&read(d.path(), "estimates.csv")).is_empty());
}

#[test]
fn injected_violation_fails_the_gate() {
    let d = TempDir::new().unwrap();
    let o = zy(d.path(), &["verify-estimates"], Some("[estimates]\nsuites = counting\ninject_violation = true\n"));
    assert_eq!(code(&o), EXIT_GATE);
    assert!(String::from_utf8_lossy(&o.stdout).contains("GATE FAILURE: injected"));
    let o = zy(d.path(), &["verify-estimates"], Some("[estimates]\nsuites = counting, divisors\n"));
    assert_eq!(code(&o), EXIT_OK, "{}", String::from_utf8_lossy(&o.stdout));
}

#[test]
fn norms_lists_six_partitions() {
    let d = TempDir::new().unwrap();
    let o = zy(d.path(), &["norms"], Some("[norms]\nkind = lemma5_3\nN = 8\nN1 = 8\n"));
    assert_eq!(code(&o), EXIT_OK, "{}", String::from_utf8_lossy(&o.stdout));
    assert_eq!(data_lines(&read(d.path(), "norms.csv")).len(), 6);
}
