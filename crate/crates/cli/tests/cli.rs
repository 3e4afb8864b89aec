use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::time::Instant;

use asyflexa::engine::load_summary;
use asyflexa::problem::check_feasibility;
use asyflexa::ProblemSpec;
use tempfile::TempDir;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_asyflexa"));
    c.env_remove("ASYFLEXA_THREADS");
    c
}

fn ok(args: &[&str]) -> Output {
    let out = bin().args(args).output().unwrap();
    assert!(out.status.success(), "{args:?}\n{}", String::from_utf8_lossy(&out.stderr));
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn gen(dir: &TempDir, name: &str, kind: &str, n: usize, blocks: usize, seed: u64) -> PathBuf {
    let p = dir.path().join(name);
    ok(&["generate", "--kind", kind, "--n", &n.to_string(), "--blocks", &blocks.to_string(), "--seed", &seed.to_string(), "-o", s(&p)]);
    p
}

#[test]
fn generate_is_deterministic() {
    let d = TempDir::new().unwrap();
    for kind in ["lasso-dense", "lasso-sparse-rows", "dc-least-squares", "ncc-ball-qp"] {
        let a = gen(&d, "a.json", kind, 30, 3, 11);
        let a = std::fs::read(a).unwrap();
        let b = gen(&d, "b.json", kind, 30, 3, 11);
        assert_eq!(a, std::fs::read(b).unwrap(), "{kind}");
        let c = gen(&d, "c.json", kind, 30, 3, 12);
        assert_ne!(a, std::fs::read(c).unwrap(), "{kind}");
    }
}

#[test]
fn sparse_fraction_zero_is_dense() {
    let d = TempDir::new().unwrap();
    let a = d.path().join("a.json");
    ok(&["generate", "--kind", "lasso-sparse-rows", "--n", "24", "--blocks", "4", "--seed", "5", "--sparse-fraction", "0", "-o", s(&a)]);
    let b = gen(&d, "b.json", "lasso-dense", 24, 4, 5);
    let mut a: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(a).unwrap()).unwrap();
    let mut b: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(b).unwrap()).unwrap();
    a["name"] = "x".into();
    b["name"] = "x".into();
    assert_eq!(a, b);
}

#[test]
fn ncc_start_is_feasible() {
    let d = TempDir::new().unwrap();
    for seed in 0..5 {
        let p = gen(&d, "p.json", "ncc-ball-qp", 40, 5, seed);
        let spec = ProblemSpec::load(&p).unwrap();
        let rep = check_feasibility(&spec, &spec.start_point(), 1e-12);
        assert!(rep.feasible, "seed {seed}: {}", rep.max_violation);
    }
}

#[test]
fn simulated_run_is_reproducible_and_auto_gamma() {
    let d = TempDir::new().unwrap();
    let p = gen(&d, "p.json", "lasso-dense", 60, 6, 2);
    let run = |name: &str| {
        let o = d.path().join(name);
        ok(&["run", "--problem", s(&p), "--scheduler", "shared-uniform", "--delta", "3", "--budget", "1500", "--seed", "9", "--out", s(&o)]);
        o
    };
    let a = run("a");
    let b = run("b");
    let ta = std::fs::read(a.with_extension("trace.csv")).unwrap();
    assert_eq!(ta, std::fs::read(b.with_extension("trace.csv")).unwrap());
    assert_eq!(
        std::fs::read(a.with_extension("events.csv")).unwrap(),
        std::fs::read(b.with_extension("events.csv")).unwrap()
    );
    let sum = load_summary(&a.with_extension("summary.json")).unwrap();
    assert!(sum.run.gamma_auto);
    assert!((sum.run.gamma - (0.9 * sum.run.gamma_bound).min(1.0)).abs() <= 1e-15);
    assert_eq!(sum.iterations, 1500);

    let out = ok(&["analyze", "descent", s(&a)]);
    assert!(String::from_utf8_lossy(&out.stdout).contains("violations: 0"));
}

#[test]
fn cyclic_trace_has_no_delay() {
    let d = TempDir::new().unwrap();
    let p = gen(&d, "p.json", "dc-least-squares", 30, 5, 1);
    let o = d.path().join("cyc");
    ok(&["run", "--problem", s(&p), "--budget", "200", "--out", s(&o)]);
    let rep = d.path().join("delays.json");
    let out = ok(&["analyze", "delays", s(&o), "-o", s(&rep)]);
    assert!(String::from_utf8_lossy(&out.stdout).contains("max delay 0 "));
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(rep).unwrap()).unwrap();
    assert_eq!(v[0]["max_delay"], 0);
}

#[test]
fn kepsilon_over_seeds_is_monotone() {
    let d = TempDir::new().unwrap();
    let p = gen(&d, "p.json", "lasso-dense", 80, 8, 4);
    let mut prefixes = Vec::new();
    for seed in 0..10 {
        let o = d.path().join(format!("r{seed}"));
        ok(&[
            "run", "--problem", s(&p), "--scheduler", "shared-uniform", "--delta", "2", "--budget", "200000",
            "--target-stationarity", "1e-4", "--metric-every", "8", "--seed", &seed.to_string(), "--out", s(&o),
        ]);
        prefixes.push(o.to_str().unwrap().to_owned());
    }
    let csv = d.path().join("k.csv");
    let mut args = vec!["analyze", "kepsilon", "--eps", "1e-1,1e-2,1e-3,1e-4", "-o", s(&csv)];
    args.extend(prefixes.iter().map(String::as_str));
    ok(&args);
    let text = std::fs::read_to_string(csv).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("eps,K_eps,mean_sq,bound"));
    let ks: Vec<u64> = lines.map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    assert_eq!(ks.len(), 4);
    assert!(ks.windows(2).all(|w| w[0] <= w[1]), "{ks:?}");
}

#[test]
fn threaded_single_worker_has_zero_delays() {
    let d = TempDir::new().unwrap();
    let p = gen(&d, "p.json", "lasso-dense", 60, 6, 3);
    let o = d.path().join("t");
    ok(&["run", "--problem", s(&p), "--engine", "threaded", "--workers", "1", "--budget", "3000", "--out", s(&o)]);
    let sum = load_summary(&o.with_extension("summary.json")).unwrap();
    assert_eq!(sum.delays.max_delay, 0);
    assert_eq!(sum.delays.average_delay, 0.0);
    assert_eq!(sum.iterations, 3000);
}

#[test]
fn thread_cap_from_environment() {
    let d = TempDir::new().unwrap();
    let p = gen(&d, "p.json", "lasso-dense", 40, 4, 3);
    let o = d.path().join("t");
    let out = bin()
        .env("ASYFLEXA_THREADS", "1")
        .args(["run", "--problem", s(&p), "--engine", "threaded", "--workers", "4", "--budget", "500", "--out", s(&o)])
        .output()
        .unwrap();
    assert!(out.status.success());
    let sum = load_summary(&o.with_extension("summary.json")).unwrap();
    assert_eq!(sum.threaded.unwrap().workers, 1);
}

#[test]
fn exit_codes() {
    let d = TempDir::new().unwrap();
    let p = gen(&d, "p.json", "lasso-dense", 40, 4, 3);
    let o = d.path().join("c");
    let censored = bin()
        .args(["run", "--problem", s(&p), "--budget", "10", "--target-stationarity", "1e-12", "--out", s(&o)])
        .output()
        .unwrap();
    assert_eq!(censored.status.code(), Some(2));
    // outputs are still written
    assert!(load_summary(&o.with_extension("summary.json")).unwrap().censored);

    let missing = bin().args(["run", "--problem", s(&d.path().join("none.json"))]).output().unwrap();
    assert_eq!(missing.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&missing.stderr).starts_with("error: "));

    let bad_gamma = bin().args(["run", "--problem", s(&p), "--gamma", "1.5", "--out", s(&o)]).output().unwrap();
    assert_ne!(bad_gamma.status.code(), Some(0));
}

#[test]
fn every_generator_round_trips_quickly() {
    let d = TempDir::new().unwrap();
    let start = Instant::now();
    for kind in ["lasso-dense", "lasso-sparse-rows", "dc-least-squares", "ncc-ball-qp"] {
        let p = gen(&d, &format!("{kind}.json"), kind, 50, 5, 7);
        let o = d.path().join(kind);
        let mut args = vec!["run", "--problem", s(&p), "--scheduler", "shared-uniform", "--delta", "2", "--budget", "2000"];
        if kind == "ncc-ball-qp" {
            args.push("--ncc");
        }
        args.extend(["--out", s(&o)]);
        ok(&args);
        let sum = load_summary(&o.with_extension("summary.json")).unwrap();
        assert!(sum.f_final <= sum.f0, "{kind}");
        assert!(sum.max_feasibility_violation <= 1e-9, "{kind}");
        ok(&["analyze", "descent", s(&o)]);
        let orc = d.path().join(format!("{kind}.oracle.json"));
        ok(&["oracle", "--problem", s(&p), "--tol", "1e-6", "-o", s(&orc)]);
    }
    assert!(start.elapsed().as_secs() < 60);
}
