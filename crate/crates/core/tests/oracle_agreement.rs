use asyflexa::engine::{run, RunConfig};
use asyflexa::generate::{generate, GeneratorKind, GeneratorSpec};
use asyflexa::metrics::{stationarity, stationarity_ncc};
use asyflexa::oracle::reference_solve;
use asyflexa::scheduler::{SchedulerConfig, SchedulerKind};

#[test]
fn engine_and_oracle_agree_on_small_instances() {
    let tol = 1e-7;
    let kinds = [GeneratorKind::LassoDense, GeneratorKind::LassoSparseRows, GeneratorKind::DcLeastSquares];
    for seed in 0..50u64 {
        let g = kinds[seed as usize % 3];
        let n = 20 + (seed as usize * 7) % 40;
        let blocks = 2 + seed as usize % 5;
        let spec = generate(&GeneratorSpec::new(g, n, blocks, 1000 + seed)).unwrap();
        let sc = SchedulerConfig::new(SchedulerKind::SharedUniform, blocks).with_delta(seed as usize % 4);
        let mut cfg = RunConfig::simulated(sc, 5_000_000);
        cfg.seed = seed;
        cfg.target_stationarity = Some(tol);
        let e = run(&spec, &cfg).unwrap();
        assert!(e.summary.reached_target, "seed {seed}: engine censored");
        let o = reference_solve(&spec, tol).unwrap();
        assert!(!o.censored, "seed {seed}: oracle censored");
        assert!(stationarity(&spec, &e.trace.final_x).unwrap() <= 10.0 * tol);
        assert!(stationarity(&spec, &o.x).unwrap() <= 10.0 * tol);
        if g != GeneratorKind::DcLeastSquares {
            // convex: both points are tol-stationary, so their values are within
            // O(tol · distance) of the common optimum
            let diff = (e.summary.f_final - o.objective).abs();
            assert!(diff <= 1e-5 * (1.0 + o.objective.abs()), "seed {seed}: {diff:e}");
        }
    }
}

#[test]
fn constrained_runs_reach_oracle_accuracy() {
    let tol = 1e-6;
    for seed in 0..5u64 {
        let spec = generate(&GeneratorSpec::new(GeneratorKind::NccBallQp, 30, 5, 2000 + seed)).unwrap();
        let sc = SchedulerConfig::new(SchedulerKind::SharedUniform, 5).with_delta(2);
        let mut cfg = RunConfig::simulated(sc, 2_000_000);
        cfg.seed = seed;
        cfg.ncc = true;
        cfg.target_stationarity = Some(tol);
        cfg.metric_every = Some(25);
        let e = run(&spec, &cfg).unwrap();
        assert!(e.summary.reached_target, "seed {seed}: engine censored");
        let o = reference_solve(&spec, tol).unwrap();
        assert!(!o.censored, "seed {seed}: oracle censored");
        // nonconvex: the two may stop at different stationary points
        assert!(stationarity_ncc(&spec, &e.trace.final_x).unwrap() <= 10.0 * tol);
        assert!(stationarity_ncc(&spec, &o.x).unwrap() <= 10.0 * tol);
    }
}
