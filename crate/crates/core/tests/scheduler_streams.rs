use asyflexa::scheduler::{make_scheduler, DelayLaw, SchedulerConfig, SchedulerKind, TraceValidator};

fn config(kind: SchedulerKind) -> SchedulerConfig {
    let workers = match kind {
        SchedulerKind::RandomParallel | SchedulerKind::PartitionedShuffle => 4,
        _ => 1,
    };
    SchedulerConfig::new(kind, 20).with_delta(6).with_workers(workers).with_seed(17)
}

#[test]
fn million_events_per_kind_pass_validation() {
    for kind in SchedulerKind::ALL {
        for law in [DelayLaw::Uniform, DelayLaw::Constant, DelayLaw::Geometric { p: 0.3 }] {
            let cfg = config(kind).with_delay_law(law.clone());
            let mut v = TraceValidator::new(&cfg);
            let n = if matches!(law, DelayLaw::Uniform) { 1_000_000 } else { 100_000 };
            for e in make_scheduler(&cfg).unwrap().take(n) {
                v.push(&e);
            }
            let rep = v.finish();
            assert_eq!(rep.events, n as u64);
            assert_eq!((rep.c1_violations, rep.c3_violations, rep.order_violations), (0, 0, 0), "{kind} {law:?}");
            assert!(rep.max_delay <= 6);
            assert!(rep.c2.flagged.is_empty(), "{kind} {law:?}: {:?}", rep.c2);
        }
    }
}

#[test]
fn same_seed_same_stream() {
    for kind in SchedulerKind::ALL {
        let a: Vec<_> = make_scheduler(&config(kind)).unwrap().take(20_000).collect();
        let b: Vec<_> = make_scheduler(&config(kind)).unwrap().take(20_000).collect();
        assert_eq!(a, b);
        let c: Vec<_> = make_scheduler(&config(kind).with_seed(18)).unwrap().take(20_000).collect();
        if kind != SchedulerKind::Cyclic {
            assert_ne!(a, c, "{kind}");
        }
    }
}

#[test]
fn pinned_prefix() {
    // the generator algorithm is fixed, so these values hold on every platform
    let cfg = SchedulerConfig::new(SchedulerKind::SharedUniform, 5).with_delta(3).with_seed(1);
    let got: Vec<(usize, Vec<usize>)> = make_scheduler(&cfg).unwrap().take(6).map(|e| (e.i, e.d)).collect();
    let again: Vec<(usize, Vec<usize>)> = make_scheduler(&cfg).unwrap().take(6).map(|e| (e.i, e.d)).collect();
    assert_eq!(got, again);
    assert_eq!(got, PINNED.iter().map(|(i, d)| (*i, d.to_vec())).collect::<Vec<_>>());
}

const PINNED: [(usize, [usize; 5]); 6] = [
    (2, [0, 0, 0, 0, 0]),
    (3, [1, 0, 1, 0, 1]),
    (2, [2, 0, 0, 1, 1]),
    (1, [3, 0, 3, 3, 0]),
    (1, [1, 0, 1, 0, 0]),
    (0, [0, 2, 1, 0, 0]),
];

#[test]
fn shared_uniform_frequencies_within_three_sigma() {
    let n_blocks = 10;
    let m = 100_000;
    let cfg = SchedulerConfig::new(SchedulerKind::SharedUniform, n_blocks).with_delta(4).with_seed(99);
    let mut counts = vec![0usize; n_blocks];
    for e in make_scheduler(&cfg).unwrap().take(m) {
        counts[e.i] += 1;
    }
    let p = 1.0 / n_blocks as f64;
    let sigma = (p * (1.0 - p) / m as f64).sqrt();
    for (i, c) in counts.iter().enumerate() {
        let f = *c as f64 / m as f64;
        assert!((f - p).abs() <= 3.0 * sigma, "block {i}: frequency {f}");
    }
}
