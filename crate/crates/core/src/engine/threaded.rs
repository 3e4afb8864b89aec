//! Shared-memory asynchronous execution.
//!
//! Each block lives in a seqlock-protected slot. A worker locks the block it
//! updates, reads every block without any global lock (so the assembled view
//! may mix iterations), computes the update, takes the next iteration index
//! from a global counter, writes the block and appends the index to the
//! block's write log. Delays are reconstructed afterwards from the block
//! versions each worker saw and the write logs.

use std::hash::{DefaultHasher, Hash, Hasher};
use std::sync::atomic::{fence, AtomicBool, AtomicU64, Ordering};
use std::sync::{mpsc, Mutex};
use std::time::{Duration, Instant};

use super::sim::{simulate, MetricPlan, Stepper};
use super::{resolve_run, Access, ResolvedRun, RunConfig, StepRecord, ThreadedDiagnostics, Trace};
use crate::error::{Error, Result};
use crate::problem::{check_feasibility, ProblemSpec};
use crate::rng;
use crate::scheduler::{validate_trace, ScheduleEvent, SchedulerConfig, SchedulerKind, ValidationReport};
use crate::surrogate::SurrogateFactory;

fn checksum(v: &[f64]) -> u64 {
    let mut h = DefaultHasher::new();
    for x in v {
        x.to_bits().hash(&mut h);
    }
    h.finish()
}

struct Slot {
    /// Even when stable; `seq / 2` writes have completed.
    seq: AtomicU64,
    checksum: AtomicU64,
    data: Box<[AtomicU64]>,
    /// Iteration index of every write, in order. Held from the read of the
    /// block to its write by the worker updating it.
    log: Mutex<Vec<u64>>,
}

impl Slot {
    fn new(v: &[f64]) -> Self {
        Slot {
            seq: AtomicU64::new(0),
            checksum: AtomicU64::new(checksum(v)),
            data: v.iter().map(|x| AtomicU64::new(x.to_bits())).collect(),
            log: Mutex::new(Vec::new()),
        }
    }

    /// Consistent copy of the block; returns its version and whether the
    /// stored checksum disagrees with the copied data.
    fn read(&self, out: &mut [f64]) -> (u64, bool) {
        loop {
            let s1 = self.seq.load(Ordering::Acquire);
            if s1 & 1 == 1 {
                std::hint::spin_loop();
                continue;
            }
            for (o, a) in out.iter_mut().zip(self.data.iter()) {
                *o = f64::from_bits(a.load(Ordering::Relaxed));
            }
            let c = self.checksum.load(Ordering::Relaxed);
            fence(Ordering::Acquire);
            if self.seq.load(Ordering::Relaxed) == s1 {
                return (s1 / 2, c != checksum(out));
            }
        }
    }

    /// Caller holds `log`.
    fn write(&self, v: &[f64]) {
        let s = self.seq.load(Ordering::Relaxed);
        self.seq.store(s + 1, Ordering::Relaxed);
        fence(Ordering::Release);
        for (a, x) in self.data.iter().zip(v) {
            a.store(x.to_bits(), Ordering::Relaxed);
        }
        self.checksum.store(checksum(v), Ordering::Relaxed);
        self.seq.store(s + 2, Ordering::Release);
    }
}

struct Observed {
    k: u64,
    worker: usize,
    i: usize,
    versions: Vec<u64>,
    step_norm: f64,
    wall_ns: u64,
}

enum Msg {
    Step(Observed),
    Done { torn: u64 },
    Failed(Error),
}

/// Canonical delays: the smallest `d_j` with `x_j^{k−d_j}` equal to the value read.
/// Version `v` of block `j` is the value after its first `v` writes; it stays
/// current until write `v` (0-based) at iteration `log_j[v]`.
pub fn reconstruct_delays(k: u64, versions: &[u64], logs: &[Vec<u64>]) -> Vec<usize> {
    versions
        .iter()
        .zip(logs)
        .map(|(&v, log)| match log.get(v as usize) {
            Some(&next) if next < k => (k - next) as usize,
            _ => 0,
        })
        .collect()
}

#[derive(Debug)]
pub struct ThreadedOutput {
    /// Per-step records; objective, Lyapunov and stationarity columns come
    /// from the replay when it ran, and are NaN otherwise.
    pub trace: Trace,
    pub events: Vec<ScheduleEvent>,
    pub resolved: ResolvedRun,
    pub lyapunov_delta: usize,
    pub wall_seconds: f64,
    pub max_feasibility_violation: f64,
    pub validation: ValidationReport,
    pub diagnostics: ThreadedDiagnostics,
    /// Final iterate of the threaded run itself.
    pub threaded_final: Vec<f64>,
    pub aborted: Option<Error>,
}

/// Scheduler settings describing the block selection of a threaded run, for validation.
pub fn threaded_schedule_config(cfg: &RunConfig, n_blocks: usize) -> SchedulerConfig {
    let kind = match cfg.workers.access {
        Access::Partitioned => SchedulerKind::PartitionedShuffle,
        Access::Shared => SchedulerKind::SharedUniform,
    };
    SchedulerConfig::new(kind, n_blocks).with_workers(cfg.workers.count).with_delta(cfg.delta_cap).with_seed(cfg.seed)
}

enum Picker {
    Own { blocks: Vec<usize>, pos: usize },
    Shared { n: usize },
}

impl Picker {
    fn next(&mut self, rng: &mut rng::Prng) -> usize {
        match self {
            Picker::Own { blocks, pos } => {
                if *pos == blocks.len() {
                    rng::shuffle(rng, blocks);
                    *pos = 0;
                }
                *pos += 1;
                blocks[*pos - 1]
            }
            Picker::Shared { n } => rng::index(rng, *n),
        }
    }
}

/// Runs real worker threads on shared memory.
pub fn run_threaded(spec: &ProblemSpec, cfg: &RunConfig) -> Result<ThreadedOutput> {
    let mut cfg = cfg.clone();
    cfg.engine = super::EngineKind::Threaded;
    let x0 = spec.start_point();
    if cfg.ncc && !check_feasibility(spec, &x0, 1e-9).feasible {
        return Err(Error::InvariantViolation("constrained run needs a feasible start".into()));
    }
    let factory = SurrogateFactory::new(spec, cfg.surrogate.kind, cfg.surrogate.beta_for(spec))?;
    let resolved = resolve_run(spec, &cfg, &factory)?;
    let stepper = Stepper::from_factory(factory, resolved.gamma, cfg.inner);
    let part = spec.partition();
    let nb = spec.n_blocks();
    let pickers: Vec<Picker> = match cfg.workers.access {
        Access::Partitioned => threaded_schedule_config(&cfg, nb)
            .effective_partitions()
            .into_iter()
            .map(|blocks| {
                let pos = blocks.len();
                Picker::Own { blocks, pos }
            })
            .collect(),
        Access::Shared => (0..cfg.workers.count).map(|_| Picker::Shared { n: nb }).collect(),
    };
    let n_workers = pickers.len();
    let plan = MetricPlan::from_config(&cfg, spec);

    let slots: Vec<Slot> = (0..nb).map(|j| Slot::new(part.block(&x0, j))).collect();
    let counter = AtomicU64::new(0);
    let stop = AtomicBool::new(false);
    let budget = cfg.budget;
    let start = Instant::now();
    let (tx, rx) = mpsc::channel::<Msg>();

    let mut observed: Vec<Observed> = Vec::new();
    let mut torn_reads = 0;
    let mut aborted = None;
    let mut time_to_target = None;
    let mf0 = plan.measure(spec, &x0)?;
    if plan.target.is_some_and(|t| mf0 <= t) {
        time_to_target = Some(0.0);
        stop.store(true, Ordering::SeqCst);
    }

    std::thread::scope(|scope| {
        let mut handles = Vec::new();
        for (w, mut picker) in pickers.into_iter().enumerate() {
            let tx = tx.clone();
            let (slots, counter, stop, stepper, cost) = (&slots, &counter, &stop, &stepper, &cfg.workers.cost_model);
            let seed = cfg.seed;
            handles.push(scope.spawn(move || {
                let mut rng = rng::worker_stream(seed, w);
                let mut view = vec![0.0; part.dim()];
                let mut versions = vec![0u64; nb];
                let mut block = Vec::new();
                let mut torn = 0u64;
                while !stop.load(Ordering::Relaxed) {
                    let i = picker.next(&mut rng);
                    let mut log = match slots[i].log.lock() {
                        Ok(g) => g,
                        Err(_) => break,
                    };
                    // own block first: it cannot change while we hold its lock
                    let (v, t) = slots[i].read(&mut view[part.range(i)]);
                    versions[i] = v;
                    torn += u64::from(t);
                    for j in (0..nb).filter(|&j| j != i) {
                        let (v, t) = slots[j].read(&mut view[part.range(j)]);
                        versions[j] = v;
                        torn += u64::from(t);
                    }
                    block.resize(part.size(i), 0.0);
                    let mut step_norm = 0.0;
                    let mut failed = None;
                    for _ in 0..cost.factor(i) {
                        match stepper.update(i, &view, &mut block) {
                            Ok(s) => step_norm = s,
                            Err(e) => {
                                failed = Some(e);
                                break;
                            }
                        }
                    }
                    if let Some(e) = failed {
                        stop.store(true, Ordering::SeqCst);
                        let _ = tx.send(Msg::Failed(e));
                        break;
                    }
                    let k = counter.fetch_add(1, Ordering::SeqCst);
                    if k >= budget {
                        stop.store(true, Ordering::SeqCst);
                        break;
                    }
                    slots[i].write(&block);
                    log.push(k);
                    drop(log);
                    let wall_ns = start.elapsed().as_nanos() as u64;
                    let _ = tx.send(Msg::Step(Observed { k, worker: w, i, versions: versions.clone(), step_norm, wall_ns }));
                }
                let _ = tx.send(Msg::Done { torn });
            }));
        }
        drop(tx);

        let mut snapshot = vec![0.0; part.dim()];
        loop {
            match rx.recv_timeout(Duration::from_millis(50)) {
                Ok(Msg::Step(o)) => {
                    observed.push(o);
                    let n = observed.len() as u64;
                    if let Some(target) = plan.target {
                        if time_to_target.is_none() && n.is_multiple_of(plan.every) {
                            for (j, s) in slots.iter().enumerate() {
                                s.read(&mut snapshot[part.range(j)]);
                            }
                            if plan.measure(spec, &snapshot).is_ok_and(|m| m <= target) {
                                time_to_target = Some(start.elapsed().as_secs_f64());
                                stop.store(true, Ordering::SeqCst);
                            }
                        }
                    }
                }
                Ok(Msg::Done { torn }) => torn_reads += torn,
                Ok(Msg::Failed(e)) => {
                    aborted.get_or_insert(e);
                }
                Err(mpsc::RecvTimeoutError::Timeout) => {}
                Err(mpsc::RecvTimeoutError::Disconnected) => break,
            }
        }
        for h in handles {
            if h.join().is_err() {
                aborted.get_or_insert(Error::InvariantViolation("a worker thread panicked".into()));
            }
        }
    });
    let wall_seconds = start.elapsed().as_secs_f64();

    let mut threaded_final = vec![0.0; part.dim()];
    for (j, s) in slots.iter().enumerate() {
        torn_reads += u64::from(s.read(&mut threaded_final[part.range(j)]).1);
    }
    let logs: Vec<Vec<u64>> = slots.into_iter().map(|s| s.log.into_inner().unwrap_or_else(|p| p.into_inner())).collect();
    observed.sort_by_key(|o| o.k);
    let events: Vec<ScheduleEvent> = observed
        .iter()
        .map(|o| ScheduleEvent { k: o.k, i: o.i, d: reconstruct_delays(o.k, &o.versions, &logs) })
        .collect();
    let contiguous = observed.iter().enumerate().all(|(n, o)| o.k == n as u64);
    if !contiguous && aborted.is_none() {
        aborted = Some(Error::InvariantViolation("recorded iteration indices are not contiguous".into()));
    }
    let max_delay = events.iter().map(ScheduleEvent::max_delay).max().unwrap_or(0);
    let validation = validate_trace(&events, &threaded_schedule_config(&cfg, nb));

    let (trace, replay_max_diff, max_violation) = if cfg.replay && contiguous {
        let replay_plan = MetricPlan { target: None, ..plan };
        let out = simulate(&stepper, x0.clone(), max_delay, events.iter().cloned(), events.len() as u64, replay_plan)?;
        if let Some(e) = out.aborted {
            aborted.get_or_insert(e);
        }
        let diff = out.trace.final_x.iter().zip(&threaded_final).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        let mut trace = out.trace;
        trace.final_x = threaded_final.clone();
        (trace, Some(diff), out.max_violation)
    } else {
        let mut trace = Trace::empty(threaded_final.clone(), spec.objective(&x0));
        trace.mf0 = Some(mf0);
        (trace, None, check_feasibility(spec, &threaded_final, 0.0).max_violation)
    };
    let mut trace = trace;
    if trace.records.len() != observed.len() {
        trace.records = observed
            .iter()
            .zip(&events)
            .map(|(o, e)| StepRecord {
                k: o.k,
                worker: o.worker,
                i: o.i,
                d_min: e.min_delay(),
                d_max: e.max_delay(),
                step_norm: o.step_norm,
                f: f64::NAN,
                ftilde: f64::NAN,
                mf: None,
                wall_ns: Some(o.wall_ns),
            })
            .collect();
        if let Some(last) = trace.records.last_mut() {
            last.f = spec.objective(&threaded_final);
            last.mf = plan.measure(spec, &threaded_final).ok();
        }
    } else {
        for (r, o) in trace.records.iter_mut().zip(&observed) {
            r.worker = o.worker;
            r.wall_ns = Some(o.wall_ns);
        }
    }
    trace.reached_target = time_to_target.is_some();

    Ok(ThreadedOutput {
        trace,
        events,
        resolved,
        lyapunov_delta: max_delay,
        wall_seconds,
        max_feasibility_violation: max_violation,
        validation,
        diagnostics: ThreadedDiagnostics {
            workers: n_workers,
            torn_reads,
            delta_cap: cfg.delta_cap,
            bounded_delay_unverifiable: max_delay > cfg.delta_cap,
            replay_max_diff,
            time_to_target_seconds: time_to_target,
        },
        threaded_final,
        aborted,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generate::{generate, GeneratorKind, GeneratorSpec};

    #[test]
    fn delays_from_logs() {
        // block 0 written at 0 and 3, block 1 at 1, block 2 at 2 and 4
        let logs = vec![vec![0, 3], vec![1], vec![2, 4]];
        // a worker that read block 0 before its first write and writes at k = 5
        assert_eq!(reconstruct_delays(5, &[0, 1, 2], &logs), vec![5, 0, 0]);
        assert_eq!(reconstruct_delays(5, &[1, 0, 1], &logs), vec![2, 4, 1]);
        assert_eq!(reconstruct_delays(3, &[1, 1, 1], &logs), vec![0, 0, 0]);
    }

    #[test]
    fn single_worker_reads_fresh_and_replays_exactly() {
        let spec = generate(&GeneratorSpec::new(GeneratorKind::LassoDense, 40, 8, 3)).unwrap();
        for access in [Access::Partitioned, Access::Shared] {
            let cfg = RunConfig::threaded(1, access, 400);
            let out = run_threaded(&spec, &cfg).unwrap();
            assert!(out.aborted.is_none());
            assert_eq!(out.events.len(), 400);
            assert!(out.events.iter().all(|e| e.max_delay() == 0));
            assert_eq!(out.diagnostics.replay_max_diff, Some(0.0));
            assert_eq!(out.diagnostics.torn_reads, 0);
        }
    }

    #[test]
    fn several_workers_satisfy_contracts() {
        let spec = generate(&GeneratorSpec::new(GeneratorKind::LassoDense, 60, 6, 4)).unwrap();
        let mut cfg = RunConfig::threaded(3, Access::Shared, 3000);
        cfg.delay_estimate = Some(8);
        let out = run_threaded(&spec, &cfg).unwrap();
        assert!(out.aborted.is_none());
        assert_eq!(out.validation.c3_violations, 0);
        assert_eq!(out.diagnostics.torn_reads, 0);
        assert!(out.diagnostics.replay_max_diff.unwrap() <= 1e-12);
    }
}
