//! Execution of the asynchronous block iteration.
//!
//! `sim` replays an event stream deterministically on a versioned history;
//! `threaded` runs real workers on shared memory and records what they did.

mod config;
mod history;
mod sim;
mod threaded;
mod trace;

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

pub use config::{
    resolve_run, Access, CostModel, EngineKind, GammaSetting, ResolvedRun, RunConfig, SurrogateConfig, WorkerConfig,
};
pub use history::{compose_delayed_view, VersionedHistory};
pub use sim::{run_simulated, step, SimOutput, SimState, StepOutcome, Stepper};
pub use threaded::{reconstruct_delays, run_threaded, threaded_schedule_config, ThreadedOutput};
pub use trace::{
    load_summary, load_trace, read_trace_csv, save_summary, write_trace_csv, OutputPaths, RunSummary, StepRecord,
    ThreadedDiagnostics, Trace,
};

use crate::error::{Error, Result};
use crate::metrics::delay_stats;
use crate::problem::ProblemSpec;
use crate::scheduler::{make_scheduler, validate_trace, write_events_csv, ScheduleEvent};

/// A finished run. `aborted` holds the error that ended it early, if any;
/// everything else describes the iterations completed before that.
#[derive(Debug)]
pub struct RunOutcome {
    pub summary: RunSummary,
    pub trace: Trace,
    pub events: Vec<ScheduleEvent>,
    pub aborted: Option<Error>,
}

/// Runs `spec` with the engine selected in `cfg`.
pub fn run(spec: &ProblemSpec, cfg: &RunConfig) -> Result<RunOutcome> {
    cfg.validate(spec)?;
    let nb = spec.n_blocks();
    let (trace, events, resolved, lyap_delta, wall, viol, validation, threaded, aborted) = match cfg.engine {
        EngineKind::Sim => {
            let sched_cfg = cfg.resolved_scheduler(spec)?;
            let out = run_simulated(spec, cfg, make_scheduler(&sched_cfg)?)?;
            let validation = validate_trace(&out.events, &sched_cfg);
            (
                out.trace,
                out.events,
                out.resolved,
                out.lyapunov_delta,
                out.wall_seconds,
                out.max_feasibility_violation,
                validation,
                None,
                out.aborted,
            )
        }
        EngineKind::Threaded => {
            let out = run_threaded(spec, cfg)?;
            (
                out.trace,
                out.events,
                out.resolved,
                out.lyapunov_delta,
                out.wall_seconds,
                out.max_feasibility_violation,
                out.validation,
                Some(out.diagnostics),
                out.aborted,
            )
        }
    };
    let delays = delay_stats(&trace, nb, Some(lyap_delta));
    let summary = RunSummary {
        problem: spec.name.clone(),
        engine: cfg.engine,
        n: spec.dim(),
        n_blocks: nb,
        seed: cfg.seed,
        run: resolved,
        lyapunov_delta: lyap_delta,
        iterations: trace.iterations(),
        budget: cfg.budget,
        f0: trace.f0,
        f_final: trace.final_objective(),
        mf0: trace.mf0,
        mf_final: trace.final_stationarity(),
        target_stationarity: cfg.target_stationarity,
        reached_target: trace.reached_target,
        censored: cfg.target_stationarity.is_some() && !trace.reached_target,
        wall_seconds: wall,
        max_feasibility_violation: viol,
        delays,
        validation: Some(validation),
        threaded,
        x_final: trace.final_x.clone(),
    };
    Ok(RunOutcome { summary, trace, events, aborted })
}

/// Writes the trace CSV, events CSV and summary JSON for `prefix`.
pub fn write_outputs(prefix: &Path, outcome: &RunOutcome) -> Result<OutputPaths> {
    let paths = OutputPaths::new(prefix);
    if let Some(dir) = paths.trace.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    write_trace_csv(BufWriter::new(File::create(&paths.trace)?), &outcome.trace.records)?;
    write_events_csv(BufWriter::new(File::create(&paths.events)?), outcome.summary.n_blocks, &outcome.events)?;
    save_summary(&paths.summary, &outcome.summary)?;
    Ok(paths)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generate::{generate, GeneratorKind, GeneratorSpec};
    use crate::scheduler::{SchedulerConfig, SchedulerKind};

    #[test]
    fn outputs_round_trip() {
        let spec = generate(&GeneratorSpec::new(GeneratorKind::LassoDense, 20, 4, 8)).unwrap();
        let cfg = RunConfig::simulated(SchedulerConfig::new(SchedulerKind::SharedUniform, 0).with_delta(2), 120);
        let out = run(&spec, &cfg).unwrap();
        assert!(out.aborted.is_none());
        assert!(out.summary.validation.as_ref().unwrap().passed());
        let dir = std::env::temp_dir().join(format!("asyflexa-engine-{}", std::process::id()));
        let prefix = dir.join("r");
        write_outputs(&prefix, &out).unwrap();
        let (trace, summary) = load_trace(&prefix).unwrap();
        assert_eq!(summary, out.summary);
        assert_eq!(trace, out.trace);
        std::fs::remove_dir_all(dir).unwrap();
    }
}
