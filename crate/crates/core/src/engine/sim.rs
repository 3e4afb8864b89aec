use std::time::Instant;

use super::{resolve_run, ResolvedRun, RunConfig, StepRecord, Trace, VersionedHistory};
use crate::error::{Error, Result};
use crate::linalg::dist_sq;
use crate::metrics::{stationarity, stationarity_ncc, LyapunovWindow};
use crate::problem::{check_feasibility, ProblemSpec};
use crate::scheduler::{ScheduleEvent, Scheduler};
use crate::subproblem::{compute_best_response, InnerOptions};
use crate::surrogate::{SurrogateFactory, SurrogateKind};

/// The block update shared by both engines:
/// `x_i^{k+1} = x_i^k + γ (x̂_i(x̃^k) − x_i^k)`.
#[derive(Debug, Clone)]
pub struct Stepper<'a> {
    spec: &'a ProblemSpec,
    factory: SurrogateFactory<'a>,
    gamma: f64,
    opts: InnerOptions,
}

impl<'a> Stepper<'a> {
    pub fn new(spec: &'a ProblemSpec, kind: SurrogateKind, beta: f64, gamma: f64, opts: InnerOptions) -> Result<Self> {
        if !(gamma > 0.0 && gamma <= 1.0) {
            return Err(Error::Invalid(format!("gamma = {gamma} outside (0, 1]")));
        }
        Ok(Stepper { spec, factory: SurrogateFactory::new(spec, kind, beta)?, gamma, opts })
    }

    pub fn from_factory(factory: SurrogateFactory<'a>, gamma: f64, opts: InnerOptions) -> Self {
        Stepper { spec: factory.spec(), factory, gamma, opts }
    }

    pub fn spec(&self) -> &'a ProblemSpec {
        self.spec
    }

    pub fn factory(&self) -> &SurrogateFactory<'a> {
        &self.factory
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// Writes the new value of block `i` into `out` and returns `‖x̂_i − x_i^k‖`.
    /// Block `i` of `view` must hold `x_i^k`.
    pub fn update(&self, i: usize, view: &[f64], out: &mut [f64]) -> Result<f64> {
        let br = compute_best_response(&self.factory, i, view, self.opts)?;
        let xi = self.spec.partition().block(view, i);
        let mut s2 = 0.0;
        for ((o, &x), &z) in out.iter_mut().zip(xi).zip(&br.z) {
            let d = z - x;
            s2 += d * d;
            *o = x + self.gamma * d;
        }
        Ok(s2.sqrt())
    }
}

/// Values produced by one simulated step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub step_norm: f64,
    /// `F(x^{k+1})`.
    pub f: f64,
    /// `F̃_{k+1}`.
    pub ftilde: f64,
    /// Violation of `X_i` and the private constraints by the new block.
    pub violation: f64,
}

/// Iterate history plus the running objective and Lyapunov value.
#[derive(Debug, Clone)]
pub struct SimState<'s, 'a> {
    stepper: &'s Stepper<'a>,
    hist: VersionedHistory,
    f: f64,
    lyap: LyapunovWindow,
    view: Vec<f64>,
    block: Vec<f64>,
    scratch: Vec<f64>,
}

impl<'s, 'a> SimState<'s, 'a> {
    /// `delta` sets both the history depth and the Lyapunov window.
    pub fn new(stepper: &'s Stepper<'a>, x0: Vec<f64>, delta: usize) -> Result<Self> {
        let spec = stepper.spec;
        spec.check_dim(&x0)?;
        let f = spec.objective(&x0);
        let n = x0.len();
        Ok(SimState {
            stepper,
            hist: VersionedHistory::new(spec.partition().clone(), x0, delta)?,
            f,
            lyap: LyapunovWindow::new(delta, spec.lipschitz()),
            view: vec![0.0; n],
            block: Vec::new(),
            scratch: Vec::new(),
        })
    }

    pub fn k(&self) -> u64 {
        self.hist.k()
    }

    pub fn current(&self) -> &[f64] {
        self.hist.current()
    }

    pub fn history(&self) -> &VersionedHistory {
        &self.hist
    }

    pub fn objective(&self) -> f64 {
        self.f
    }

    pub fn lyapunov(&self) -> f64 {
        self.lyap.value(self.f)
    }

    /// Recomputes `F(x^k)` from scratch, discarding accumulated rounding.
    pub fn refresh_objective(&mut self) {
        self.f = self.stepper.spec.objective(self.hist.current());
    }

    /// Applies one event: only block `i^k` changes.
    pub fn step(&mut self, e: &ScheduleEvent) -> Result<StepOutcome> {
        let spec = self.stepper.spec;
        let part = spec.partition();
        if e.k != self.hist.k() {
            return Err(Error::InvariantViolation(format!("event for iteration {} applied at iteration {}", e.k, self.hist.k())));
        }
        if e.i >= spec.n_blocks() {
            return Err(Error::Dimension(format!("event block {} out of range", e.i)));
        }
        if e.d.get(e.i) != Some(&0) {
            return Err(Error::InvariantViolation(format!("iteration {}: updated block {} is read with a delay", e.k, e.i)));
        }
        self.hist.compose_into(&e.d, &mut self.view)?;
        self.block.resize(part.size(e.i), 0.0);
        let step_norm = self.stepper.update(e.i, &self.view, &mut self.block)?;
        let cur = self.hist.current();
        let old = part.block(cur, e.i);
        let df = spec.smooth.block_change(part, e.i, cur, &self.block, &mut self.scratch)
            + spec.regs[e.i].value(&self.block)
            - spec.regs[e.i].value(old);
        let moved = dist_sq(&self.block, old);
        let violation = spec.block_feasibility(e.i, &self.block, 0.0).violation;
        self.hist.push_block(e.i, &self.block);
        self.f += df;
        self.lyap.push(moved);
        Ok(StepOutcome { step_norm, f: self.f, ftilde: self.lyap.value(self.f), violation })
    }
}

/// Applies `e` to `state`.
pub fn step(state: &mut SimState, e: &ScheduleEvent) -> Result<StepOutcome> {
    state.step(e)
}

/// Output of a simulated run. Failures inside the loop end the run early and
/// are reported in `aborted`, with the trace up to that point.
#[derive(Debug)]
pub struct SimOutput {
    pub trace: Trace,
    pub events: Vec<ScheduleEvent>,
    pub resolved: ResolvedRun,
    /// Delay bound of the history and Lyapunov window.
    pub lyapunov_delta: usize,
    pub wall_seconds: f64,
    pub max_feasibility_violation: f64,
    pub aborted: Option<Error>,
}

/// When and how stationarity is measured.
#[derive(Debug, Clone, Copy)]
pub(crate) struct MetricPlan {
    pub every: u64,
    pub target: Option<f64>,
    pub ncc: bool,
}

impl MetricPlan {
    pub fn from_config(cfg: &RunConfig, spec: &ProblemSpec) -> Self {
        MetricPlan { every: cfg.metric_every(spec), target: cfg.target_stationarity, ncc: cfg.ncc }
    }

    pub fn measure(&self, spec: &ProblemSpec, x: &[f64]) -> Result<f64> {
        if self.ncc && spec.is_constrained() {
            stationarity_ncc(spec, x)
        } else {
            stationarity(spec, x)
        }
    }
}

pub(crate) struct LoopOutput {
    pub trace: Trace,
    pub events: Vec<ScheduleEvent>,
    pub max_violation: f64,
    pub aborted: Option<Error>,
}

/// The simulated loop proper: applies events until the budget, the source, or
/// the stationarity target ends the run.
pub(crate) fn simulate(
    stepper: &Stepper,
    x0: Vec<f64>,
    delta: usize,
    events: impl Iterator<Item = ScheduleEvent>,
    budget: u64,
    plan: MetricPlan,
) -> Result<LoopOutput> {
    let spec = stepper.spec;
    let mut state = SimState::new(stepper, x0.clone(), delta)?;
    let mut trace = Trace::empty(x0.clone(), state.objective());
    let mut max_violation = check_feasibility(spec, &x0, 0.0).max_violation;
    let mf0 = plan.measure(spec, &x0)?;
    trace.mf0 = Some(mf0);
    let mut recorded = Vec::new();
    if plan.target.is_some_and(|t| mf0 <= t) {
        trace.reached_target = true;
        return Ok(LoopOutput { trace, events: recorded, max_violation, aborted: None });
    }
    let mut aborted = None;
    for e in events.take(budget as usize) {
        let out = match state.step(&e) {
            Ok(o) => o,
            Err(err) => {
                aborted = Some(err);
                break;
            }
        };
        max_violation = max_violation.max(out.violation);
        let k1 = e.k + 1;
        let mut rec = StepRecord {
            k: e.k,
            worker: 0,
            i: e.i,
            d_min: e.min_delay(),
            d_max: e.max_delay(),
            step_norm: out.step_norm,
            f: out.f,
            ftilde: out.ftilde,
            mf: None,
            wall_ns: None,
        };
        recorded.push(e);
        if k1 % plan.every == 0 || k1 == budget {
            state.refresh_objective();
            match plan.measure(spec, state.current()) {
                Ok(m) => rec.mf = Some(m),
                Err(err) => {
                    trace.records.push(rec);
                    aborted = Some(err);
                    break;
                }
            }
        }
        let hit = plan.target.is_some_and(|t| rec.mf.is_some_and(|m| m <= t));
        trace.records.push(rec);
        if hit {
            trace.reached_target = true;
            break;
        }
    }
    // close the stationarity series at the last iterate
    if aborted.is_none() {
        if let Some(last) = trace.records.last_mut() {
            if last.mf.is_none() {
                last.mf = Some(plan.measure(spec, state.current())?);
            }
        }
    }
    trace.final_x = state.current().to_vec();
    Ok(LoopOutput { trace, events: recorded, max_violation, aborted })
}

/// Runs the iteration on the events drawn from `scheduler`.
pub fn run_simulated(spec: &ProblemSpec, cfg: &RunConfig, scheduler: Scheduler) -> Result<SimOutput> {
    let mut cfg = cfg.clone();
    cfg.engine = super::EngineKind::Sim;
    if cfg.scheduler.is_none() {
        cfg.scheduler = Some(scheduler.config().clone());
    }
    let x0 = spec.start_point();
    if cfg.ncc && !check_feasibility(spec, &x0, 1e-9).feasible {
        return Err(Error::InvariantViolation("constrained run needs a feasible start".into()));
    }
    let factory = SurrogateFactory::new(spec, cfg.surrogate.kind, cfg.surrogate.beta_for(spec))?;
    let resolved = resolve_run(spec, &cfg, &factory)?;
    let stepper = Stepper::from_factory(factory, resolved.gamma, cfg.inner);
    let delta = scheduler.delta();
    let start = Instant::now();
    let out = simulate(&stepper, x0, delta, scheduler, cfg.budget, MetricPlan::from_config(&cfg, spec))?;
    Ok(SimOutput {
        trace: out.trace,
        events: out.events,
        resolved,
        lyapunov_delta: delta,
        wall_seconds: start.elapsed().as_secs_f64(),
        max_feasibility_violation: out.max_violation,
        aborted: out.aborted,
    })
}
