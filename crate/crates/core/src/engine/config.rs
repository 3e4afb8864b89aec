use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{max_stepsize, TheoryConstants};
use crate::problem::ProblemSpec;
use crate::scheduler::{SchedulerConfig, SchedulerKind};
use crate::subproblem::InnerOptions;
use crate::surrogate::{SurrogateFactory, SurrogateKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum EngineKind {
    #[default]
    Sim,
    Threaded,
}

/// Stepsize: a number in `(0, 1]`, or `"auto"` for 90% of the bound.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum GammaSetting {
    #[default]
    Auto,
    Fixed(f64),
}

impl Serialize for GammaSetting {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            GammaSetting::Auto => s.serialize_str("auto"),
            GammaSetting::Fixed(g) => s.serialize_f64(*g),
        }
    }
}

impl<'de> Deserialize<'de> for GammaSetting {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Word(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(g) => Ok(GammaSetting::Fixed(g)),
            Raw::Word(w) if w == "auto" => Ok(GammaSetting::Auto),
            Raw::Word(w) => Err(serde::de::Error::custom(format!("gamma must be a number or \"auto\", got \"{w}\""))),
        }
    }
}

impl std::str::FromStr for GammaSetting {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        if s == "auto" {
            return Ok(GammaSetting::Auto);
        }
        s.parse().map(GammaSetting::Fixed).map_err(|_| Error::Parse(format!("gamma '{s}' is neither a number nor \"auto\"")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct SurrogateConfig {
    #[serde(default)]
    pub kind: SurrogateKind,
    /// Proximal weight `β`; `None` uses `L_f / 2`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
}

impl SurrogateConfig {
    pub fn beta_for(&self, spec: &ProblemSpec) -> f64 {
        self.beta.unwrap_or(spec.lipschitz() / 2.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Access {
    /// Worker `w` owns a contiguous group of blocks and sweeps it in a fresh
    /// random order every epoch.
    #[default]
    Partitioned,
    /// Every worker draws blocks from all of them.
    Shared,
}

/// Artificial per-block compute cost.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CostModel {
    /// Each update costs what its best response costs.
    #[default]
    Natural,
    /// The best response of block `i` is computed `factors[i]` times.
    Multiplier { factors: Vec<usize> },
}

impl CostModel {
    pub fn factor(&self, i: usize) -> usize {
        match self {
            CostModel::Natural => 1,
            CostModel::Multiplier { factors } => factors[i].max(1),
        }
    }
}

fn default_workers() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkerConfig {
    #[serde(default = "default_workers")]
    pub count: usize,
    #[serde(default)]
    pub access: Access,
    #[serde(default)]
    pub cost_model: CostModel,
}

impl Default for WorkerConfig {
    fn default() -> Self {
        WorkerConfig { count: 1, access: Access::Partitioned, cost_model: CostModel::Natural }
    }
}

fn default_budget() -> u64 {
    10_000
}

fn default_alpha() -> f64 {
    0.5
}

fn default_delta_cap() -> usize {
    64
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub problem_file: Option<PathBuf>,
    #[serde(default)]
    pub engine: EngineKind,
    #[serde(default)]
    pub gamma: GammaSetting,
    #[serde(default)]
    pub surrogate: SurrogateConfig,
    /// Simulated engine only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scheduler: Option<SchedulerConfig>,
    /// Threaded engine only.
    #[serde(default)]
    pub workers: WorkerConfig,
    #[serde(default = "default_budget")]
    pub budget: u64,
    /// Stop once `‖M_F‖` at a measurement is at most this value.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_stationarity: Option<f64>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_prefix: Option<PathBuf>,
    /// Measure `‖M_F‖` every this many iterations; `None` means once per `N`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metric_every: Option<u64>,
    /// Use the constrained best response and stationarity measure.
    #[serde(default)]
    pub ncc: bool,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    /// Threaded engine: delays above this make the bounded-delay check unverifiable.
    #[serde(default = "default_delta_cap")]
    pub delta_cap: usize,
    /// Threaded engine: delay bound used for the automatic stepsize;
    /// `None` means `2 (workers − 1)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delay_estimate: Option<usize>,
    /// Threaded engine: re-run the recorded events through the simulated engine.
    #[serde(default = "default_true")]
    pub replay: bool,
    #[serde(default, flatten)]
    pub inner: InnerOptions,
}

impl Default for RunConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("all fields have defaults")
    }
}

impl RunConfig {
    pub fn simulated(scheduler: SchedulerConfig, budget: u64) -> Self {
        RunConfig { scheduler: Some(scheduler), budget, ..Default::default() }
    }

    pub fn threaded(workers: usize, access: Access, budget: u64) -> Self {
        RunConfig {
            engine: EngineKind::Threaded,
            workers: WorkerConfig { count: workers, access, cost_model: CostModel::Natural },
            budget,
            ..Default::default()
        }
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn validate(&self, spec: &ProblemSpec) -> Result<()> {
        if let GammaSetting::Fixed(g) = self.gamma {
            if !(g > 0.0 && g <= 1.0) {
                return Err(Error::Invalid(format!("gamma = {g} outside (0, 1]")));
            }
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Invalid(format!("alpha = {} outside (0, 1)", self.alpha)));
        }
        if self.metric_every == Some(0) {
            return Err(Error::Invalid("metric_every must be positive".into()));
        }
        if let Some(t) = self.target_stationarity {
            if !(t >= 0.0) {
                return Err(Error::Invalid(format!("target_stationarity = {t} must be nonnegative")));
            }
        }
        if spec.is_constrained() && !self.ncc {
            return Err(Error::Invalid(
                "problem has private nonconvex constraints; set ncc = true".into(),
            ));
        }
        match self.engine {
            EngineKind::Sim => {
                if self.scheduler.is_none() {
                    return Err(Error::Invalid("simulated engine needs a scheduler config".into()));
                }
            }
            EngineKind::Threaded => {
                if self.workers.count == 0 {
                    return Err(Error::Invalid("threaded engine needs at least one worker".into()));
                }
                if let CostModel::Multiplier { factors } = &self.workers.cost_model {
                    if factors.len() != spec.n_blocks() {
                        return Err(Error::Dimension(format!(
                            "{} cost factors for {} blocks",
                            factors.len(),
                            spec.n_blocks()
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn metric_every(&self, spec: &ProblemSpec) -> u64 {
        self.metric_every.unwrap_or(spec.n_blocks() as u64)
    }

    /// Scheduler with `n_blocks`, costs and the run seed filled in.
    pub fn resolved_scheduler(&self, spec: &ProblemSpec) -> Result<SchedulerConfig> {
        let mut s = self.scheduler.clone().ok_or_else(|| Error::Invalid("no scheduler config".into()))?;
        s.resolve(spec);
        s.seed = self.seed;
        s.validate()?;
        Ok(s)
    }

    /// Delay bound used for the stepsize rule.
    pub fn design_delta(&self, spec: &ProblemSpec) -> Result<usize> {
        Ok(match self.engine {
            EngineKind::Sim => self.resolved_scheduler(spec)?.delta,
            EngineKind::Threaded => self.delay_estimate.unwrap_or(2 * (self.workers.count - 1)),
        })
    }

    /// Selection window and floor declared for the theory constants.
    pub fn declared_selection(&self, spec: &ProblemSpec) -> Result<(usize, f64)> {
        Ok(match self.engine {
            EngineKind::Sim => self.resolved_scheduler(spec)?.declared_selection(),
            EngineKind::Threaded => {
                let kind = match self.workers.access {
                    Access::Partitioned => SchedulerKind::PartitionedShuffle,
                    Access::Shared => SchedulerKind::SharedUniform,
                };
                SchedulerConfig::new(kind, spec.n_blocks()).with_workers(self.workers.count).declared_selection()
            }
        })
    }
}

/// Stepsize and constants of a run, fixed before it starts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResolvedRun {
    pub gamma: f64,
    pub gamma_bound: f64,
    pub gamma_auto: bool,
    pub beta: f64,
    pub surrogate: SurrogateKind,
    pub theory: TheoryConstants,
    pub warnings: Vec<String>,
}

pub fn resolve_run(spec: &ProblemSpec, cfg: &RunConfig, factory: &SurrogateFactory) -> Result<ResolvedRun> {
    cfg.validate(spec)?;
    let delta = cfg.design_delta(spec)?;
    let lf = spec.lipschitz();
    let modulus = factory.modulus();
    let bound = max_stepsize(modulus, lf, delta);
    let mut warnings = Vec::new();
    let (gamma, auto) = match cfg.gamma {
        GammaSetting::Auto => ((0.9 * bound).min(1.0), true),
        GammaSetting::Fixed(g) => {
            if g >= bound {
                warnings.push(format!(
                    "gamma = {g} is not below the stepsize bound {bound:.6e}; per-step descent is not guaranteed"
                ));
            }
            (g, false)
        }
    };
    let (window, p_min) = cfg.declared_selection(spec)?;
    let part = spec.partition();
    let lip_g = (0..spec.n_blocks()).map(|i| spec.regs[i].lipschitz(part.size(i))).fold(0.0, f64::max);
    Ok(ResolvedRun {
        gamma,
        gamma_bound: bound,
        gamma_auto: auto,
        beta: factory.beta(),
        surrogate: factory.kind(),
        theory: TheoryConstants {
            modulus,
            lip_f: lf,
            lip_b: factory.lip_b(),
            lip_e: factory.lip_e(),
            lip_g,
            delta,
            window,
            p_min,
            alpha: cfg.alpha,
            gamma,
            n_blocks: spec.n_blocks(),
        },
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gamma_parses_number_or_auto() {
        let c: RunConfig = serde_json::from_str(r#"{"gamma": "auto"}"#).unwrap();
        assert_eq!(c.gamma, GammaSetting::Auto);
        let c: RunConfig = serde_json::from_str(r#"{"gamma": 0.25}"#).unwrap();
        assert_eq!(c.gamma, GammaSetting::Fixed(0.25));
        assert!(serde_json::from_str::<RunConfig>(r#"{"gamma": "fast"}"#).is_err());
    }

    #[test]
    fn defaults_round_trip() {
        let c = RunConfig::default();
        assert_eq!((c.budget, c.alpha, c.delta_cap, c.replay), (10_000, 0.5, 64, true));
        let back: RunConfig = serde_json::from_str(&serde_json::to_string(&c).unwrap()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn full_config_parses() {
        let text = r#"{
            "problem_file": "p.json", "engine": "sim", "gamma": "auto",
            "surrogate": {"kind": "prox_linear", "beta": 1.5},
            "scheduler": {"kind": "shared-uniform", "delta": 3, "delay_law": {"kind": "geometric", "p": 0.5}},
            "budget": 500, "target_stationarity": 1e-6, "seed": 4, "output_prefix": "out/run",
            "inner_tol": 1e-11, "inner_max_iters": 300
        }"#;
        let c = RunConfig::from_json_str(text).unwrap();
        assert_eq!(c.scheduler.unwrap().delta, 3);
        assert_eq!(c.surrogate.beta, Some(1.5));
        assert_eq!((c.inner.tol, c.inner.max_iters, c.inner.feas_tol), (Some(1e-11), 300, 1e-9));
    }
}
