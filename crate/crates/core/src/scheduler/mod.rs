//! Index/delay event streams `(i^k, d^k)`.
//!
//! A [`Scheduler`] samples one realization of the update process: which block
//! is updated at iteration `k` and how stale each block of the view it reads
//! is. Every generated event satisfies `d_j ≤ δ` and `d_i = 0` by construction.

mod trace_file;
mod validate;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, Prng};

pub use trace_file::{read_events_csv, write_events_csv, EventWriter};
pub use validate::{validate_trace, C2Report, TraceValidator, ValidationReport};

/// One iteration of the update process: block `i` is written at iteration
/// `k` using the view whose block `j` is `x_j^{k - d[j]}`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScheduleEvent {
    pub k: u64,
    pub i: usize,
    pub d: Vec<usize>,
}

impl ScheduleEvent {
    pub fn synchronous(k: u64, i: usize, n_blocks: usize) -> Self {
        ScheduleEvent { k, i, d: vec![0; n_blocks] }
    }

    pub fn max_delay(&self) -> usize {
        self.d.iter().copied().max().unwrap_or(0)
    }

    pub fn min_delay(&self) -> usize {
        self.d.iter().copied().min().unwrap_or(0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SchedulerKind {
    Cyclic,
    RandomSequential,
    RandomParallel,
    SharedUniform,
    PartitionedShuffle,
}

impl SchedulerKind {
    pub const ALL: [SchedulerKind; 5] = [
        SchedulerKind::Cyclic,
        SchedulerKind::RandomSequential,
        SchedulerKind::RandomParallel,
        SchedulerKind::SharedUniform,
        SchedulerKind::PartitionedShuffle,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SchedulerKind::Cyclic => "cyclic",
            SchedulerKind::RandomSequential => "random-sequential",
            SchedulerKind::RandomParallel => "random-parallel",
            SchedulerKind::SharedUniform => "shared-uniform",
            SchedulerKind::PartitionedShuffle => "partitioned-shuffle",
        }
    }
}

impl fmt::Display for SchedulerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SchedulerKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        SchedulerKind::ALL
            .into_iter()
            .find(|k| k.name() == s || k.name().replace('-', "_") == s)
            .ok_or_else(|| Error::Invalid(format!("unknown scheduler kind '{s}'")))
    }
}

/// How the delays of blocks other than the updated one are drawn.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DelayLaw {
    /// Every delay equals `δ`.
    Constant,
    /// Uniform on `{0, …, δ}`.
    #[default]
    Uniform,
    /// Number of failures before the first success with probability `p`, capped at `δ`.
    Geometric { p: f64 },
    /// Uniform on `{0, …, m_i}` with `m_i = round(δ · cost_i / max cost)` for
    /// the updated block `i`: expensive updates read older data. Empty
    /// `costs` are filled from the problem by [`SchedulerConfig::resolve_costs`].
    CostProportional {
        #[serde(default)]
        costs: Vec<f64>,
    },
}

fn default_workers() -> usize {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SchedulerConfig {
    pub kind: SchedulerKind,
    /// Number of blocks; 0 means "take it from the problem".
    #[serde(default)]
    pub n_blocks: usize,
    #[serde(default)]
    pub delta: usize,
    #[serde(default = "default_workers")]
    pub workers: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub partitions: Option<Vec<Vec<usize>>>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
    #[serde(default)]
    pub delay_law: DelayLaw,
    /// Length `T` of the windows used for the empirical selection-frequency check.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_min: Option<f64>,
}

impl SchedulerConfig {
    pub fn new(kind: SchedulerKind, n_blocks: usize) -> Self {
        SchedulerConfig {
            kind,
            n_blocks,
            delta: 0,
            workers: 1,
            partitions: None,
            seed: 0,
            weights: None,
            delay_law: DelayLaw::Uniform,
            window: None,
            p_min: None,
        }
    }

    pub fn with_delta(mut self, delta: usize) -> Self {
        self.delta = delta;
        self
    }

    pub fn with_workers(mut self, workers: usize) -> Self {
        self.workers = workers;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_delay_law(mut self, law: DelayLaw) -> Self {
        self.delay_law = law;
        self
    }

    /// Window length for the frequency check; defaults to `20 N`.
    pub fn window_len(&self) -> usize {
        self.window.unwrap_or(20 * self.n_blocks.max(1))
    }

    /// Frequency floor for the frequency check; defaults to `1 / (2N)`.
    pub fn p_min_value(&self) -> f64 {
        self.p_min.unwrap_or(0.5 / self.n_blocks.max(1) as f64)
    }

    /// Smallest selection probability of a single draw.
    fn min_draw_probability(&self) -> f64 {
        match &self.weights {
            Some(w) => {
                let total: f64 = w.iter().sum();
                w.iter().copied().fold(f64::INFINITY, f64::min) / total
            }
            None => 1.0 / self.n_blocks as f64,
        }
    }

    /// `(T, p_min)` such that, by construction of the sampler, every block has
    /// conditional selection probability at least `p_min` at some iteration of
    /// every window `[k, k+T]`. Explicit `window` / `p_min` fields take precedence.
    pub fn declared_selection(&self) -> (usize, f64) {
        let (t, p) = match self.kind {
            SchedulerKind::Cyclic => (self.n_blocks.saturating_sub(1), 1.0),
            SchedulerKind::RandomSequential | SchedulerKind::SharedUniform => (0, self.min_draw_probability()),
            // every window of C events contains the first draw of a round
            SchedulerKind::RandomParallel => (self.workers.saturating_sub(1), self.min_draw_probability()),
            // the first draw of an epoch of the owning worker is uniform on its partition
            SchedulerKind::PartitionedShuffle => {
                let parts = self.effective_partitions();
                let largest = parts.iter().map(Vec::len).max().unwrap_or(1);
                (parts.len() * largest, 1.0 / largest as f64)
            }
        };
        (self.window.unwrap_or(t), self.p_min.unwrap_or(p))
    }

    /// Fill `n_blocks` and empty cost-proportional costs from a problem.
    pub fn resolve(&mut self, spec: &crate::ProblemSpec) {
        if self.n_blocks == 0 {
            self.n_blocks = spec.n_blocks();
        }
        self.resolve_costs(|i| spec.smooth.block_cost(spec.partition(), i) as f64);
    }

    pub fn resolve_costs(&mut self, cost: impl Fn(usize) -> f64) {
        if let DelayLaw::CostProportional { costs } = &mut self.delay_law {
            if costs.is_empty() {
                *costs = (0..self.n_blocks).map(cost).collect();
            }
        }
    }

    /// Partitions in effect: the configured ones, or `workers` contiguous
    /// groups of near-equal size.
    pub fn effective_partitions(&self) -> Vec<Vec<usize>> {
        if let Some(p) = &self.partitions {
            return p.clone();
        }
        let c = self.workers.clamp(1, self.n_blocks.max(1));
        let (q, r) = (self.n_blocks / c, self.n_blocks % c);
        let mut out = Vec::with_capacity(c);
        let mut start = 0;
        for w in 0..c {
            let len = q + usize::from(w < r);
            out.push((start..start + len).collect());
            start += len;
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n_blocks;
        if n == 0 {
            return Err(Error::Invalid("scheduler needs at least one block".into()));
        }
        if self.workers == 0 {
            return Err(Error::Invalid("worker count must be at least 1".into()));
        }
        if let Some(w) = &self.weights {
            if w.len() != n {
                return Err(Error::Dimension(format!(
                    "{} selection weights for {n} blocks",
                    w.len()
                )));
            }
            if w.iter().any(|v| !v.is_finite() || *v < 0.0) || w.iter().sum::<f64>() <= 0.0 {
                return Err(Error::Invalid(
                    "selection weights must be nonnegative with positive sum".into(),
                ));
            }
        }
        if let Some(parts) = &self.partitions {
            let mut seen = vec![false; n];
            for p in parts {
                if p.is_empty() {
                    return Err(Error::Invalid("empty partition".into()));
                }
                for &b in p {
                    if b >= n || seen[b] {
                        return Err(Error::Invalid(format!(
                            "partitions must be disjoint and cover 0..{n}; block {b} is repeated or out of range"
                        )));
                    }
                    seen[b] = true;
                }
            }
            if seen.iter().any(|s| !s) {
                return Err(Error::Invalid(format!("partitions do not cover 0..{n}")));
            }
        }
        if self.window == Some(0) {
            return Err(Error::Invalid("window T must be at least 1".into()));
        }
        if let Some(p) = self.p_min {
            if !(p > 0.0 && p <= 1.0) {
                return Err(Error::Invalid(format!("p_min = {p} outside (0, 1]")));
            }
        }
        match &self.delay_law {
            DelayLaw::Geometric { p } if !(*p > 0.0 && *p <= 1.0) => {
                return Err(Error::Invalid(format!("geometric delay parameter {p} outside (0, 1]")));
            }
            DelayLaw::CostProportional { costs } => {
                if costs.len() != n {
                    return Err(Error::Dimension(format!(
                        "{} block costs for {n} blocks",
                        costs.len()
                    )));
                }
                if costs.iter().any(|c| !c.is_finite() || *c <= 0.0) {
                    return Err(Error::Invalid("block costs must be positive".into()));
                }
            }
            _ => {}
        }
        match self.kind {
            SchedulerKind::RandomParallel => {
                if self.workers > n {
                    return Err(Error::Invalid(format!(
                        "random-parallel draws {} distinct blocks per round but there are only {n}",
                        self.workers
                    )));
                }
                if self.delta + 1 < self.workers {
                    return Err(Error::Invalid(format!(
                        "random-parallel with {} workers produces delays up to {}, above δ = {}",
                        self.workers,
                        self.workers - 1,
                        self.delta
                    )));
                }
            }
            SchedulerKind::PartitionedShuffle
                if self.partitions.is_none() && self.workers > n => {
                    return Err(Error::Invalid(format!(
                        "{} workers cannot own disjoint nonempty partitions of {n} blocks",
                        self.workers
                    )));
                }
            _ => {}
        }
        Ok(())
    }
}

#[derive(Debug)]
enum Source {
    Cyclic,
    RandomSequential,
    RandomParallel { round: Vec<usize> },
    SharedUniform,
    PartitionedShuffle {
        owner: Vec<usize>,
        parts: Vec<Vec<usize>>,
        pos: Vec<usize>,
    },
    Replay { events: std::vec::IntoIter<ScheduleEvent> },
}

/// Stateful single-consumer event source.
#[derive(Debug)]
pub struct Scheduler {
    cfg: SchedulerConfig,
    rng: Prng,
    cumulative: Option<Vec<f64>>,
    max_cost: f64,
    k: u64,
    source: Source,
}

/// Build the event source described by `cfg`.
pub fn make_scheduler(cfg: &SchedulerConfig) -> Result<Scheduler> {
    cfg.validate()?;
    let source = match cfg.kind {
        SchedulerKind::Cyclic => Source::Cyclic,
        SchedulerKind::RandomSequential => Source::RandomSequential,
        SchedulerKind::RandomParallel => Source::RandomParallel { round: Vec::new() },
        SchedulerKind::SharedUniform => Source::SharedUniform,
        SchedulerKind::PartitionedShuffle => {
            let parts = cfg.effective_partitions();
            let mut owner = vec![0; cfg.n_blocks];
            for (w, p) in parts.iter().enumerate() {
                for &b in p {
                    owner[b] = w;
                }
            }
            let pos = parts.iter().map(|p| p.len()).collect();
            Source::PartitionedShuffle { owner, parts, pos }
        }
    };
    let max_cost = match &cfg.delay_law {
        DelayLaw::CostProportional { costs } => costs.iter().copied().fold(0.0, f64::max),
        _ => 1.0,
    };
    Ok(Scheduler {
        cfg: cfg.clone(),
        rng: rng::seeded(cfg.seed),
        cumulative: cfg.weights.as_deref().map(rng::cumulative),
        max_cost,
        k: 0,
        source,
    })
}

/// Scheduler that emits exactly `events`, then ends.
pub fn replay(events: Vec<ScheduleEvent>) -> Scheduler {
    let n = events.first().map_or(0, |e| e.d.len());
    let delta = events.iter().map(ScheduleEvent::max_delay).max().unwrap_or(0);
    Scheduler {
        cfg: SchedulerConfig::new(SchedulerKind::Cyclic, n).with_delta(delta),
        rng: rng::seeded(0),
        cumulative: None,
        max_cost: 1.0,
        k: 0,
        source: Source::Replay { events: events.into_iter() },
    }
}

impl Scheduler {
    pub fn config(&self) -> &SchedulerConfig {
        &self.cfg
    }

    pub fn n_blocks(&self) -> usize {
        self.cfg.n_blocks
    }

    /// Largest delay the source can emit.
    pub fn delta(&self) -> usize {
        self.cfg.delta
    }

    pub fn is_replay(&self) -> bool {
        matches!(self.source, Source::Replay { .. })
    }

    fn draw_block(&mut self) -> usize {
        match &self.cumulative {
            Some(c) => rng::weighted_index(&mut self.rng, c),
            None => rng::index(&mut self.rng, self.cfg.n_blocks),
        }
    }

    fn draw_delay(&mut self, updated: usize) -> usize {
        let delta = self.cfg.delta;
        match &self.cfg.delay_law {
            DelayLaw::Constant => delta,
            DelayLaw::Uniform => rng::index(&mut self.rng, delta + 1),
            DelayLaw::Geometric { p } => {
                let p = *p;
                let mut d = 0;
                while d < delta && rng::unit(&mut self.rng) >= p {
                    d += 1;
                }
                d
            }
            DelayLaw::CostProportional { costs } => {
                let m = (delta as f64 * costs[updated] / self.max_cost).round() as usize;
                rng::index(&mut self.rng, m.min(delta) + 1)
            }
        }
    }

    /// Delay vector from the configured law, zero on `skip` blocks, clamped to `k`.
    fn law_delays(&mut self, i: usize, zero: impl Fn(usize) -> bool) -> Vec<usize> {
        let k = self.k as usize;
        (0..self.cfg.n_blocks)
            .map(|j| if zero(j) { 0 } else { self.draw_delay(i).min(k) })
            .collect()
    }

    fn generate(&mut self) -> Option<ScheduleEvent> {
        let n = self.cfg.n_blocks;
        let k = self.k;
        let (i, d) = match &mut self.source {
            Source::Replay { events } => return events.next(),
            Source::Cyclic => ((k % n as u64) as usize, vec![0; n]),
            Source::RandomSequential => (self.draw_block(), vec![0; n]),
            Source::RandomParallel { .. } => {
                let c = self.cfg.workers;
                let slot = (k % c as u64) as usize;
                if slot == 0 {
                    let mut round = Vec::with_capacity(c);
                    while round.len() < c {
                        let b = self.draw_block();
                        if !round.contains(&b) {
                            round.push(b);
                        }
                    }
                    self.source = Source::RandomParallel { round };
                }
                let Source::RandomParallel { round } = &self.source else { unreachable!() };
                let i = round[slot];
                // Every update of the round reads the round-start iterate.
                let d = (0..n).map(|j| if j == i { 0 } else { slot }).collect();
                (i, d)
            }
            Source::SharedUniform => {
                let i = self.draw_block();
                (i, self.law_delays(i, |j| j == i))
            }
            Source::PartitionedShuffle { owner, parts, pos } => {
                let w = (k % parts.len() as u64) as usize;
                if pos[w] == parts[w].len() {
                    rng::shuffle(&mut self.rng, &mut parts[w]);
                    pos[w] = 0;
                }
                let i = parts[w][pos[w]];
                pos[w] += 1;
                let owner = owner.clone();
                (i, self.law_delays(i, |j| owner[j] == w))
            }
        };
        Some(ScheduleEvent { k, i, d })
    }
}

impl Iterator for Scheduler {
    type Item = ScheduleEvent;

    fn next(&mut self) -> Option<ScheduleEvent> {
        let e = self.generate()?;
        self.k = e.k + 1;
        Some(e)
    }
}
