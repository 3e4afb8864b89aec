use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::{ScheduleEvent, SchedulerConfig};

/// Empirical selection-frequency check over sliding windows of length `T`.
///
/// Frequencies stand in for the conditional selection probabilities, so a
/// flag here is a warning rather than a failure.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct C2Report {
    pub window: usize,
    pub p_min: f64,
    pub windows: u64,
    /// Smallest windowed frequency seen for each block.
    pub min_frequency: Vec<f64>,
    /// Fraction of windows in which each block fell below `p_min`.
    pub below_fraction: Vec<f64>,
    /// Blocks below `p_min` in more than half of the windows.
    pub flagged: Vec<usize>,
    /// Smallest over blocks of the mean windowed frequency.
    pub estimated_p_min: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub events: u64,
    pub delta: usize,
    pub max_delay: usize,
    pub c1_violations: u64,
    pub c3_violations: u64,
    /// Events whose iteration counter is not the previous one plus one.
    pub order_violations: u64,
    pub c2: C2Report,
}

impl ValidationReport {
    /// Bounded delays and fresh reads of the updated block hold on every event.
    pub fn passed(&self) -> bool {
        self.c1_violations == 0 && self.c3_violations == 0 && self.order_violations == 0
    }
}

/// Streaming validator, so long traces need not be held in memory.
#[derive(Debug)]
pub struct TraceValidator {
    n: usize,
    delta: usize,
    window: usize,
    p_min: f64,
    events: u64,
    next_k: Option<u64>,
    max_delay: usize,
    c1: u64,
    c3: u64,
    order: u64,
    recent: VecDeque<usize>,
    counts: Vec<u64>,
    windows: u64,
    min_count: Vec<u64>,
    below: Vec<u64>,
    count_sum: Vec<u64>,
}

impl TraceValidator {
    pub fn new(cfg: &SchedulerConfig) -> Self {
        let n = cfg.n_blocks;
        let window = cfg.window_len();
        TraceValidator {
            n,
            delta: cfg.delta,
            window,
            p_min: cfg.p_min_value(),
            events: 0,
            next_k: None,
            max_delay: 0,
            c1: 0,
            c3: 0,
            order: 0,
            recent: VecDeque::with_capacity(window + 1),
            counts: vec![0; n],
            windows: 0,
            min_count: vec![u64::MAX; n],
            below: vec![0; n],
            count_sum: vec![0; n],
        }
    }

    pub fn push(&mut self, e: &ScheduleEvent) {
        self.events += 1;
        if self.next_k.is_some_and(|k| k != e.k) {
            self.order += 1;
        }
        self.next_k = Some(e.k + 1);
        let m = e.max_delay();
        self.max_delay = self.max_delay.max(m);
        if m > self.delta || e.d.len() != self.n {
            self.c1 += 1;
        }
        if e.d.get(e.i).copied().unwrap_or(1) != 0 {
            self.c3 += 1;
        }
        if e.i >= self.n {
            return;
        }
        self.recent.push_back(e.i);
        self.counts[e.i] += 1;
        if self.recent.len() > self.window {
            let old = self.recent.pop_front().unwrap();
            self.counts[old] -= 1;
        }
        if self.recent.len() == self.window {
            self.windows += 1;
            let floor = self.p_min * self.window as f64;
            for b in 0..self.n {
                let c = self.counts[b];
                self.min_count[b] = self.min_count[b].min(c);
                self.count_sum[b] += c;
                if (c as f64) < floor {
                    self.below[b] += 1;
                }
            }
        }
    }

    pub fn finish(self) -> ValidationReport {
        let w = self.window as f64;
        let nw = self.windows.max(1) as f64;
        let (min_frequency, below_fraction, mean): (Vec<f64>, Vec<f64>, Vec<f64>) = if self.windows == 0 {
            (vec![0.0; self.n], vec![0.0; self.n], vec![0.0; self.n])
        } else {
            (
                self.min_count.iter().map(|&c| c as f64 / w).collect(),
                self.below.iter().map(|&b| b as f64 / nw).collect(),
                self.count_sum.iter().map(|&s| s as f64 / (nw * w)).collect(),
            )
        };
        let flagged = below_fraction
            .iter()
            .enumerate()
            .filter(|(_, f)| **f > 0.5)
            .map(|(b, _)| b)
            .collect();
        let estimated_p_min = mean.iter().copied().fold(f64::INFINITY, f64::min);
        ValidationReport {
            events: self.events,
            delta: self.delta,
            max_delay: self.max_delay,
            c1_violations: self.c1,
            c3_violations: self.c3,
            order_violations: self.order,
            c2: C2Report {
                window: self.window,
                p_min: self.p_min,
                windows: self.windows,
                min_frequency,
                below_fraction,
                flagged,
                estimated_p_min: if estimated_p_min.is_finite() { estimated_p_min } else { 0.0 },
            },
        }
    }
}

/// Check a trace for bounded delays, fresh reads of the updated block, and
/// report windowed selection frequencies.
pub fn validate_trace<'a>(
    events: impl IntoIterator<Item = &'a ScheduleEvent>,
    cfg: &SchedulerConfig,
) -> ValidationReport {
    let mut v = TraceValidator::new(cfg);
    for e in events {
        v.push(e);
    }
    v.finish()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scheduler::{make_scheduler, SchedulerKind};

    #[test]
    fn cyclic_trace_passes_with_exact_frequencies() {
        let mut cfg = SchedulerConfig::new(SchedulerKind::Cyclic, 4);
        cfg.window = Some(4);
        cfg.p_min = Some(0.25);
        let ev: Vec<_> = make_scheduler(&cfg).unwrap().take(100).collect();
        let r = validate_trace(&ev, &cfg);
        assert!(r.passed());
        assert!(r.c2.flagged.is_empty());
        assert_eq!(r.c2.min_frequency, vec![0.25; 4]);
        assert_eq!(r.c2.windows, 97);
    }

    #[test]
    fn single_stale_own_block_counts_once() {
        let cfg = SchedulerConfig::new(SchedulerKind::Cyclic, 2).with_delta(1);
        let mut ev: Vec<_> = make_scheduler(&cfg).unwrap().take(10).collect();
        let i = ev[5].i;
        ev[5].d[i] = 1;
        let r = validate_trace(&ev, &cfg);
        assert_eq!(r.c3_violations, 1);
        assert_eq!(r.c1_violations, 0);
        assert!(!r.passed());
    }

    #[test]
    fn delay_above_bound_is_counted() {
        let cfg = SchedulerConfig::new(SchedulerKind::Cyclic, 2).with_delta(1);
        let mut ev: Vec<_> = make_scheduler(&cfg).unwrap().take(10).collect();
        let i = ev[4].i;
        ev[4].d[1 - i] = 2;
        let r = validate_trace(&ev, &cfg);
        assert_eq!((r.c1_violations, r.max_delay), (1, 2));
    }

    #[test]
    fn starved_block_is_flagged() {
        let mut cfg = SchedulerConfig::new(SchedulerKind::RandomSequential, 3).with_seed(2);
        cfg.weights = Some(vec![1.0, 1.0, 0.01]);
        cfg.p_min = Some(0.1);
        cfg.window = Some(30);
        let ev: Vec<_> = make_scheduler(&cfg).unwrap().take(3000).collect();
        let r = validate_trace(&ev, &cfg);
        assert!(r.passed());
        assert_eq!(r.c2.flagged, vec![2]);
        assert!(r.c2.estimated_p_min < 0.02);
    }
}
