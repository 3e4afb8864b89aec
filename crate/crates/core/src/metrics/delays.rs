use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::engine::Trace;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DelayReport {
    pub events: usize,
    /// Mean over events of the largest component of `d^k`.
    pub average_delay: f64,
    /// Mean over events of the smallest component of `d^k`.
    pub average_min_delay: f64,
    /// Empirical `δ`.
    pub max_delay: usize,
    pub block_updates: Vec<u64>,
    /// Mean of the largest delay over the events that updated each block.
    pub block_average_delay: Vec<f64>,
    /// Length of the window `[l − δ, l − 1]` used by the update counters.
    pub counter_window: usize,
    /// `max_k M_i^k` per block.
    pub block_max_updates: Vec<u64>,
    /// `C = max_{i,k} M_i^k`.
    pub update_bound: u64,
}

/// Delay statistics and the update counters `M_i^k = max_{l=k..k+T} |K̄_i^l|`,
/// with `K̄_i^l` the iterations in `[l − δ, l − 1]` that updated block `i`.
/// `delta` is the counter window; `None` uses the largest observed delay.
///
/// The maximum over `k` of `M_i^k` does not depend on `T`, so only the
/// counter window enters the computation.
pub fn delay_stats(trace: &Trace, n_blocks: usize, delta: Option<usize>) -> DelayReport {
    let recs = &trace.records;
    let max_delay = recs.iter().map(|r| r.d_max).max().unwrap_or(0);
    let window = delta.unwrap_or(max_delay);
    let mut block_updates = vec![0u64; n_blocks];
    let mut block_delay_sum = vec![0.0; n_blocks];
    let mut counts = vec![0u64; n_blocks];
    let mut block_max_updates = vec![0u64; n_blocks];
    let mut recent: VecDeque<usize> = VecDeque::with_capacity(window + 1);
    for r in recs {
        // counts now describe K̄^{k} = iterations k−δ … k−1
        for b in 0..n_blocks {
            block_max_updates[b] = block_max_updates[b].max(counts[b]);
        }
        block_updates[r.i] += 1;
        block_delay_sum[r.i] += r.d_max as f64;
        if window > 0 {
            recent.push_back(r.i);
            counts[r.i] += 1;
            if recent.len() > window {
                let old = recent.pop_front().unwrap();
                counts[old] -= 1;
            }
        }
    }
    for b in 0..n_blocks {
        block_max_updates[b] = block_max_updates[b].max(counts[b]);
    }
    let n = recs.len().max(1) as f64;
    DelayReport {
        events: recs.len(),
        average_delay: recs.iter().map(|r| r.d_max as f64).sum::<f64>() / n,
        average_min_delay: recs.iter().map(|r| r.d_min as f64).sum::<f64>() / n,
        max_delay,
        block_average_delay: block_delay_sum
            .iter()
            .zip(&block_updates)
            .map(|(s, &c)| if c == 0 { 0.0 } else { s / c as f64 })
            .collect(),
        block_updates,
        counter_window: window,
        update_bound: block_max_updates.iter().copied().max().unwrap_or(0),
        block_max_updates,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::StepRecord;

    fn trace(events: &[(usize, usize)]) -> Trace {
        let records = events
            .iter()
            .enumerate()
            .map(|(k, &(i, d))| StepRecord {
                k: k as u64,
                worker: 0,
                i,
                d_min: 0,
                d_max: d,
                step_norm: 0.0,
                f: 0.0,
                ftilde: 0.0,
                mf: None,
                wall_ns: None,
            })
            .collect();
        Trace { records, ..Trace::empty(vec![0.0], 0.0) }
    }

    #[test]
    fn synchronous_trace_has_zero_delays() {
        let t = trace(&[(0, 0), (1, 0), (0, 0), (1, 0)]);
        let r = delay_stats(&t, 2, None);
        assert_eq!((r.max_delay, r.average_delay, r.update_bound), (0, 0.0, 0));
        assert_eq!(r.block_updates, vec![2, 2]);
    }

    #[test]
    fn cyclic_trace_updates_each_block_once_per_window() {
        let ev: Vec<(usize, usize)> = (0..40).map(|k| (k % 4, 0)).collect();
        let r = delay_stats(&trace(&ev), 4, Some(4));
        assert_eq!(r.update_bound, 1);
        assert_eq!(r.block_max_updates, vec![1; 4]);
    }

    #[test]
    fn repeated_block_counts_within_window() {
        let ev = [(0, 0), (0, 1), (0, 2), (1, 2), (0, 1)];
        let r = delay_stats(&trace(&ev), 2, Some(3));
        assert_eq!(r.block_max_updates, vec![3, 1]);
        assert_eq!(r.max_delay, 2);
        assert!((r.average_delay - 1.2).abs() < 1e-15);
        assert!((r.block_average_delay[0] - 1.0).abs() < 1e-15);
    }
}
