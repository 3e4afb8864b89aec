use std::collections::VecDeque;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::problem::{BlockPartition, BlockVector};

/// The last `δ + 1` iterates `x^{k−δ}, …, x^k` and per-block write counts.
/// Iterates with negative index are `x⁰`.
#[derive(Debug, Clone)]
pub struct VersionedHistory {
    part: Arc<BlockPartition>,
    depth: usize,
    ring: VecDeque<Vec<f64>>,
    k: u64,
    versions: Vec<u64>,
}

impl VersionedHistory {
    /// History able to serve delays up to `delta`.
    pub fn new(part: Arc<BlockPartition>, x0: Vec<f64>, delta: usize) -> Result<Self> {
        if x0.len() != part.dim() {
            return Err(Error::Dimension(format!("start has length {}, partition {}", x0.len(), part.dim())));
        }
        let mut ring = VecDeque::with_capacity(delta + 2);
        ring.push_back(x0);
        let n = part.n_blocks();
        Ok(VersionedHistory { part, depth: delta + 1, ring, k: 0, versions: vec![0; n] })
    }

    pub fn partition(&self) -> &Arc<BlockPartition> {
        &self.part
    }

    pub fn k(&self) -> u64 {
        self.k
    }

    /// Largest delay that can be served.
    pub fn max_delay(&self) -> usize {
        self.depth - 1
    }

    pub fn current(&self) -> &[f64] {
        self.ring.back().expect("history is never empty")
    }

    /// `x^l`, for `l ≤ k`.
    pub fn iterate(&self, l: i64) -> Result<&[f64]> {
        let l = l.max(0) as u64;
        let oldest = self.k + 1 - self.ring.len() as u64;
        if l > self.k || l < oldest {
            return Err(Error::Dimension(format!(
                "iterate {l} is outside the stored range {oldest}..={}",
                self.k
            )));
        }
        Ok(&self.ring[(l - oldest) as usize])
    }

    pub fn versions(&self) -> &[u64] {
        &self.versions
    }

    /// Writes `x^{k−d_j}` restricted to block `j`, for every `j`, into `out`.
    pub fn compose_into(&self, d: &[usize], out: &mut [f64]) -> Result<()> {
        if d.len() != self.part.n_blocks() || out.len() != self.part.dim() {
            return Err(Error::Dimension("delay vector or output does not match the partition".into()));
        }
        for (j, &dj) in d.iter().enumerate() {
            if dj > self.max_delay() {
                return Err(Error::Dimension(format!(
                    "delay {dj} of block {j} exceeds the stored history depth {}",
                    self.max_delay()
                )));
            }
            let src = self.iterate(self.k as i64 - dj as i64)?;
            let r = self.part.range(j);
            out[r.clone()].copy_from_slice(&src[r]);
        }
        Ok(())
    }

    /// Appends `x^{k+1}`, equal to `x^k` except block `i`.
    pub fn push_block(&mut self, i: usize, block: &[f64]) {
        let r = self.part.range(i);
        if self.depth == 1 {
            self.ring[0][r].copy_from_slice(block);
        } else {
            let mut next = if self.ring.len() == self.depth { self.ring.pop_front().unwrap() } else { Vec::new() };
            next.clear();
            next.extend_from_slice(self.current());
            next[r].copy_from_slice(block);
            self.ring.push_back(next);
        }
        self.versions[i] += 1;
        self.k += 1;
    }
}

/// `x̃` with `x̃_j = x_j^{k−d_j}`.
pub fn compose_delayed_view(hist: &VersionedHistory, d: &[usize]) -> Result<BlockVector> {
    let mut out = vec![0.0; hist.partition().dim()];
    hist.compose_into(d, &mut out)?;
    BlockVector::new(hist.partition().clone(), out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hist(delta: usize) -> VersionedHistory {
        let part = Arc::new(BlockPartition::new(vec![1, 1, 1]).unwrap());
        VersionedHistory::new(part, vec![0.0; 3], delta).unwrap()
    }

    #[test]
    fn zero_delay_is_current() {
        let mut h = hist(2);
        h.push_block(1, &[5.0]);
        let v = compose_delayed_view(&h, &[0, 0, 0]).unwrap();
        assert_eq!(v.as_slice(), h.current());
    }

    #[test]
    fn mixed_view_that_never_existed() {
        // block j at iteration t is set to 10 t + j
        let mut h = hist(3);
        for (t, j) in (1..=5u64).zip([0, 1, 0, 2, 1]) {
            h.push_block(j, &[10.0 * t as f64 + j as f64]);
            let cur = h.current().to_vec();
            for jj in 0..3 {
                if jj != j {
                    assert_eq!(cur[jj], h.iterate(t as i64 - 1).unwrap()[jj]);
                }
            }
        }
        // x^2 = (10, 21, 0), x^4 = (30, 21, 42), x^5 = (30, 51, 42)
        let v = compose_delayed_view(&h, &[3, 1, 0]).unwrap();
        assert_eq!(v.as_slice(), &[10.0, 21.0, 42.0]);
        for l in 0..=5 {
            assert_ne!(h.iterate(l).map(|x| x.to_vec()).ok(), Some(v.as_slice().to_vec()));
        }
        assert_eq!(h.versions(), &[2, 2, 1]);
    }

    #[test]
    fn early_delays_read_the_start() {
        let mut h = hist(4);
        h.push_block(0, &[1.0]);
        let v = compose_delayed_view(&h, &[4, 0, 0]).unwrap();
        assert_eq!(v.as_slice(), &[0.0, 0.0, 0.0]);
        assert!(compose_delayed_view(&h, &[5, 0, 0]).is_err());
    }

    #[test]
    fn depth_one_keeps_only_current() {
        let mut h = hist(0);
        for t in 0..4 {
            h.push_block(t % 3, &[t as f64 + 1.0]);
        }
        assert_eq!(h.current(), &[4.0, 2.0, 3.0]);
        assert!(h.iterate(3).is_err());
    }
}
