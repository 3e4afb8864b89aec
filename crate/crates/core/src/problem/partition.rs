use std::ops::Range;
use std::sync::Arc;

use crate::error::{Error, Result};

/// Split of `x ∈ ℝⁿ` into `N` contiguous blocks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockPartition {
    sizes: Vec<usize>,
    offsets: Vec<usize>,
}

impl BlockPartition {
    pub fn new(sizes: Vec<usize>) -> Result<Self> {
        if sizes.is_empty() {
            return Err(Error::Dimension("partition needs at least one block".into()));
        }
        if let Some(i) = sizes.iter().position(|&s| s == 0) {
            return Err(Error::Dimension(format!("block {i} has size 0")));
        }
        let mut offsets = Vec::with_capacity(sizes.len() + 1);
        offsets.push(0);
        for s in &sizes {
            offsets.push(offsets.last().unwrap() + s);
        }
        Ok(Self { sizes, offsets })
    }

    /// `n` variables in `blocks` contiguous blocks whose sizes differ by at most one.
    pub fn uniform(n: usize, blocks: usize) -> Result<Self> {
        if blocks == 0 || blocks > n {
            return Err(Error::Dimension(format!("cannot split {n} variables into {blocks} blocks")));
        }
        let base = n / blocks;
        let extra = n % blocks;
        Self::new((0..blocks).map(|i| base + usize::from(i < extra)).collect())
    }

    pub fn dim(&self) -> usize {
        *self.offsets.last().unwrap()
    }

    pub fn n_blocks(&self) -> usize {
        self.sizes.len()
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn offsets(&self) -> &[usize] {
        &self.offsets[..self.sizes.len()]
    }

    pub fn size(&self, i: usize) -> usize {
        self.sizes[i]
    }

    #[inline]
    pub fn range(&self, i: usize) -> Range<usize> {
        self.offsets[i]..self.offsets[i + 1]
    }

    #[inline]
    pub fn block<'a>(&self, x: &'a [f64], i: usize) -> &'a [f64] {
        &x[self.range(i)]
    }

    #[inline]
    pub fn block_mut<'a>(&self, x: &'a mut [f64], i: usize) -> &'a mut [f64] {
        &mut x[self.range(i)]
    }

    /// Block that owns coordinate `j`.
    pub fn block_of(&self, j: usize) -> usize {
        match self.offsets.binary_search(&j) {
            Ok(p) => p.min(self.sizes.len() - 1),
            Err(p) => p - 1,
        }
    }
}

/// A point of `ℝⁿ` together with the partition it is read through.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockVector {
    data: Vec<f64>,
    partition: Arc<BlockPartition>,
}

impl BlockVector {
    pub fn new(partition: Arc<BlockPartition>, data: Vec<f64>) -> Result<Self> {
        if data.len() != partition.dim() {
            return Err(Error::Dimension(format!(
                "vector has length {}, partition expects {}",
                data.len(),
                partition.dim()
            )));
        }
        Ok(Self { data, partition })
    }

    pub fn zeros(partition: Arc<BlockPartition>) -> Self {
        let n = partition.dim();
        Self { data: vec![0.0; n], partition }
    }

    pub fn partition(&self) -> &Arc<BlockPartition> {
        &self.partition
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn block(&self, i: usize) -> &[f64] {
        self.partition.block(&self.data, i)
    }

    pub fn block_mut(&mut self, i: usize) -> &mut [f64] {
        let r = self.partition.range(i);
        &mut self.data[r]
    }

    pub fn blocks(&self) -> impl Iterator<Item = &[f64]> {
        (0..self.partition.n_blocks()).map(move |i| self.block(i))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn rejects_empty_blocks() {
        assert!(BlockPartition::new(vec![2, 0, 1]).is_err());
        assert!(BlockPartition::new(vec![]).is_err());
        assert!(BlockPartition::uniform(3, 4).is_err());
    }

    #[test]
    fn block_of_maps_coordinates() {
        let p = BlockPartition::new(vec![2, 3, 1]).unwrap();
        let owners: Vec<usize> = (0..6).map(|j| p.block_of(j)).collect();
        assert_eq!(owners, vec![0, 0, 1, 1, 1, 2]);
    }

    proptest! {
        #[test]
        fn uniform_partition_invariants(n in 1usize..500, frac in 0.0f64..1.0) {
            let blocks = 1 + ((n - 1) as f64 * frac) as usize;
            let p = BlockPartition::uniform(n, blocks).unwrap();
            prop_assert_eq!(p.sizes().iter().sum::<usize>(), n);
            prop_assert!(p.sizes().iter().all(|&s| s >= 1));
            prop_assert!(p.offsets().windows(2).all(|w| w[0] < w[1]));
            let data: Vec<f64> = (0..n).map(|i| i as f64).collect();
            let v = BlockVector::new(Arc::new(p.clone()), data.clone()).unwrap();
            let joined: Vec<f64> = v.blocks().flat_map(|b| b.iter().copied()).collect();
            prop_assert_eq!(joined, data);
            for i in 0..p.n_blocks() {
                prop_assert_eq!(v.block(i).len(), p.size(i));
            }
        }
    }
}
