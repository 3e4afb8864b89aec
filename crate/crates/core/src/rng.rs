//! Seeded randomness. Every random choice in the library goes through
//! ChaCha8 seeded from a single `u64`; worker `w` of a run uses stream `w + 1`
//! of the run seed, and stream 0 is reserved for the coordinator.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub type Prng = ChaCha8Rng;

pub fn seeded(seed: u64) -> Prng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn worker_stream(seed: u64, worker: usize) -> Prng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(worker as u64 + 1);
    r
}

/// Uniform index in `0..n`, drawn through `u64` so the stream does not depend
/// on the platform's pointer width.
pub fn index(rng: &mut Prng, n: usize) -> usize {
    rng.random_range(0..n as u64) as usize
}

pub fn unit(rng: &mut Prng) -> f64 {
    rng.random::<f64>()
}

pub fn normal(rng: &mut Prng) -> f64 {
    rng.sample(StandardNormal)
}

/// Index drawn with probability proportional to `weights`.
pub fn weighted_index(rng: &mut Prng, cumulative: &[f64]) -> usize {
    let total = *cumulative.last().expect("nonempty weights");
    let u = unit(rng) * total;
    cumulative.partition_point(|&c| c <= u).min(cumulative.len() - 1)
}

pub fn cumulative(weights: &[f64]) -> Vec<f64> {
    weights
        .iter()
        .scan(0.0, |acc, w| {
            *acc += w;
            Some(*acc)
        })
        .collect()
}

/// Fisher–Yates shuffle using [`index`].
pub fn shuffle<T>(rng: &mut Prng, v: &mut [T]) {
    for k in (1..v.len()).rev() {
        let j = index(rng, k + 1);
        v.swap(k, j);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let a: Vec<usize> = (0..8).map({
            let mut r = worker_stream(5, 0);
            move |_| index(&mut r, 1000)
        }).collect();
        let b: Vec<usize> = (0..8).map({
            let mut r = worker_stream(5, 0);
            move |_| index(&mut r, 1000)
        }).collect();
        let c: Vec<usize> = (0..8).map({
            let mut r = worker_stream(5, 1);
            move |_| index(&mut r, 1000)
        }).collect();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn weighted_index_skips_zero_weights() {
        let cum = cumulative(&[0.0, 1.0, 0.0, 2.0]);
        let mut r = seeded(1);
        for _ in 0..1000 {
            let k = weighted_index(&mut r, &cum);
            assert!(k == 1 || k == 3);
        }
    }

    #[test]
    fn shuffle_is_a_permutation() {
        let mut v: Vec<usize> = (0..50).collect();
        shuffle(&mut seeded(2), &mut v);
        let mut s = v.clone();
        s.sort();
        assert_eq!(s, (0..50).collect::<Vec<_>>());
        assert_ne!(v, s);
    }
}
