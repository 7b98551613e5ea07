//! Strictly unpaired epoch sampling.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::Tensor;
use crate::error::{Error, Result};

/// Visits each stored sample exactly once per epoch in seeded-shuffled
/// order, reshuffling at every epoch boundary. Two samplers never share a
/// random stream, so X and Y visit orders stay uncorrelated.
pub struct UnpairedSampler {
    samples: Vec<Tensor>,
    order: Vec<usize>,
    pos: usize,
    rng: ChaCha8Rng,
}

impl UnpairedSampler {
    pub fn new(samples: Vec<Tensor>, seed: u64) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::InvalidArg {
                op: "unpaired_sampler",
                msg: "domain has no samples".into(),
            });
        }
        let order: Vec<usize> = (0..samples.len()).collect();
        Ok(UnpairedSampler {
            pos: samples.len(), // forces a shuffle on first use
            samples,
            order,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    pub fn epoch_len(&self) -> usize {
        self.samples.len()
    }

    /// One sample (batch size 1).
    pub fn next_batch(&mut self) -> Tensor {
        if self.pos == self.order.len() {
            self.order.shuffle(&mut self.rng);
            self.pos = 0;
        }
        let sample = self.samples[self.order[self.pos]].clone();
        self.pos += 1;
        sample
    }

    /// Visit order of the upcoming epoch (test support).
    #[cfg(test)]
    pub(crate) fn peek_order(&mut self) -> Vec<usize> {
        if self.pos == self.order.len() {
            self.order.shuffle(&mut self.rng);
            self.pos = 0;
        }
        self.order.clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn points(n: usize) -> Vec<Tensor> {
        (0..n)
            .map(|i| Tensor::from_parts(vec![1], vec![i as f64], false))
            .collect()
    }

    #[test]
    fn epoch_visits_each_sample_exactly_once() {
        let mut s = UnpairedSampler::new(points(17), 3).unwrap();
        for _ in 0..3 {
            let mut seen = vec![0usize; 17];
            for _ in 0..17 {
                let v = s.next_batch().data()[0] as usize;
                seen[v] += 1;
            }
            assert!(seen.iter().all(|&c| c == 1));
        }
    }

    #[test]
    fn same_seed_same_order() {
        let mut a = UnpairedSampler::new(points(50), 9).unwrap();
        let mut b = UnpairedSampler::new(points(50), 9).unwrap();
        for _ in 0..100 {
            assert_eq!(a.next_batch().data(), b.next_batch().data());
        }
    }

    #[test]
    fn independent_seeds_give_uncorrelated_orders() {
        let n = 1000;
        let mut x = UnpairedSampler::new(points(n), 101).unwrap();
        let mut y = UnpairedSampler::new(points(n), 202).unwrap();
        let ox = x.peek_order();
        let oy = y.peek_order();
        // Pearson correlation of the two permutations (equals Spearman rank
        // correlation since values are ranks).
        let mean = (n as f64 - 1.0) / 2.0;
        let (mut cov, mut var) = (0.0, 0.0);
        for i in 0..n {
            let dx = ox[i] as f64 - mean;
            let dy = oy[i] as f64 - mean;
            cov += dx * dy;
            var += dx * dx;
        }
        let rho = cov / var;
        assert!(rho.abs() < 0.1, "rank correlation {rho}");
    }

    #[test]
    fn empty_domain_is_an_error() {
        assert!(UnpairedSampler::new(Vec::new(), 0).is_err());
    }
}
