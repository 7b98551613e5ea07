//! History buffer of past generator outputs used to stabilize
//! discriminator updates.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::Tensor;
use crate::error::{Error, Result};

/// Fixed-capacity pool (default size 50). While filling, every query stores
/// its input and returns it unchanged. Once full, each query returns the
/// fresh input with probability 1/2, or swaps it against a uniformly chosen
/// stored tensor. Deterministic given the seed; contents are always
/// detached values.
pub struct ImagePool {
    capacity: usize,
    stored: Vec<Tensor>,
    rng: ChaCha8Rng,
}

impl ImagePool {
    pub fn new(capacity: usize, seed: u64) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::InvalidArg {
                op: "image_pool",
                msg: "capacity must be at least 1".into(),
            });
        }
        Ok(ImagePool {
            capacity,
            stored: Vec::with_capacity(capacity),
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.stored.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stored.is_empty()
    }

    pub fn query(&mut self, fake: &Tensor) -> Tensor {
        let fake = fake.detach();
        if self.stored.len() < self.capacity {
            self.stored.push(fake.clone());
            return fake;
        }
        if self.rng.random_bool(0.5) {
            let slot = self.rng.random_range(0..self.capacity);
            std::mem::replace(&mut self.stored[slot], fake)
        } else {
            fake
        }
    }

    #[cfg(test)]
    pub(crate) fn stored(&self) -> &[Tensor] {
        &self.stored
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tagged(i: usize) -> Tensor {
        Tensor::from_parts(vec![1], vec![i as f64], false)
    }

    #[test]
    fn fill_phase_returns_inputs_unchanged() {
        let mut pool = ImagePool::new(50, 1).unwrap();
        for i in 0..50 {
            let out = pool.query(&tagged(i));
            assert_eq!(out.data()[0], i as f64);
            assert_eq!(pool.len(), i + 1);
        }
        assert_eq!(pool.len(), 50);
    }

    #[test]
    fn post_fill_branching_is_seeded() {
        let run = |seed: u64| -> Vec<f64> {
            let mut pool = ImagePool::new(50, seed).unwrap();
            (0..200).map(|i| pool.query(&tagged(i)).data()[0]).collect()
        };
        assert_eq!(run(7), run(7));
        assert_ne!(run(7), run(8));
    }

    #[test]
    fn swap_fraction_is_half_over_many_queries() {
        let mut pool = ImagePool::new(50, 99).unwrap();
        for i in 0..50 {
            pool.query(&tagged(i));
        }
        let mut swaps = 0usize;
        let total = 10_000usize;
        for i in 0..total {
            let tag = (50 + i) as f64;
            let out = pool.query(&tagged(50 + i));
            if out.data()[0] != tag {
                swaps += 1;
            }
            assert_eq!(pool.len(), 50);
        }
        let fraction = swaps as f64 / total as f64;
        assert!(
            (0.48..=0.52).contains(&fraction),
            "swap fraction {fraction}"
        );
    }

    #[test]
    fn contents_stay_detached() {
        use crate::autodiff::{ops, Tape};
        let mut pool = ImagePool::new(4, 3).unwrap();
        let mut tape = Tape::new();
        let leaf = Tensor::filled(&[1], 0.5).with_grad();
        let attached = ops::scale(&mut tape, &leaf, 2.0).unwrap();
        let out = pool.query(&attached);
        assert!(!out.requires_grad());
        assert!(out.node_id().is_none());
        for stored in pool.stored() {
            assert!(!stored.requires_grad());
            assert!(stored.node_id().is_none());
        }
    }
}
