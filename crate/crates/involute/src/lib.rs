//! Desk-scale training and evaluation for one-to-one unpaired domain
//! translation: a single self-inverse generator trained with separated
//! adversarial and cycle-consistency objectives, next to the classic
//! two-generator baseline, on synthetic tasks with known ground-truth
//! bijections.

pub mod autodiff;
pub mod checkpoint;
pub mod gan;
pub mod cli;
pub mod config;
mod error;
pub mod data;
pub mod metrics;
pub mod nn;
pub mod optim;

pub use error::{Error, Result};

/// Derives an independent RNG seed from a base seed and a stream tag
/// (splitmix64 step). Used everywhere two components must not share a
/// random stream.
pub fn subseed(base: u64, stream: u64) -> u64 {
    let mut z = base ^ stream.wrapping_mul(0x9e3779b97f4a7c15);
    z = z.wrapping_add(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}
