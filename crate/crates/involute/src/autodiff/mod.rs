//! Minimal reverse-mode automatic differentiation over dense f64 tensors.
//!
//! The surface is intentionally small: dense row-major storage, no views,
//! no broadcasting beyond scalar/per-channel helpers. Every primitive the
//! networks and losses need lives in [`ops`], and [`check::finite_diff_check`]
//! provides the independent oracle used to verify all of them.
//!
//! Execution is single-threaded per training run; a [`Tape`] is not meant to
//! be shared across concurrent tasks.

pub mod check;
pub mod ops;
mod tape;
mod tensor;

pub use tape::{backward, Gradients, Tape};
pub use tensor::{NodeId, Tensor};
