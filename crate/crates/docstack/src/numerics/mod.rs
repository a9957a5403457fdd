//! Deterministic tensor arithmetic, NN kernels, optimizer and RNG shared
//! by every other module.

pub mod adam;
pub mod ops;
pub mod rng;
pub mod tensor;

pub use adam::{adam_step, AdamState};
pub use rng::{child_seed, Rng};
pub use tensor::Tensor;
