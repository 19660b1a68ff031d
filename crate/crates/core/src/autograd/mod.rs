//! Minimal dense-tensor engine with reverse-mode differentiation.
//!
//! Forward operations are recorded on a [`Tape`]; [`Tape::backward`] replays
//! the record in reverse to produce gradients. Everything runs in 64-bit
//! floats so analytic gradients can be validated against central finite
//! differences.

pub mod gradcheck;
mod tape;
mod tensor;

pub use tape::{Activation, Tape, Var};
pub use tensor::Tensor;
