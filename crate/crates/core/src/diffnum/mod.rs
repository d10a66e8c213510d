//! Dense double-precision matrices with reverse-mode differentiation and an
//! Adam optimizer.

mod adam;
mod matrix;
mod tape;

pub use adam::{Adam, AdamConfig, Parameter};
pub use matrix::{dot, norm, Matrix};
pub use tape::{cosine, grad, Gradients, Groups, Tape, Var};
