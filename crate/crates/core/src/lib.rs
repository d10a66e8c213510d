//! Generative self-supervised learning on hypergraphs by hyperedge filling.
//!
//! The crate is organised bottom-up:
//!
//! - [`hypergraph`]: data structures, text I/O, synthetic generation, splits.
//! - [`diffnum`]: dense matrices, reverse-mode differentiation, Adam.
//! - [`encoder`]: the mean-pooling hypergraph encoder and projection heads.
//! - [`train`]: augmentation, the hyperedge-filling loss, feature
//!   reconstruction warm-up and the two-stage training loop.
//! - [`eval`]: node classification and hyperedge prediction protocols.
//! - [`theory`]: numerical checks of the filling-task theory.
//! - [`diagnostics`]: singular-value spectrum, alignment and uniformity.

pub mod diagnostics;
pub mod diffnum;
pub mod encoder;
pub mod error;
pub mod eval;
pub mod hypergraph;
pub mod rng;
pub mod theory;
pub mod train;

pub use error::{Error, Result};
