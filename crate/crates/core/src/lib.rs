//! Dependence-aware Morris elementary-effects screening.
//!
//! Paths are sampled on a `p`-level grid over the unit hypercube in three
//! stages: a block is chosen by Latin hypercube sampling with dependence, a
//! starting corner is drawn from the copula's mass on the block's corners, and
//! the traversal order is a uniform random permutation. Under the independence
//! copula this reduces to the classic Morris design.

pub mod bufferbox;
pub mod campaign;
pub mod copula;
pub mod effects;
mod error;
pub mod evaluator;
pub mod grid;
pub mod objective;
pub mod sampler;

pub use error::{Error, Result};
