//! Sparse kernel AUC maximization with greedy basis selection.
//!
//! The model is `f(x) = Σ_{c∈J} β_c k(x, x_c)` over a small set `J` of
//! training examples, trained on the pairwise squared-hinge objective
//!
//! ```text
//! E(β) = ½ βᵀ K_JJ β + (C/2) Σ_{i∈P, j∈N} max(0, 1 - f(x_i) + f(x_j))²
//! ```
//!
//! without ever materializing the `p × n` pairs.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod dataio;
pub mod error;
pub mod eval;
pub mod greedy;
pub mod kernel;
pub mod model;
pub mod objective;
pub mod pairstats;
pub mod tron;

pub use error::{Error, Result};
