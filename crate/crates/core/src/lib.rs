//! Heat transport through coherent, chaotic, quasi one-dimensional systems.
//!
//! A chain of GOE blocks is coupled at its ends to two heat baths. The crate
//! solves the stationary two-bath master equation exactly and to first order
//! in the temperature difference, evaluates the heat current and the
//! linear-response conductance, and compares ensemble averages over sampled
//! chains with the self-consistent (Pastur) Green functions of the block model.
//!
//! Module map:
//! - [`rmt_chain`]: sampling and diagonalizing the block chain.
//! - [`bath_coupling`]: surface operators, kernels `X`, rates `W`, expansion objects.
//! - [`steady_state`]: exact and first-order stationary occupations.
//! - [`transport`]: heat current and conductance.
//! - [`greens`]: Pastur equation, strength functions, average level density.
//! - [`harness`]: reproducible ensemble experiments and their output files.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bath_coupling;
pub mod error;
pub mod exec;
pub mod fit;
pub mod greens;
pub mod harness;
pub mod linalg;
pub mod rmt_chain;
pub mod rng;
pub mod steady_state;
pub mod transport;

pub use error::{Error, Result};
pub use exec::Execution;
