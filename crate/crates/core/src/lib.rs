//! Federated learning simulator with differentially private momentum
//! updates, Count-Sketch compression, and Byzantine-robust aggregation.
//!
//! The pipeline per round: each user clips and privatizes a minibatch
//! gradient, folds it into a momentum buffer, compresses the momentum with a
//! shared sketch, and uploads k floats. The federator aggregates the
//! compressed vectors with a robust rule, decompresses, and takes a global
//! step. Privacy is tracked by a Rényi accountant with subsampling
//! amplification; robustness is certified empirically by subset enumeration.

pub mod accountant;
pub mod aggregate;
pub mod attack;
pub mod data;
pub mod dp;
pub mod error;
pub mod par;
pub mod rng;
pub mod sim;
pub mod sketch;
pub mod tensor;

pub use error::{Error, Result};
