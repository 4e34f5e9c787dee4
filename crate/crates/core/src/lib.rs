//! Entropy of patterns of i.i.d. sequences.
//!
//! The pattern of a sequence replaces every symbol by the order of its first
//! occurrence, so `lossless` and `sellsoll` both become `12331433`. This crate
//! evaluates closed-form upper and lower bounds on the block entropy of the
//! pattern in terms of the i.i.d. entropy and counts of letter probabilities
//! falling in quadratic grids, and ships exact oracles (enumeration, Monte
//! Carlo) and a sequential probability assignment with an arithmetic coder
//! that realize the upper bounds at small scale.
//!
//! All entropies and code lengths are in bits.

pub mod bounds;
pub mod coder;
pub mod distributions;
mod error;
pub mod grids;
pub mod numeric;
pub mod oracle;
pub mod patterns;

pub use error::{Error, Result};
