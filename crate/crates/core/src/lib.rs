//! Deterministic simulation and analysis of heat-bath algorithmic
//! cooling on spin chains.
//!
//! A chain of n spins holds a handful of fast-relaxing reset spins at
//! the low end and computation spins above them. Reversible gates
//! (polarization transfer and 2/3/4-spin compressions) concentrate
//! polarization toward the most significant spin; WAIT steps let the
//! reset spins rethermalize. The crate provides the program builders for
//! the practicable and ladder cooling algorithms, a marginal-bias engine
//! that runs them under finite relaxation ratios, a brute-force oracle
//! on the full 2^n distribution for validating the engine and for
//! running partner pairing, closed-form analysis helpers, and (n, R)
//! sweep drivers.

pub mod analysis;
pub mod engine;
pub mod error;
pub mod golden;
#[cfg(test)]
mod invariants;
pub mod oracle;
pub mod programs;
pub mod spin;
pub mod sweep;

pub use error::{Error, Result};
