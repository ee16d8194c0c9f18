//! Strategic generation-expansion planning over a shared DC-network market.
//!
//! Each strategic actor (a state regulator coordinating with its in-state
//! power companies) solves a chance-constrained bilevel program: expansion and
//! offer decisions in the upper level, a wholesale market-clearing LP in the
//! lower level. The crate provides
//!
//! - [`data`]: grid, actor and scenario model with validation,
//! - [`uncertainty`]: Gaussian forecast errors, affine recourse and the exact
//!   second-order-cone form of the generation chance constraints,
//! - [`market`]: the lower-level LP and its KKT system,
//! - [`mpec`]: single-actor program assembly with SOS1 complementarity and a
//!   binary price expansion,
//! - [`solver`]: a solver-agnostic conic program IR, a bounded simplex,
//!   branch-and-bound with SOC outer approximation, and an LP-format codec,
//! - [`hedging`]: leader-decomposed progressive hedging for the equilibrium,
//! - [`benchmark`]: the centralized planning baseline,
//! - [`validation`]: Monte Carlo, KKT-equivalence and feasibility audits.
//!
//! The crate is `no_std` (it needs `alloc`); IO lives in the companion crate.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod benchmark;
pub mod data;
mod error;
pub mod hedging;
pub mod market;
pub mod mpec;
pub mod solver;
pub mod uncertainty;
pub mod validation;

pub use error::{Error, Result};
