//! Risk-aware safety filtering for control-affine stochastic systems.
//!
//! The crate provides, as a library and through the `riskgate` CLI:
//!
//! - a control-affine SDE abstraction with fixed-step Euler-Maruyama
//!   integration and stopped-process semantics ([`sde`]),
//! - barrier-function calculus: the generator, its QP-ready affine
//!   decomposition, and the diffusion Lie derivative ([`barrier`]),
//! - every closed-form risk bound used by the safety filters, backed by
//!   in-crate erf/erfc/erf_inv ([`risk`], [`special`]),
//! - S-CBF and risk-aware (RA-CBF) quadratic-program safety filters with a
//!   small dense active-set solver ([`filter`], [`qp`]),
//! - concrete robot and highway-merging scenarios ([`models`], [`scenario`]),
//! - a seed-deterministic parallel Monte Carlo harness ([`mc`]).

pub mod barrier;
pub mod cli;
pub mod error;
pub mod filter;
pub mod mc;
pub mod models;
pub mod qp;
pub mod rng;
pub mod risk;
pub mod scenario;
pub mod sde;
pub mod special;

pub use error::{Error, Result};
