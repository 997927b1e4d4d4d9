//! Simulation of a heralded measurement-and-feedforward squeezing gate.
//!
//! * [`gaussian`]: Gaussian states, symplectic maps, loss, conditioning, fidelity.
//! * [`filter`]: the probabilistic heralding filter and its action on Gaussian ensembles.
//! * [`gate`]: analytic composition of the full gate.
//! * [`montecarlo`]: trajectory-level simulator used to cross-check the analytics.
//! * [`fock`]: truncated photon-number engine for non-Gaussian inputs.

// `!(x > 0.0)` range checks also reject NaN; index loops mirror the matrix algebra
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod error;
pub mod filter;
pub mod fock;
pub mod gate;
pub mod gaussian;
pub mod montecarlo;
pub mod quadrature;
pub mod units;

pub use error::{Error, Result};
