//! Adaptive-robust outer-loop control of Euler-Lagrange systems with
//! time-varying input delay.
//!
//! The crate covers the Razumikhin delay margin and ultimate bounds of the
//! closed loop ([`stability`]), the controllers ([`control`]), plant models
//! ([`plants`]), a fixed-step delayed simulator ([`sim`]), scenario files
//! ([`scenario`]) and tracking metrics ([`metrics`]).

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::too_many_arguments)]

pub mod control;
pub mod linalg;
pub mod metrics;
pub mod plants;
pub mod scenario;
pub mod sim;
pub mod stability;

pub use scenario::Scenario;
pub use sim::{simulate, Trace};
