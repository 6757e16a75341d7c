//! Master-equation models of single-level transistors and the amplifier
//! circuits built from them, with power-law fitting and multistage gain
//! optimization.

// `!(x > 0.0)` is used deliberately so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod circuits;
pub mod device;
pub mod multistage;
pub mod powerfit;
pub mod roots;
pub mod stochastic;
pub mod units;

/// Library version recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
