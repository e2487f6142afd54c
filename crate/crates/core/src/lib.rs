//! Models of TCP flow-rate spread: the congestion-window Markov chain under
//! random loss, congestion-control state machines, a deterministic
//! packet-level simulator, and the statistics used to quantify how slowly
//! per-flow rates average out.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod chain;
pub mod error;
pub mod flow;
pub mod formulas;
pub mod sim;
pub mod stats;
pub mod store;

pub use error::{Error, Result};
pub use formulas::{Flavor, TcpParams};
