//! Differentiable greedy maximization of submodular set functions.
//!
//! The two probabilistic algorithms — a smoothed randomized double greedy
//! for unconstrained problems and a soft sequential greedy for cardinality
//! constraints — induce differentiable distributions over subsets, so set
//! functions can be fit to observed sets by maximum likelihood while
//! retaining approximation guarantees at low temperature.

pub mod autodiff;
pub mod data;
pub mod dgreedy;
pub mod error;
pub mod metrics;
pub mod models;
pub mod oracle;
pub mod pgreedy;
pub mod set;
pub mod setfn;
pub mod train;

pub use error::{Error, Result};
pub use set::{ItemOrder, ItemSet};
