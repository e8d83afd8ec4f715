//! Decision-theoretic toolkit for ad hoc teamwork under partial observability.

pub mod atpo;
pub mod baselines;
pub mod decision;
pub mod environments;
pub mod error;
pub mod harness;
pub mod kernel;
pub mod pomdp;
pub mod sampling;
