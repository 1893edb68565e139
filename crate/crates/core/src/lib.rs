//! Stochastic least-squares optimization.
//!
//! SGA-RMSProp with adaptive discounting factors, baseline RMSProp and SGD,
//! the RMSP2SGD switch, closed-form convergence bounds and an experiment harness.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bounds;
pub mod error;
pub mod harness;
pub mod io;
pub mod linalg;
pub mod optim;
pub mod problem;
pub mod rng;
pub mod sampling;

pub use error::{Error, Result};
pub use linalg::{DenseMatrix, SpectralSummary};
pub use problem::{Consistency, Decay, LlspInstance, ProblemSpec};
pub use sampling::{Batch, SamplingDistribution};
