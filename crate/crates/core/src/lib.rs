//! Uniform multi-penalty regularization for linear inverse problems.
//!
//! Each point of the discretized unknown carries its own Tikhonov weight.
//! The weights are chosen by a majorization-minimization loop that equalizes
//! every penalty term against the data misfit.

// `!(x > 0.0)` rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod io;
pub mod linalg;
pub mod mm;
pub mod operators;
pub mod oracle;
pub mod penalties;
pub mod solvers;
pub mod testproblems;
pub mod tikhonov;

pub use error::{Error, Result};
pub use mm::{ConvergenceTrace, LambdaVector, MMConfig, MMResult};
pub use operators::{DenseOperator, KroneckerOperator, LinearOperator, Operator};
pub use penalties::{GridShape, PenaltyModel};
pub use solvers::{SolveResult, SubproblemSpec};
pub use testproblems::{Constraint, InverseProblem};
