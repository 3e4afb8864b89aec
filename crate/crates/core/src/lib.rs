//! Asynchronous parallel successive convex approximation for
//! `min f(x) + Σ_i g_i(x_i)` over block-separable convex sets, optionally with
//! private nonconvex block constraints.
//!
//! Each iteration picks a block `i`, reads a possibly stale view `x̃` of the
//! shared iterate, minimizes a strongly convex model of `f` in block `i` plus
//! `g_i`, and moves block `i` a fraction `γ` toward that minimizer.

pub mod engine;
pub mod error;
pub mod generate;
pub mod linalg;
pub mod metrics;
pub mod oracle;
pub mod problem;
pub mod rng;
pub mod scheduler;
pub mod subproblem;
pub mod surrogate;

pub use error::{Error, Result};
pub use problem::{BlockPartition, BlockVector, ProblemSpec};
