//! Contact process with i.i.d. bounded random vertex weights on the rooted
//! regular tree `T^d`.
//!
//! The crate provides three layers:
//!
//! * event-driven simulation of the process itself ([`cp_sim`]), including
//!   pathwise-monotone coupling across infection rates and a coupled
//!   non-backtracking SIR overlay,
//! * exact computation: transfer-matrix moments of SIR generation sizes
//!   ([`sir_moments`]), matrix-exponential means of the auxiliary linear
//!   system on truncated trees ([`linear_sys`]), finite-state duality checks
//!   ([`duality`]), and the auxiliary walk laws ([`walks`]),
//! * closed-form critical-rate bounds ([`bounds`]) and estimation pipelines
//!   that sandwich Monte Carlo estimates between them ([`estimate`]).
//!
//! Weight laws are restricted to finite support (see [`WeightDistribution`]);
//! any bounded law can be approximated this way and finite support is what
//! makes the transfer-matrix moments exact.

pub mod bounds;
pub mod cp_sim;
pub mod duality;
mod error;
pub mod estimate;
mod fenwick;
pub mod linear_sys;
pub mod rng;
pub mod sir_moments;
pub mod stats;
pub mod tree;
pub mod walks;
pub mod weights;

pub use bounds::BoundsReport;
pub use cp_sim::{CensorReason, CpRunConfig, SurvivalEstimate, TrajectorySummary};
pub use error::Error;
pub use estimate::{CriticalEstimate, SweepResult};
pub use sir_moments::{EdgeKernels, GenerationSizes, MomentReport};
pub use tree::{TruncatedTree, VertexId};
pub use weights::{QuenchedEnvironment, WeightDistribution};

/// Crate-wide result type.
pub type Result<T> = std::result::Result<T, Error>;
