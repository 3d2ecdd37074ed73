//! Stochastic approximation MCMC with varying truncation and trajectory averaging.
//!
//! * [`driver`]: the generic recursion `θ_{k+1} = θ_k + a_k H(θ_k, x_{k+1})`
//!   with reinitialization on nested truncation sets.
//! * [`samc`]: stochastic approximation Monte Carlo for estimating subregion
//!   weights of an unnormalized density.
//! * [`samle`]: stochastic approximation maximum likelihood with MH imputation.
//! * [`oracle`]: exact finite-state quantities (mean field, Jacobian,
//!   Lyapunov descent, Poisson-equation noise covariance) for checking runs.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod chain;
pub mod driver;
pub mod kernels;
pub mod oracle;
pub mod samc;
pub mod samle;
pub mod schedule;
pub mod trace;
pub mod truncation;

pub use chain::FiniteChainSpec;
pub use driver::{run_sa, run_sa_with, RunOptions, SaError, SaProblem};
pub use schedule::{validate_schedule, GainSchedule, ValidationReport};
pub use trace::{trajectory_average, RunTrace};
pub use truncation::TruncationLadder;
