//! Learning trackable reference trajectories from noisy observations.
//!
//! A Gaussian process models an unknown reference signal from time/value
//! data. Its hyperparameters are fitted by minimizing the negative log
//! marginal likelihood subject to trackability constraints for a scalar
//! linear system: the posterior mean must stay inside the state box and
//! inside the one-step reachable tube of its own previous sample. Two
//! structure-specific trainers extend the finite constraint horizon to all
//! times: an iterative scheme for asymptotically constant references and an
//! interval-certified formulation for periodic ones. A small tracking MPC
//! with terminal equality constraint closes the loop on the learned
//! reference.

pub mod asymptotic;
pub mod cli;
pub mod config;
pub mod data;
pub mod error;
pub mod gp;
pub mod hyperopt;
pub mod kernels;
pub mod linalg;
pub mod mpc;
mod nelder_mead;
pub mod periodic;
pub mod reachability;

pub use data::{Dataset, DatasetRole};
pub use error::{Error, Result};
pub use gp::{build_posterior, GPPosterior, PredictionRecord};
pub use kernels::{Hyperparameters, KernelFamily, MeanSpec};
pub use reachability::{
    check_trackable, one_step_reachable, tube_growth_bounds, Interval, LinearSystem1D,
    TrackabilityReport, TubeGrowth, ViolationKind,
};
