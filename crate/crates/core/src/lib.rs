//! Robust approximate-quadratic Lasso (RA-Lasso) and friends.
//!
//! * [`loss`]: square, RA-quadratic (Huber), Catoni and smoothed-LAD losses
//! * [`optimizer`]: composite gradient descent with soft-thresholding and
//!   an L1-ball side constraint
//! * [`regression`]: RA-Lasso, Lasso, R-Lasso, Catoni-Lasso, oracle least
//!   squares and the cross-validated noise-variance estimator
//! * [`robust_mean`]: RA-mean with calibrated `α` and the entrywise robust
//!   second-moment matrix
//! * [`simulation`]: data generators, metrics, tuning and scenario runs
//! * [`io`] / [`report`]: CSV and JSON ingestion and output

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod io;
pub mod loss;
pub mod optimizer;
pub mod regression;
pub mod report;
pub mod rng;
pub mod robust_mean;
pub mod simulation;
pub mod stats;

pub use error::{Error, Result};
pub use loss::{LossKind, LossSpec};
pub use optimizer::{FitConfig, FitResult, GammaU};
pub use regression::{Dataset, VarianceEstimate};
pub use robust_mean::{RaMeanConfig, RobustCovariance};
pub use simulation::{ErrorLaw, Method, MetricsReport, Model, Scenario};
