//! Spectral gaps and Hoeffding-type concentration bounds for continuous-time
//! Markov chains.
//!
//! The crate is organised around the pipeline
//! generator → stationary law → spectral gap → tail bound → Monte Carlo check:
//!
//! - [`generator`]: conservative Q-matrices, validation, stationary
//!   distributions, time reversal and additive symmetrization.
//! - [`spectral`]: L²(π) gaps (dense and Lanczos), Dirichlet forms,
//!   birth-death closed forms and lower bounds, drift certificates.
//! - [`truncation`]: collapsed chains approximating countable chains.
//! - [`skeleton`]: `exp(δQ)` by uniformization and discrete-time gaps.
//! - [`simulator`]: exact trajectory simulation and tail estimates.
//! - [`bounds`]: closed-form tail bounds and verification reports.
//! - [`io`]: JSON model/function files and CSV writers.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bounds;
pub mod config;
pub mod error;
pub mod generator;
pub mod io;
pub mod simulator;
pub mod skeleton;
pub mod spectral;
pub mod truncation;

pub use config::Tolerances;
pub use error::{Error, Result};
pub use generator::{GeneratorMatrix, ObservableFunction, StationaryDistribution};
