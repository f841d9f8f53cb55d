//! Simulation of the stochastic heat equation `du = (1/2) u_xx dt + sigma(u) dW`
//! on the unit circle, with Monte Carlo experiments on small-ball tails,
//! coefficient truncation and freezing couplings, and the parabolic
//! Chung-scaling statistic `sup |u| / f(r)`.

pub mod cli;
pub mod coupling;
pub mod domain;
pub mod error;
pub mod estimators;
pub mod kernel;
pub mod noise;
pub mod solver;

pub use error::{Error, Result};
