//! Chase-escape dynamics on Gilbert graphs.
//!
//! An infection starts at a node placed at the origin of a Poisson point
//! process and spreads over susceptible neighbours of a Gilbert graph, while
//! white knights convert infected neighbours into further white knights.
//! The crate provides
//!
//! * [`geometry`]: Poisson sampling, i.i.d. thinning into susceptible and
//!   white-knight marks, Gilbert graph construction on a cell grid, clusters,
//!   self-avoiding path counts and finite-box percolation estimates,
//! * [`dynamics`]: an exact Gillespie (direct method) simulation of the
//!   continuous-time jump process with censoring and outcome classification,
//! * [`analytics`]: the closed-form thresholds and bounds,
//! * [`reference_models`]: the same dynamics on the half-line chain and on
//!   rooted k-ary trees, with exact birth-death oracles,
//! * [`experiments`]: replicated Monte Carlo estimators and phase-diagram
//!   sweeps with reproducible, cell-indexed random streams.

pub mod analytics;
pub mod dynamics;
pub mod error;
pub mod experiments;
pub mod geometry;
pub mod reference_models;
pub mod stream;

pub use error::{Error, Result};
