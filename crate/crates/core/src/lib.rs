//! Optimal and shadow-price trading bands for a long-run mean-variance investor facing a
//! proportional bid-ask spread.
//!
//! The crate solves both free boundary problems exactly, evaluates the long-run performance
//! of any control limit policy from its stationary density, compares the results with their
//! small-spread expansions and validates everything by Monte Carlo simulation.

pub mod asymptotics;
pub mod cli;
pub mod compare;
pub mod error;
pub mod mc;
pub mod model;
pub mod numerics;
pub mod optimal_fbp;
pub mod perf;
pub mod shadow_fbp;

pub use error::{Error, Result};
pub use model::{band_from_pi, merton_fraction, Band, CaseTag, MarketParams};
