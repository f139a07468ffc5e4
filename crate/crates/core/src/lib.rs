//! Multilevel Monte Carlo estimation of groundwater travel time through a
//! conditioned lognormal transmissivity field.
//!
//! The pipeline for one sample is: draw a Gaussian field on a half-spacing
//! lattice by circulant embedding ([`fieldgen`]), condition it on borehole
//! data by simple kriging ([`conditioning`]), solve the Darcy head problem
//! on the fine and coarse grids ([`flow`]) and track a particle to the site
//! boundary ([`transport`]). [`mlmc`] combines such samples across levels.

#[cfg(feature = "cli")]
pub mod cli;
pub mod conditioning;
pub mod covariance;
pub mod error;
pub mod fieldgen;
pub mod flow;
pub mod grid;
pub mod iodata;
pub mod mlmc;
pub mod stream;
pub mod study;
pub mod transport;

pub use error::{Error, Result};
