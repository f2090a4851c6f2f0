//! Synthetic corneal OCT B-scan generator.
//!
//! Pipeline: parametric five-layer geometry ([`geometry`]) → thickness,
//! label and coefficient maps ([`optics`]) → per-A-line Monte Carlo
//! transport ([`transport`]) → confocal/roll-off system model and rendering
//! ([`system`]) → packaged samples and datasets ([`pipeline`]).

pub mod cli;
pub mod config;
pub mod geometry;
pub mod grid;
pub mod optics;
pub mod pipeline;
pub mod rng;
pub mod system;
pub mod transport;

pub use grid::Grid;
