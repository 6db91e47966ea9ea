//! Stroboscopic-map analysis of periodically perturbed planar three-body
//! models: Lagrange-point geometry, periodic-orbit refinement, monodromy
//! normal forms, and transit-orbit construction and verification.

pub mod config;
pub mod error;
pub mod integrate;
pub mod lagrange;
pub mod models;
pub mod porbit;
pub mod symmap;
pub mod transit;

pub use error::{Error, Result};
