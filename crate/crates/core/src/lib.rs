//! Surface soil moisture from interferometric SAR time series.
//!
//! The processing chain per SSM grid cell:
//!
//! 1. form a distributed scatterer from KS-homogeneous pixels and estimate
//!    its coherence matrix, phases and phase closures ([`ds_formation`]);
//! 2. pick the driest meteorologically admissible acquisition from the
//!    cell-averaged coherence ([`dryness`]);
//! 3. order acquisitions from dry to wet and flag the dry subset
//!    ([`dryness`]);
//! 4. remove non-moisture decorrelation fitted over dry pairs
//!    ([`coherence_model`]);
//! 5. invert the analytical interferometric model ([`forward_model`],
//!    [`dielectric`]) for the moisture vector ([`inversion`]).
//!
//! [`simulator`] generates synthetic stacks with known moisture for
//! closed-loop checks and [`metrics`] scores estimates against reference
//! series.

pub mod coherence_model;
pub mod config;
pub mod dielectric;
pub mod dryness;
pub mod ds_formation;
pub mod forward_model;
pub mod inversion;
pub mod metrics;
pub mod phase;
pub mod pipeline;
pub mod simulator;
pub mod stack_io;
