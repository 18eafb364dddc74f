//! Planar rigid-body impact toolkit.
//!
//! Contact models map a pre-impact state to a contact impulse; this crate
//! provides the impulse dynamics and energy-ellipse admissibility test they
//! share, six analytical models, parameter identification, Gaussian-process
//! learned models, a compliant-contact data generator and the evaluation
//! harness that compares them.

pub mod dataforge;
pub mod dynamics;
pub mod error;
pub mod evaluation;
pub mod gp;
pub mod identification;
pub mod models;
pub mod trial;

pub use error::{Error, Result};
