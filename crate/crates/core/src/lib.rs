//! Visual-bias templates estimated from feature-space noise, and linear SVMs
//! whose hyperplane is held inside a cone around such a template.
//!
//! The crate is organised bottom-up:
//!
//! - [`featspace`]: feature spaces, seeded white noise, HOG extraction and
//!   renderers that turn feature vectors into images for human labelers.
//! - [`classimg`]: trial records and the classification-image estimators.
//! - [`observer`]: a simulated linear observer used as ground truth.
//! - [`conesvm`]: second-order cone projection and the constrained SVM solver.
//! - [`eval`]: average precision, synthetic data and experiment runners.
//! - [`io`]: the JSON Lines formats shared by every tool.

pub mod classimg;
pub mod conesvm;
mod error;
pub mod eval;
pub mod featspace;
pub mod fsum;
pub mod io;
pub mod observer;
pub mod rng;

pub use error::{Error, Result};

/// Version string embedded into every file the tools write.
pub const TOOL_VERSION: &str = concat!("visbias ", env!("CARGO_PKG_VERSION"));
