//! Ultimatum Game agents driven by values and norms, exhaustive estimation
//! of their latent preferences, and elicitation strategies that shrink the
//! set of equally good estimates.

pub mod calibration;
pub mod error;
pub mod estimation;
pub mod experiments;
pub mod format;
pub mod game;
pub mod model;
pub mod reduction;
pub mod rng;
pub mod stats;

pub use error::{Error, Result};
