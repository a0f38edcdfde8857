//! Randomization inference and sensitivity analysis for matched
//! observational studies with continuous or ordinal treatment doses.

pub mod assignment;
pub mod error;
pub mod model;
pub mod optim;
pub mod report;
pub mod sharp;
pub mod sim;
pub mod stats;
pub mod variance;
pub mod weak;

pub use error::{Error, Result};
