//! File formats, experiment pipeline and command line for `sed-forge-core`.

pub mod annotations;
pub mod cache;
pub mod config;
pub mod container;
pub mod error;
pub mod manifest;
pub mod model;
pub mod pipeline;
pub mod plot;
pub mod report;
pub mod wav;

pub use error::{FormatError, Result};
