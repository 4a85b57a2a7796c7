//! Command-line harness: configuration, artifacts and the scripted experiments.

pub mod calibrate;
pub mod config;
pub mod error;
pub mod experiments;
pub mod fit;
pub mod output;
