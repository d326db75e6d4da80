//! Files, configuration, oracle suites and the command-line front end for
//! `spikenm-core`.

pub mod checkpoint;
pub mod config;
pub mod dataset;
pub mod error;
pub mod exec;
pub mod maskfile;
pub mod report;
pub mod run;
pub mod verify;

pub use error::{Error, Result};
