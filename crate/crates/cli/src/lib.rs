//! Command-line front end for `hexplan-core`: cluster and model files,
//! reports with embedded run manifests, and experiment harnesses.

pub mod cli;
pub mod commands;
pub mod error;
pub mod exec;
pub mod io;
pub mod report;
