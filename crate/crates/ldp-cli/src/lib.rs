//! IO, preprocessing, experiment orchestration, and persistence for the
//! `ldp-core` privacy toolkit. The `ldp` binary in this crate exposes the
//! subcommand surface; everything it does goes through this library so tests
//! can drive the same paths.

pub mod config;
pub mod error;
pub mod experiments;
pub mod idx;
pub mod model_io;
pub mod preprocess;
pub mod report;
pub mod splits;
pub mod synth;

pub use error::{CliError, Result};
