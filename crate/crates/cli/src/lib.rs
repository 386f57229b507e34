//! Batch runner for the quantum plasmonic kinetics pipeline.
//!
//! `simulate` synthesises datasets, `estimate` runs the bootstrap fits,
//! `compare` checks measured spread against the two noise laws and
//! `ingest-timetags` turns raw detector streams into a dataset. All
//! commands read a [`RunConfig`] and leave a manifest in their output
//! directory that reproduces the run.

// `!(x > 0.0)` is how NaN gets rejected along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod error;

pub use config::RunConfig;
pub use error::{CliError, CliResult};
