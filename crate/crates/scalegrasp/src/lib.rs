//! File formats and the command-line driver for `scalegrasp-core`.
//!
//! Point clouds are PLY files (see [`ply`]); grasps, labels, index lists and
//! feature rows are whitespace-separated text (see [`records`]); histograms,
//! asset manifests, scene specs, encoder weights and reports are JSON (see
//! [`formats`]).

pub mod cli;
pub mod config;
pub mod error;
pub mod formats;
pub mod ply;
pub mod records;

pub use error::{IoError, Result};
pub use scalegrasp_core as core;
