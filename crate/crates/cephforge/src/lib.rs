//! File formats, dataset export and the `cephforge` command-line tool.
//!
//! The numerical work lives in [`cephforge_core`]; this crate adds the
//! volume/raster sidecar formats, PNG and landmark IO, tab-separated dataset
//! manifests, an on-disk projection cache and the CLI.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cache;
pub mod cli;
pub mod dataset;
pub mod error;
pub mod io;
pub mod manifest;
pub mod meta;

pub use error::{Error, Result};
