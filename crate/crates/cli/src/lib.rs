//! File formats and command implementations behind the `pricequake` binary.
//!
//! - [`config`]: exchange registry, parameter and grid files.
//! - [`dataset`]: daily open/close price files and their per-event returns.
//! - [`output`]: outcome and record streams, rasters and report tables.
//! - [`commands`]: the subcommands.

pub mod commands;
pub mod config;
pub mod dataset;
pub mod output;
