//! Scenario files, suites, reports and the `memtune` command line.
//!
//! - [`config`]: scenario and models files, bundled fixtures.
//! - [`suite`]: controller / baseline / oracle runs, prefetch ablation,
//!   overhead accounting.
//! - [`report`]: run summaries, CSV and JSON-lines output.
//! - [`calibration`]: calibration target files.

pub mod calibration;
pub mod config;
mod error;
pub mod report;
pub mod suite;

pub use error::HarnessError;
