//! Manifest-driven experiments on the Random Energy Model.
//!
//! A run reads one [`manifest::ExperimentManifest`], executes it on a
//! worker pool and writes `results.csv`, `overlay.csv`, the resolved
//! manifest and `summary.json` to the output directory.

pub mod bounds;
pub mod error;
pub mod manifest;
pub mod run;
pub mod suite;
mod table;

pub use error::CliError;
pub use manifest::{Check, ExperimentKind, ExperimentManifest, Workers};
pub use run::{execute, run_experiment, Artifacts, CheckOutcome, RunOutcome};
