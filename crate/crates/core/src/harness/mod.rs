//! Experiment harness: datasets, configuration, subcommand dispatch and
//! CSV reports.

pub mod config;
pub mod data;
pub mod report;
pub mod run;

pub use config::{ExperimentConfig, Subcommand};
pub use data::{gen_two_moons, load_idx, Dataset, Split};
pub use report::{write_report, ExperimentReport};
pub use run::{run, run_file};
