//! Experiment orchestration: configs, seeded trials, summaries, manifests.
//!
//! Every trial draws from its own stream derived from the master seed and
//! the trial index, and results are merged by index, so outputs do not
//! depend on the worker count.

pub mod config;
pub mod coverage;
pub mod report;
pub mod run;
pub mod sample_size;
pub mod soundness;
pub mod verify;

pub use config::{EpsPolicy, ExperimentConfig, ExperimentKind};
pub use report::{coverage, Coverage, Manifest, SummaryRow};
pub use run::{run_config_file, run_experiment, summarize, RunOutcome, Trials};
pub use sample_size::{sample_size_table, SampleSizeRow};
pub use verify::{verify_run, VerifyReport};
