//! Experiment orchestration, statistics, resource accounting and the
//! property suites behind `dlogsim verify`.

pub mod resources;
pub mod runner;
pub mod stats;
pub mod verify;

pub use resources::{resource_grid, ResourceInputs, ResourceReport};
pub use runner::{run_experiment, Algorithm, ExperimentConfig, HarnessError};
pub use stats::{wilson_interval, Summary};
pub use verify::{run_suite, Suite, SuiteReport};
