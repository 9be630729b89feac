//! Scenario runner behind the `impulse-heat` command.

pub mod config;
pub mod report;
pub mod run;

pub use config::{Profile, ScenarioConfig, Task, ValidationError};
pub use report::{Assertion, Report, TrajectoryTable};
pub use run::{run, CliError, Options, Outcome};
