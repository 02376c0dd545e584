//! Scenario files, experiment pipelines, property checks and CSV output
//! behind the `switchopt` command.

pub mod checks;
pub mod experiments;
pub mod output;
pub mod scenario;
