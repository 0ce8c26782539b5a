//! Configuration-driven verification runs.

pub mod config;
pub mod report;
pub mod suites;

pub use config::{parse_config, SuiteConfig, SuiteName};
pub use report::{Check, Report, SuiteReport};
pub use suites::run_suite;
