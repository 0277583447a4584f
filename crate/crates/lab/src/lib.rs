//! Experiments on top of `lattrans`: built-in fixtures, a deterministic mean
//! and energy oracle, refinement studies, validation runs, report emission
//! and the `lattrans` command-line driver.

pub mod cli;
pub mod config;
pub mod consistency;
pub mod error;
pub mod fixtures;
pub mod oracle;
pub mod report;
pub mod studies;
pub mod validate;

pub use error::{LabError, Result};
