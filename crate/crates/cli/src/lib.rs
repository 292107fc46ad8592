//! Config-driven experiment runner behind the `invdecomp` binary.
//!
//! A run validates an [`ExperimentConfig`], builds the kernel and symmetry
//! group it names, executes the requested checks together with their
//! prerequisites, and writes `report.json`, CSV tables and `summary.txt`.
//! Checks whose prerequisite did not pass are reported as skipped.

pub mod checks;
pub mod config;
pub mod presets;
pub mod runner;

pub use checks::Check;
pub use config::{ConfigError, ExperimentConfig};
pub use presets::{list_presets, preset};
pub use runner::{run, Report, RunOutput, Status};

/// Exit code for a run whose checks all passed.
pub const EXIT_PASS: i32 = 0;
/// Exit code when at least one check failed or was skipped.
pub const EXIT_CHECK_FAILED: i32 = 1;
/// Exit code for unreadable, malformed or inconsistent configs.
pub const EXIT_CONFIG: i32 = 2;
