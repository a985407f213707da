//! Command-line front end: scenario documents, run manifests, and the
//! subcommand implementations behind the `fpgraph` binary.

pub mod commands;
pub mod error;
pub mod manifest;
pub mod runner;
pub mod scenario;

pub use commands::{run, Cli};
pub use error::CliError;
pub use manifest::RunManifest;
pub use runner::{run_scenario, verify_manifest, RunOutcome};
pub use scenario::{apply_override, Scenario};
