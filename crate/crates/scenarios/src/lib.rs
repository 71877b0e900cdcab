//! Scenario catalog, configuration, reports and penalty experiments built on
//! `mpcc-core`.

pub mod config;
pub mod penalty;
pub mod pipeline;
pub mod report;

pub use config::{ConfigError, ScenarioConfig};
pub use pipeline::{run_scenario, ScenarioError};
pub use report::{ScenarioReport, Status};

use std::path::{Path, PathBuf};

/// Directory holding the shipped scenario files.
pub fn catalog_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios")
}

/// Loads a shipped scenario by name (`"S1"` ... `"S7"`).
pub fn catalog(name: &str) -> Result<ScenarioConfig, ConfigError> {
    ScenarioConfig::load(&catalog_dir().join(format!("{}.toml", name.to_lowercase())))
}
