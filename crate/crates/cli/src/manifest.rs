//! Run manifests: scenario hash, version, timing, file inventory with
//! checksums, and headline diagnostics. The manifest is written last, so
//! its presence marks a completed run.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FileRecord {
    pub name: String,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Headline {
    pub final_time: f64,
    pub final_mass_defect: f64,
    pub max_mass_defect: f64,
    pub final_l2_to_gibbs: f64,
    pub final_sup_to_gibbs: f64,
    pub min_density_over_run: f64,
    pub final_free_energy: f64,
    pub reached_equilibrium: bool,
    pub step_size_underflow: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub scenario_hash: String,
    pub tool_version: String,
    pub started: String,
    pub finished: String,
    pub files: Vec<FileRecord>,
    pub headline: Headline,
    /// `ok` or `invariant_violation`.
    pub status: String,
    pub violations: Vec<String>,
}

pub fn sha256_file(path: impl AsRef<Path>) -> Result<String, CliError> {
    let bytes = std::fs::read(path)?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

impl RunManifest {
    pub fn write(&self, path: impl AsRef<Path>) -> Result<(), CliError> {
        let text = serde_json::to_string_pretty(self)
            .map_err(|e| CliError::Runtime(format!("manifest serialization: {e}")))?;
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| CliError::Parse(format!("manifest: {e}")))
    }
}
