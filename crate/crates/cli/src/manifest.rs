use std::path::Path;

use orbitrl_core::rl::TrainerConfig;
use orbitrl_core::MissionConfig;
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const METRICS_FILE: &str = "metrics.csv";
pub const EVALUATIONS_FILE: &str = "evaluations.csv";
pub const CHECKPOINT_FILE: &str = "final.ckpt";
pub const BEST_CHECKPOINT_FILE: &str = "best.ckpt";
pub const CATALOG_COPY_FILE: &str = "catalog.tle";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CatalogInfo {
    /// Path, URL or `builtin:iss` as given on the command line.
    pub source: String,
    /// Verbatim copy of the catalog bytes, relative to the run directory.
    pub copy: String,
    pub records: usize,
    pub rejected: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub episodes: usize,
    pub mean_reward: f64,
    pub std_reward: f64,
    pub objectives_met_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Artifacts {
    pub metrics: String,
    pub evaluations: String,
    pub checkpoint: String,
    pub best_checkpoint: Option<String>,
}

/// Everything needed to reproduce a training run, plus its outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub seed: u64,
    pub trainer: TrainerConfig,
    pub mission: MissionConfig,
    pub catalog: CatalogInfo,
    pub started_at: String,
    pub finished_at: String,
    pub timesteps: u64,
    pub updates: usize,
    pub interventions: usize,
    pub first_success_timesteps: Option<u64>,
    pub final_evaluation: EvalSummary,
    pub artifacts: Artifacts,
}

impl RunManifest {
    pub fn write(&self, dir: &Path) -> Result<(), CliError> {
        let text = serde_json::to_string_pretty(self).map_err(CliError::training)?;
        let path = dir.join(MANIFEST_FILE);
        std::fs::write(&path, text + "\n").map_err(|e| CliError::data(format!("cannot write {}: {e}", path.display())))
    }

    pub fn read(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::config(format!("cannot read manifest {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::config(format!("manifest {}: {e}", path.display())))
    }
}
