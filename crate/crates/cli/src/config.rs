//! Run configuration read from JSON. Every block is optional and falls back to
//! the default mission; unknown keys are rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use resil_core::error::{Error, Result};
use resil_core::sim::{GainSource, Scenario};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub scenario: Scenario,
    pub output: OutputPaths,
    pub pareto: ParetoConfig,
}

/// File names, resolved against `--out`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputPaths {
    pub analysis_json: PathBuf,
    pub reference_csv: PathBuf,
    pub trace_csv: PathBuf,
    pub metrics_json: PathBuf,
    pub front_csv: PathBuf,
    pub cells_csv: PathBuf,
}

impl Default for OutputPaths {
    fn default() -> Self {
        Self {
            analysis_json: "analysis.json".into(),
            reference_csv: "reference.csv".into(),
            trace_csv: "trace.csv".into(),
            metrics_json: "metrics.json".into(),
            front_csv: "pareto_front.csv".into(),
            cells_csv: "pareto_cells.csv".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ParetoConfig {
    pub tau_grid_s: Vec<f64>,
    pub wmax_grid: Vec<f64>,
    pub seeds_per_cell: usize,
    /// Gains used in every cell. Designing per cell is infeasible at large
    /// delays, so the sweep keeps one gain set fixed.
    pub gains: GainSource,
}

impl Default for ParetoConfig {
    fn default() -> Self {
        Self {
            tau_grid_s: vec![0.2, 1.0, 2.0, 3.0, 8.0, 10.0],
            wmax_grid: vec![0.01, 0.05, 0.1, 0.25, 0.5, 1.0],
            seeds_per_cell: 3,
            gains: GainSource::DesignPoint { lip_l_per_s: 0.1, tau_s: 0.2 },
        }
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let cfg: RunConfig = match path {
            None => RunConfig::default(),
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| Error::Config(format!("cannot read {}: {e}", p.display())))?;
                serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?
            }
        };
        cfg.scenario.validate()?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_is_default() {
        let cfg: RunConfig = serde_json::from_str("{}").unwrap();
        assert_eq!(cfg, RunConfig::default());
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(serde_json::from_str::<RunConfig>(r#"{"scenario": {"tau": 1}}"#).is_err());
        assert!(serde_json::from_str::<RunConfig>(r#"{"scenario": {"params": {"omega_rad": 1}}}"#).is_err());
        assert!(serde_json::from_str::<RunConfig>(r#"{"extra": 1}"#).is_err());
    }

    #[test]
    fn round_trip() {
        let cfg = RunConfig::default();
        let text = serde_json::to_string(&cfg).unwrap();
        assert_eq!(serde_json::from_str::<RunConfig>(&text).unwrap(), cfg);
    }
}
