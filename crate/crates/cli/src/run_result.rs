//! The JSON record written by `train` and by every `tune` cell.

use std::fs;
use std::path::Path;

use resgene_core::cv::{fold_mean, Aggregation, CvReport};
use resgene_core::models::{Precision, RidgeBaseline};
use resgene_core::net::ModelConfig;
use resgene_core::tensorize::SnpLayout;
use resgene_core::train::TrainConfig;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

pub const SCHEMA: &str = "resgene.run/1";
pub const TOOLKIT_VERSION: &str = env!("CARGO_PKG_VERSION");

/// How the model was built and trained. Network fields are absent for
/// ridge runs and the ridge field is absent for network runs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    /// Network of fold 0; later folds differ only in `init_seed`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub network: Option<ModelConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train: Option<TrainConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub layout: Option<SnpLayout>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub precision: Option<Precision>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ridge: Option<RidgeBaseline>,
    pub aggregation: Aggregation,
    pub permuted_labels: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub schema: String,
    pub toolkit_version: String,
    pub dataset: String,
    pub trait_name: String,
    pub model: String,
    pub seed: u64,
    pub folds: usize,
    pub config: RunConfig,
    pub fold_pccs: Vec<Option<f64>>,
    pub undefined_folds: usize,
    pub mean_pcc: Option<f64>,
    pub pooled_pcc: Option<f64>,
    /// `mean_pcc` or `pooled_pcc`, according to `config.aggregation`.
    pub score: Option<f64>,
    pub loss_traces: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub selected_lambdas: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_clock_seconds: Option<f64>,
}

impl RunResult {
    pub fn new(dataset: &str, seed: u64, config: RunConfig, report: CvReport) -> Self {
        Self {
            schema: SCHEMA.into(),
            toolkit_version: TOOLKIT_VERSION.into(),
            dataset: dataset.into(),
            score: report.score(),
            trait_name: report.trait_name,
            model: report.model,
            seed,
            folds: report.fold_pccs.len(),
            config,
            fold_pccs: report.fold_pccs,
            undefined_folds: report.undefined_folds,
            mean_pcc: report.mean_pcc,
            pooled_pcc: report.pooled_pcc,
            loss_traces: report.loss_traces,
            selected_lambdas: report.selected_lambdas,
            wall_clock_seconds: None,
        }
    }

    /// Structural checks applied to every file read back.
    pub fn check(&self) -> std::result::Result<(), String> {
        if self.schema != SCHEMA {
            return Err(format!(
                "unsupported schema {:?}, expected {SCHEMA:?}",
                self.schema
            ));
        }
        if self.fold_pccs.len() != self.folds {
            return Err(format!(
                "{} fold correlations for {} folds",
                self.fold_pccs.len(),
                self.folds
            ));
        }
        if self.fold_pccs.iter().filter(|p| p.is_none()).count() != self.undefined_folds {
            return Err("undefined_folds disagrees with fold_pccs".into());
        }
        if fold_mean(&self.fold_pccs) != self.mean_pcc {
            return Err("mean_pcc is not the mean of the fold correlations".into());
        }
        let expected = match self.config.aggregation {
            Aggregation::FoldMean => self.mean_pcc,
            Aggregation::Pooled => self.pooled_pcc,
        };
        if expected != self.score {
            return Err("score does not match the aggregation mode".into());
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self).map_err(resgene_core::Error::from)?;
        s.push('\n');
        Ok(s)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(CliError::io(dir))?;
        }
        fs::write(path, self.to_json()?).map_err(CliError::io(path))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(CliError::io(path))?;
        let run: Self = serde_json::from_str(&text).map_err(|source| CliError::Json {
            path: path.into(),
            source,
        })?;
        run.check().map_err(|m| CliError::Invalid {
            path: path.into(),
            message: m,
        })?;
        Ok(run)
    }
}
