//! Concrete [`FoldModel`]s: the residual network over either layout, and
//! the ridge baseline.

use resgene_autodiff::Float;
use serde::{Deserialize, Serialize};

use crate::cv::{FoldModel, FoldPrediction};
use crate::error::{Error, Result};
use crate::geno_io::GenotypeDataset;
use crate::net::{ModelConfig, Network};
use crate::ridge::{self, Design, LAMBDA_GRID};
use crate::seeds::{self, purpose};
use crate::tensorize::{plan_layout, LayoutMode, SnpLayout};
use crate::train::{predict_rows, train_fold, InputSet, TrainConfig};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Precision {
    #[default]
    F32,
    F64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum ResGeneVariant {
    /// One-channel square image.
    Image2d,
    /// `channels` stacked segments of the sequence.
    Tensor { channels: usize },
}

impl ResGeneVariant {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Image2d => "resgene-2d",
            Self::Tensor { .. } => "resgene-t",
        }
    }

    pub fn layout(&self, d: usize) -> Result<SnpLayout> {
        match *self {
            Self::Image2d => plan_layout(d, LayoutMode::Image2d, 1),
            Self::Tensor { channels } => plan_layout(d, LayoutMode::Tensor3d, channels),
        }
    }
}

/// Everything needed to train the network on one fold. Per-fold seeds for
/// initialisation, shuffling and dropout are derived from `seed`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResGeneModel {
    pub variant: ResGeneVariant,
    pub train: TrainConfig,
    pub dropout: f64,
    pub stage_widths: Option<Vec<usize>>,
    pub precision: Precision,
    pub seed: u64,
}

impl ResGeneModel {
    /// Network config for a dataset with `d` SNPs. `init_seed` is fold 0's.
    pub fn model_config(&self, d: usize) -> Result<(SnpLayout, ModelConfig)> {
        let layout = self.variant.layout(d)?;
        let mut cfg = ModelConfig::resnet18(layout.channels, layout.side);
        cfg.dropout = self.dropout;
        cfg.init_seed = seeds::derive(self.seed, 0, purpose::INIT);
        if let Some(w) = &self.stage_widths {
            if w.len() != cfg.blocks_per_stage.len() {
                return Err(Error::Model(format!(
                    "expected {} stage widths, got {}",
                    cfg.blocks_per_stage.len(),
                    w.len()
                )));
            }
            cfg.stage_widths = w.clone();
        }
        cfg.validate()?;
        Ok((layout, cfg))
    }

    fn run<T: Float>(
        &self,
        dataset: &GenotypeDataset,
        train_rows: &[usize],
        train_targets: &[f64],
        test_rows: &[usize],
        fold: usize,
    ) -> Result<FoldPrediction> {
        let (layout, mut cfg) = self.model_config(dataset.d())?;
        cfg.init_seed = seeds::derive(self.seed, fold, purpose::INIT);
        let inputs = InputSet::<T>::new(dataset, &layout)?;
        let mut net = Network::<T>::new(cfg)?;
        let train = TrainConfig {
            seed: seeds::derive(self.seed, fold, purpose::SHUFFLE),
            ..self.train.clone()
        };
        let outcome = train_fold(&mut net, &inputs, train_rows, train_targets, &train)?;
        let predictions = predict_rows(
            &net,
            &inputs,
            test_rows,
            &outcome.scaler,
            self.train.batch_size.max(2),
        )?;
        Ok(FoldPrediction {
            predictions,
            loss_trace: outcome.loss_trace,
            selected_lambda: None,
        })
    }
}

impl FoldModel for ResGeneModel {
    fn name(&self) -> String {
        self.variant.name().into()
    }

    fn fit_predict(
        &self,
        dataset: &GenotypeDataset,
        train_rows: &[usize],
        train_targets: &[f64],
        test_rows: &[usize],
        fold: usize,
    ) -> Result<FoldPrediction> {
        match self.precision {
            Precision::F32 => self.run::<f32>(dataset, train_rows, train_targets, test_rows, fold),
            Precision::F64 => self.run::<f64>(dataset, train_rows, train_targets, test_rows, fold),
        }
    }
}

/// Ridge regression on the encoded SNP matrix. With `lambda: None` the
/// penalty is picked per fold from [`LAMBDA_GRID`] by inner 5-fold CV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RidgeBaseline {
    pub lambda: Option<f64>,
    pub seed: u64,
}

pub const INNER_FOLDS: usize = 5;

fn design_rows(dataset: &GenotypeDataset, rows: &[usize]) -> Vec<f64> {
    rows.iter()
        .flat_map(|&r| dataset.row(r).iter().map(|&v| f64::from(v)))
        .collect()
}

impl FoldModel for RidgeBaseline {
    fn name(&self) -> String {
        "ridge".into()
    }

    fn fit_predict(
        &self,
        dataset: &GenotypeDataset,
        train_rows: &[usize],
        train_targets: &[f64],
        test_rows: &[usize],
        fold: usize,
    ) -> Result<FoldPrediction> {
        let d = dataset.d();
        let xtr = design_rows(dataset, train_rows);
        let xtr = Design::new(&xtr, train_rows.len(), d)?;
        let lambda = match self.lambda {
            Some(l) => l,
            None => {
                let seed = seeds::derive(self.seed, fold, purpose::INNER_CV);
                ridge::select_lambda(xtr, train_targets, &LAMBDA_GRID, INNER_FOLDS, seed)?.lambda
            }
        };
        let model = ridge::fit_ridge(xtr, train_targets, lambda, true)?;
        let xte = design_rows(dataset, test_rows);
        let predictions = model.predict(Design::new(&xte, test_rows.len(), d)?)?;
        Ok(FoldPrediction {
            predictions,
            loss_trace: Vec::new(),
            selected_lambda: Some(lambda),
        })
    }
}
