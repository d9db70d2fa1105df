//! k-fold cross-validation harness.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geno_io::GenotypeDataset;
use crate::stats;

/// Output of training on one fold and predicting its held-out rows.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct FoldPrediction {
    pub predictions: Vec<f64>,
    pub loss_trace: Vec<f64>,
    pub selected_lambda: Option<f64>,
}

/// A model that can be trained from scratch on one fold.
///
/// `train_rows` and `test_rows` index dataset rows. Implementations derive
/// any randomness from `fold` so results do not depend on scheduling.
pub trait FoldModel: Sync {
    fn name(&self) -> String;

    fn fit_predict(
        &self,
        dataset: &GenotypeDataset,
        train_rows: &[usize],
        train_targets: &[f64],
        test_rows: &[usize],
        fold: usize,
    ) -> Result<FoldPrediction>;
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    /// Mean of the per-fold correlations.
    #[default]
    FoldMean,
    /// One correlation over all held-out predictions.
    Pooled,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvOptions {
    pub folds: usize,
    pub seed: u64,
    pub jobs: usize,
    pub aggregation: Aggregation,
}

impl Default for CvOptions {
    fn default() -> Self {
        Self {
            folds: 10,
            seed: 0,
            jobs: 1,
            aggregation: Aggregation::FoldMean,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub trait_name: String,
    pub model: String,
    pub aggregation: Aggregation,
    /// `None` marks a fold whose predictions (or targets) were constant.
    pub fold_pccs: Vec<Option<f64>>,
    pub undefined_folds: usize,
    pub mean_pcc: Option<f64>,
    pub pooled_pcc: Option<f64>,
    pub loss_traces: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub selected_lambdas: Vec<f64>,
}

impl CvReport {
    /// The headline score under the chosen aggregation.
    pub fn score(&self) -> Option<f64> {
        match self.aggregation {
            Aggregation::FoldMean => self.mean_pcc,
            Aggregation::Pooled => self.pooled_pcc,
        }
    }
}

/// Mean over the defined fold correlations.
pub fn fold_mean(fold_pccs: &[Option<f64>]) -> Option<f64> {
    let defined: Vec<f64> = fold_pccs.iter().flatten().copied().collect();
    stats::mean(&defined)
}

pub fn cross_validate(
    dataset: &GenotypeDataset,
    trait_name: &str,
    model: &dyn FoldModel,
    opts: &CvOptions,
) -> Result<CvReport> {
    let view = dataset.trait_view(trait_name)?;
    if view.len() < opts.folds {
        return Err(Error::Dataset(format!(
            "trait {trait_name} has {} observed rows, fewer than {} folds",
            view.len(),
            opts.folds
        )));
    }
    let splits = stats::kfold_split(view.len(), opts.folds, opts.seed)?;

    let run_fold = |(fold, held): (usize, &Vec<usize>)| -> Result<(FoldPrediction, Vec<f64>)> {
        let mut is_held = vec![false; view.len()];
        held.iter().for_each(|&i| is_held[i] = true);
        let (mut train_rows, mut train_y) = (Vec::new(), Vec::new());
        for i in (0..view.len()).filter(|&i| !is_held[i]) {
            train_rows.push(view.rows[i]);
            train_y.push(view.targets[i]);
        }
        let test_rows: Vec<usize> = held.iter().map(|&i| view.rows[i]).collect();
        let test_y: Vec<f64> = held.iter().map(|&i| view.targets[i]).collect();
        log::info!(
            "{} / {trait_name}: fold {}/{}",
            model.name(),
            fold + 1,
            opts.folds
        );
        let pred = model.fit_predict(dataset, &train_rows, &train_y, &test_rows, fold)?;
        if pred.predictions.len() != test_rows.len() {
            return Err(Error::Model(format!(
                "{} returned {} predictions for {} rows",
                model.name(),
                pred.predictions.len(),
                test_rows.len()
            )));
        }
        Ok((pred, test_y))
    };

    let indexed: Vec<(usize, &Vec<usize>)> = splits.iter().enumerate().collect();
    let results: Vec<Result<(FoldPrediction, Vec<f64>)>> = if opts.jobs > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(opts.jobs)
            .build()
            .map_err(|e| Error::Training(format!("thread pool: {e}")))?;
        pool.install(|| indexed.into_par_iter().map(run_fold).collect())
    } else {
        indexed.into_iter().map(run_fold).collect()
    };

    let mut fold_pccs = Vec::with_capacity(opts.folds);
    let mut loss_traces = Vec::with_capacity(opts.folds);
    let mut selected_lambdas = Vec::new();
    let (mut all_pred, mut all_obs) = (Vec::new(), Vec::new());
    for r in results {
        let (pred, obs) = r?;
        let p = stats::pcc(&pred.predictions, &obs).ok();
        if p.is_none() {
            log::warn!(
                "{} / {trait_name}: fold correlation undefined (constant values)",
                model.name()
            );
        }
        fold_pccs.push(p);
        all_pred.extend_from_slice(&pred.predictions);
        all_obs.extend_from_slice(&obs);
        loss_traces.push(pred.loss_trace);
        selected_lambdas.extend(pred.selected_lambda);
    }
    let undefined_folds = fold_pccs.iter().filter(|p| p.is_none()).count();
    Ok(CvReport {
        trait_name: trait_name.to_string(),
        model: model.name(),
        aggregation: opts.aggregation,
        mean_pcc: fold_mean(&fold_pccs),
        pooled_pcc: stats::pcc(&all_pred, &all_obs).ok(),
        fold_pccs,
        undefined_folds,
        loss_traces,
        selected_lambdas,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geno_io::TraitColumn;

    /// Predicts each test row's first encoded SNP.
    struct FirstSnp;

    impl FoldModel for FirstSnp {
        fn name(&self) -> String {
            "first-snp".into()
        }

        fn fit_predict(
            &self,
            ds: &GenotypeDataset,
            _: &[usize],
            _: &[f64],
            test: &[usize],
            _: usize,
        ) -> Result<FoldPrediction> {
            Ok(FoldPrediction {
                predictions: test.iter().map(|&r| f64::from(ds.row(r)[0])).collect(),
                ..Default::default()
            })
        }
    }

    /// Always predicts zero.
    struct Constant;

    impl FoldModel for Constant {
        fn name(&self) -> String {
            "constant".into()
        }

        fn fit_predict(
            &self,
            _: &GenotypeDataset,
            _: &[usize],
            _: &[f64],
            test: &[usize],
            _: usize,
        ) -> Result<FoldPrediction> {
            Ok(FoldPrediction {
                predictions: vec![0.0; test.len()],
                ..Default::default()
            })
        }
    }

    fn dataset(n: usize) -> GenotypeDataset {
        let encoded: Vec<i8> = (0..n).map(|i| (i % 3) as i8).collect();
        let y = encoded
            .iter()
            .map(|&v| Some(f64::from(v) * 2.0 + 1.0))
            .collect();
        GenotypeDataset::from_encoded(
            (0..n).map(|i| format!("V{i}")).collect(),
            1,
            encoded,
            vec![TraitColumn {
                name: "PH".into(),
                values: y,
            }],
        )
        .unwrap()
    }

    #[test]
    fn perfect_predictor_scores_one() {
        let opts = CvOptions {
            folds: 4,
            seed: 2,
            ..CvOptions::default()
        };
        let r = cross_validate(&dataset(40), "PH", &FirstSnp, &opts).unwrap();
        assert_eq!(r.fold_pccs.len(), 4);
        assert!((r.mean_pcc.unwrap() - 1.0).abs() < 1e-12);
        assert!((r.pooled_pcc.unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn constant_predictions_are_flagged() {
        let opts = CvOptions {
            folds: 5,
            ..CvOptions::default()
        };
        let r = cross_validate(&dataset(20), "PH", &Constant, &opts).unwrap();
        assert_eq!(r.undefined_folds, 5);
        assert_eq!(r.mean_pcc, None);
    }

    #[test]
    fn parallel_matches_serial() {
        let serial = CvOptions {
            folds: 5,
            seed: 7,
            jobs: 1,
            ..CvOptions::default()
        };
        let parallel = CvOptions {
            jobs: 3,
            ..serial.clone()
        };
        let a = cross_validate(&dataset(30), "PH", &FirstSnp, &serial).unwrap();
        let b = cross_validate(&dataset(30), "PH", &FirstSnp, &parallel).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn too_few_rows_is_an_error() {
        let opts = CvOptions {
            folds: 10,
            ..CvOptions::default()
        };
        assert!(cross_validate(&dataset(6), "PH", &FirstSnp, &opts).is_err());
    }
}
