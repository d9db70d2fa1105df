//! Mini-batch SGD on mean squared error.

use rand::seq::SliceRandom;
use resgene_autodiff::{Float, Mode, Tensor};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geno_io::GenotypeDataset;
use crate::net::{Network, Param};
use crate::seeds::{self, purpose};
use crate::tensorize::{fill, SnpLayout};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub epochs: usize,
    /// Root of the shuffle and dropout streams.
    pub seed: u64,
    pub standardize_targets: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 32,
            learning_rate: 0.001,
            momentum: 0.0,
            epochs: 100,
            seed: 0,
            standardize_targets: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Training("batch size must be >= 1".into()));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Training(format!(
                "learning rate must be finite and >= 0, got {}",
                self.learning_rate
            )));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Training(format!(
                "momentum must lie in [0, 1), got {}",
                self.momentum
            )));
        }
        if self.epochs == 0 {
            return Err(Error::Training("epochs must be >= 1".into()));
        }
        Ok(())
    }
}

/// `v <- momentum * v + g`, then `w <- w - lr * v`.
pub fn sgd_step<T: Float>(weights: &mut [T], grads: &[T], velocity: &mut [T], lr: T, momentum: T) {
    debug_assert!(weights.len() == grads.len() && grads.len() == velocity.len());
    for ((w, &g), v) in weights.iter_mut().zip(grads).zip(velocity.iter_mut()) {
        *v = momentum * *v + g;
        *w -= lr * *v;
    }
}

/// SGD state for a whole network.
pub struct Sgd<T> {
    lr: T,
    momentum: T,
    velocity: Vec<Vec<T>>,
}

impl<T: Float> Sgd<T> {
    pub fn new(params: &[Param<T>], lr: f64, momentum: f64) -> Self {
        Self {
            lr: T::lit(lr),
            momentum: T::lit(momentum),
            velocity: params
                .iter()
                .map(|p| vec![T::zero(); p.value.numel()])
                .collect(),
        }
    }

    /// Applies one step; parameters without a gradient are left alone.
    pub fn step(&mut self, params: &mut [Param<T>], grads: &[Option<Tensor<T>>]) {
        for ((p, g), v) in params.iter_mut().zip(grads).zip(&mut self.velocity) {
            if let Some(g) = g {
                sgd_step(p.value.data_mut(), g.data(), v, self.lr, self.momentum);
            }
        }
    }
}

/// Affine map between original targets and the scale the network sees.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TargetScaler {
    pub mean: f64,
    pub std: f64,
}

impl TargetScaler {
    pub const IDENTITY: Self = Self {
        mean: 0.0,
        std: 1.0,
    };

    /// Population statistics of `y`, or `None` when `y` has no variance.
    pub fn fit(y: &[f64]) -> Option<Self> {
        let (mean, std) = crate::stats::mean_std(y)?;
        (std > 0.0 && std.is_finite()).then_some(Self { mean, std })
    }

    pub fn forward(&self, y: f64) -> f64 {
        (y - self.mean) / self.std
    }

    pub fn inverse(&self, z: f64) -> f64 {
        z * self.std + self.mean
    }
}

/// Encoded genotypes already laid out as network input, one sample per
/// dataset row.
pub struct InputSet<T> {
    layout: SnpLayout,
    data: Vec<T>,
}

impl<T: Float> InputSet<T> {
    pub fn new(dataset: &GenotypeDataset, layout: &SnpLayout) -> Result<Self> {
        if dataset.d() != layout.snps {
            return Err(Error::Layout(format!(
                "dataset has {} SNPs, layout expects {}",
                dataset.d(),
                layout.snps
            )));
        }
        let cells = layout.cells();
        let mut data = vec![T::zero(); dataset.n() * cells];
        for (i, out) in data.chunks_exact_mut(cells).enumerate() {
            fill(dataset.row(i), layout, out)?;
        }
        Ok(Self {
            layout: layout.clone(),
            data,
        })
    }

    pub fn layout(&self) -> &SnpLayout {
        &self.layout
    }

    /// Stacks the given rows into an `N x C x S x S` batch.
    pub fn batch(&self, rows: &[usize]) -> Result<Tensor<T>> {
        let cells = self.layout.cells();
        let mut out = Vec::with_capacity(rows.len() * cells);
        for &r in rows {
            out.extend_from_slice(&self.data[r * cells..(r + 1) * cells]);
        }
        let s = self.layout.side;
        Ok(Tensor::new([rows.len(), self.layout.channels, s, s], out)?)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainOutcome {
    /// Sample-weighted mean training loss per epoch, on the scaled targets.
    pub loss_trace: Vec<f64>,
    pub scaler: TargetScaler,
    /// Set when standardization was requested but the targets were constant.
    pub standardization_skipped: bool,
}

/// Splits shuffled rows into batches. A trailing batch of one sample is
/// merged into the previous batch because batch norm needs two samples.
fn batches(order: &[usize], size: usize) -> Vec<&[usize]> {
    let mut out: Vec<&[usize]> = order.chunks(size).collect();
    if out.len() > 1 && out.last().is_some_and(|b| b.len() == 1) {
        let tail_start = order.len() - 1 - out[out.len() - 2].len();
        out.truncate(out.len() - 2);
        out.push(&order[tail_start..]);
    }
    out
}

/// Trains `net` on `rows` of `inputs` with original-scale `targets`.
pub fn train_fold<T: Float>(
    net: &mut Network<T>,
    inputs: &InputSet<T>,
    rows: &[usize],
    targets: &[f64],
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if rows.len() != targets.len() {
        return Err(Error::Training(format!(
            "{} rows but {} targets",
            rows.len(),
            targets.len()
        )));
    }
    if rows.len() < 2 {
        return Err(Error::Training(
            "batch norm needs at least two training rows".into(),
        ));
    }
    let (scaler, skipped) = match (cfg.standardize_targets, TargetScaler::fit(targets)) {
        (true, Some(s)) => (s, false),
        (true, None) => {
            log::warn!("training targets have zero variance; standardization skipped");
            (TargetScaler::IDENTITY, true)
        }
        (false, _) => (TargetScaler::IDENTITY, false),
    };
    let scaled: Vec<T> = targets.iter().map(|&y| T::lit(scaler.forward(y))).collect();

    let mut shuffle_rng = seeds::rng(seeds::derive(cfg.seed, 0, purpose::SHUFFLE));
    let mut dropout_rng = seeds::rng(seeds::derive(cfg.seed, 0, purpose::DROPOUT));
    let mut sgd = Sgd::new(net.params(), cfg.learning_rate, cfg.momentum);
    let mut order: Vec<usize> = (0..rows.len()).collect();
    let mut loss_trace = Vec::with_capacity(cfg.epochs);
    let mut batch_rows = Vec::with_capacity(cfg.batch_size + 1);
    let mut batch_targets = Vec::with_capacity(cfg.batch_size + 1);

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut weighted = 0.0;
        for chunk in batches(&order, cfg.batch_size) {
            batch_rows.clear();
            batch_targets.clear();
            for &i in chunk {
                batch_rows.push(rows[i]);
                batch_targets.push(scaled[i]);
            }
            let mut pass =
                net.forward(inputs.batch(&batch_rows)?, Mode::Train, &mut dropout_rng)?;
            let loss = pass.tape.mse_loss(pass.output, &batch_targets)?;
            let value = pass.tape.value(loss).data()[0].as_f64();
            if !value.is_finite() {
                return Err(Error::Training(format!(
                    "loss diverged to {value} in epoch {}",
                    epoch + 1
                )));
            }
            pass.tape.backward(loss)?;
            let grads: Vec<Option<Tensor<T>>> =
                pass.params.iter().map(|&v| pass.tape.grad(v)).collect();
            sgd.step(net.params_mut(), &grads);
            weighted += value * chunk.len() as f64;
        }
        let epoch_loss = weighted / rows.len() as f64;
        log::debug!("epoch {:>3}: loss {epoch_loss:.6}", epoch + 1);
        loss_trace.push(epoch_loss);
    }
    Ok(TrainOutcome {
        loss_trace,
        scaler,
        standardization_skipped: skipped,
    })
}

/// Eval-mode predictions on the original target scale.
pub fn predict_rows<T: Float>(
    net: &Network<T>,
    inputs: &InputSet<T>,
    rows: &[usize],
    scaler: &TargetScaler,
    batch_size: usize,
) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(rows.len());
    for chunk in rows.chunks(batch_size.max(1)) {
        let pred = net.predict(inputs.batch(chunk)?)?;
        out.extend(pred.into_iter().map(|p| scaler.inverse(p.as_f64())));
    }
    Ok(out)
}
