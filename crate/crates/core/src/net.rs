//! ResNet-18 with a single-output regression head.
//!
//! Stem: `k x k` conv (no bias) -> batch norm -> relu, optionally followed by
//! a 3x3 stride-2 max pool. Four stages of basic residual blocks follow;
//! the first block of every stage after the first halves the spatial size
//! and uses a 1x1 conv + batch norm projection shortcut. The head is global
//! average pooling, dropout and a linear layer to one output.

use rand::{Rng, RngCore};
use rand_distr::StandardNormal;
use resgene_autodiff::{
    BatchNormConfig, BatchNormStats, Conv2dOptions, Float, Mode, Pool2dOptions, RunningStats, Tape,
    Tensor, Var,
};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seeds;

/// Inputs with a side below this use the small-input stem (stride 1, no
/// max pool) in [`ModelConfig::resnet18`].
pub const SMALL_INPUT_SIDE: usize = 33;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub input_channels: usize,
    pub input_side: usize,
    pub stem_kernel: usize,
    pub stem_stride: usize,
    pub stem_maxpool: bool,
    pub stage_widths: Vec<usize>,
    pub blocks_per_stage: Vec<usize>,
    pub dropout: f64,
    pub init_seed: u64,
    pub bn_momentum: f64,
    pub bn_eps: f64,
}

impl ModelConfig {
    /// ResNet-18 with a 3x3 stem. Small inputs keep full resolution in the
    /// stem so the downsampling chain stays meaningful.
    pub fn resnet18(input_channels: usize, input_side: usize) -> Self {
        let small = input_side < SMALL_INPUT_SIDE;
        Self {
            input_channels,
            input_side,
            stem_kernel: 3,
            stem_stride: if small { 1 } else { 2 },
            stem_maxpool: !small,
            stage_widths: vec![64, 128, 256, 512],
            blocks_per_stage: vec![2, 2, 2, 2],
            dropout: 0.0,
            init_seed: 0,
            bn_momentum: 0.1,
            bn_eps: 1e-5,
        }
    }

    fn bn(&self) -> BatchNormConfig {
        BatchNormConfig {
            momentum: self.bn_momentum,
            eps: self.bn_eps,
        }
    }

    fn stem_opts(&self) -> Conv2dOptions {
        Conv2dOptions {
            stride: self.stem_stride,
            padding: self.stem_kernel / 2,
        }
    }

    fn stage_stride(stage: usize) -> usize {
        if stage == 0 {
            1
        } else {
            2
        }
    }

    /// Spatial side reaching the global pool, or `None` if some layer's
    /// window no longer fits.
    pub fn output_side(&self, side: usize) -> Option<usize> {
        let sweep = |size: usize, k: usize, stride: usize, pad: usize| {
            (size + 2 * pad >= k && size > 0).then(|| (size + 2 * pad - k) / stride + 1)
        };
        let stem = self.stem_opts();
        let mut s = sweep(side, self.stem_kernel, stem.stride, stem.padding)?;
        if self.stem_maxpool {
            s = sweep(s, 3, 2, 1)?;
        }
        for stage in 0..self.stage_widths.len() {
            let stride = Self::stage_stride(stage);
            s = sweep(s, 3, stride, 1)?;
            if stride != 1 {
                sweep(s, 1, stride, 0)?;
            }
        }
        Some(s)
    }

    /// Smallest input side for which every layer fits.
    pub fn min_side(&self) -> Option<usize> {
        (1..=4096).find(|&s| self.output_side(s).is_some())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Model(m));
        if self.input_channels == 0 {
            return bad("input_channels must be >= 1".into());
        }
        if self.stem_kernel == 0 || self.stem_stride == 0 {
            return bad("stem kernel and stride must be positive".into());
        }
        if self.stage_widths.is_empty() || self.stage_widths.len() != self.blocks_per_stage.len() {
            return bad(
                "stage_widths and blocks_per_stage must be non-empty and equally long".into(),
            );
        }
        if self.stage_widths.contains(&0) || self.blocks_per_stage.contains(&0) {
            return bad("every stage needs a positive width and block count".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout must lie in [0, 1), got {}", self.dropout));
        }
        if self.output_side(self.input_side).is_none() {
            return match self.min_side() {
                Some(min) => bad(format!(
                    "input side {} is too small; this architecture needs at least {min}",
                    self.input_side
                )),
                None => bad("no input side fits this architecture".into()),
            };
        }
        Ok(())
    }
}

/// Trainable parameter count implied by a config.
pub fn param_count(config: &ModelConfig) -> usize {
    let conv = |cin: usize, cout: usize, k: usize| cin * cout * k * k;
    let bn = |c: usize| 2 * c;
    let first = config.stage_widths[0];
    let mut total = conv(config.input_channels, first, config.stem_kernel) + bn(first);
    let mut cin = first;
    for (stage, (&w, &blocks)) in config
        .stage_widths
        .iter()
        .zip(&config.blocks_per_stage)
        .enumerate()
    {
        for b in 0..blocks {
            let stride = if b == 0 {
                ModelConfig::stage_stride(stage)
            } else {
                1
            };
            total += conv(cin, w, 3) + bn(w) + conv(w, w, 3) + bn(w);
            if stride != 1 || cin != w {
                total += conv(cin, w, 1) + bn(w);
            }
            cin = w;
        }
    }
    total + cin + 1
}

#[derive(Clone, Debug)]
struct ConvLayer {
    weight: usize,
    opts: Conv2dOptions,
}

#[derive(Clone, Debug)]
struct BnLayer {
    gamma: usize,
    beta: usize,
    stats: usize,
}

#[derive(Clone, Debug)]
struct Block {
    conv1: ConvLayer,
    bn1: BnLayer,
    conv2: ConvLayer,
    bn2: BnLayer,
    shortcut: Option<(ConvLayer, BnLayer)>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Param<T> {
    pub name: String,
    pub value: Tensor<T>,
}

/// Result of a recorded forward pass. `params[i]` is the tape var of
/// [`Network::params`]`[i]`.
pub struct ForwardPass<T> {
    pub tape: Tape<T>,
    pub output: Var,
    pub params: Vec<Var>,
}

#[derive(Clone, Debug)]
pub struct Network<T> {
    config: ModelConfig,
    params: Vec<Param<T>>,
    stats: Vec<(String, RunningStats<T>)>,
    stem_conv: ConvLayer,
    stem_bn: BnLayer,
    blocks: Vec<Block>,
    fc_weight: usize,
    fc_bias: usize,
}

struct Builder<'a, T> {
    rng: &'a mut rand_chacha::ChaCha8Rng,
    params: Vec<Param<T>>,
    stats: Vec<(String, RunningStats<T>)>,
}

impl<T: Float> Builder<'_, T> {
    fn push(&mut self, name: String, value: Tensor<f64>) -> usize {
        self.params.push(Param {
            name,
            value: value.cast(),
        });
        self.params.len() - 1
    }

    fn conv(
        &mut self,
        name: &str,
        cin: usize,
        cout: usize,
        k: usize,
        opts: Conv2dOptions,
    ) -> ConvLayer {
        let std = (2.0 / (cin * k * k) as f64).sqrt();
        let w = Tensor::from_fn([cout, cin, k, k], |_| {
            std * self.rng.sample::<f64, _>(StandardNormal)
        });
        ConvLayer {
            weight: self.push(format!("{name}.weight"), w),
            opts,
        }
    }

    fn bn(&mut self, name: &str, c: usize) -> BnLayer {
        let gamma = self.push(format!("{name}.gamma"), Tensor::full([c], 1.0));
        let beta = self.push(format!("{name}.beta"), Tensor::zeros([c]));
        self.stats.push((name.to_string(), RunningStats::new(c)));
        BnLayer {
            gamma,
            beta,
            stats: self.stats.len() - 1,
        }
    }
}

impl<T: Float> Network<T> {
    /// Builds the network with seeded Kaiming-normal conv weights, neutral
    /// batch norm and a small-normal linear head. Weights are drawn in `f64`
    /// so both precisions start from the same values.
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = seeds::rng(config.init_seed);
        let mut b = Builder {
            rng: &mut rng,
            params: Vec::new(),
            stats: Vec::new(),
        };
        let first = config.stage_widths[0];
        let stem_conv = b.conv(
            "stem.conv",
            config.input_channels,
            first,
            config.stem_kernel,
            config.stem_opts(),
        );
        let stem_bn = b.bn("stem.bn", first);
        let mut blocks = Vec::new();
        let mut cin = first;
        for (stage, (&w, &count)) in config
            .stage_widths
            .iter()
            .zip(&config.blocks_per_stage)
            .enumerate()
        {
            for i in 0..count {
                let stride = if i == 0 {
                    ModelConfig::stage_stride(stage)
                } else {
                    1
                };
                let name = format!("stage{}.block{}", stage + 1, i + 1);
                let conv1 = b.conv(
                    &format!("{name}.conv1"),
                    cin,
                    w,
                    3,
                    Conv2dOptions { stride, padding: 1 },
                );
                let bn1 = b.bn(&format!("{name}.bn1"), w);
                let conv2 = b.conv(
                    &format!("{name}.conv2"),
                    w,
                    w,
                    3,
                    Conv2dOptions {
                        stride: 1,
                        padding: 1,
                    },
                );
                let bn2 = b.bn(&format!("{name}.bn2"), w);
                let shortcut = (stride != 1 || cin != w).then(|| {
                    let c = b.conv(
                        &format!("{name}.proj"),
                        cin,
                        w,
                        1,
                        Conv2dOptions { stride, padding: 0 },
                    );
                    (c, b.bn(&format!("{name}.proj_bn"), w))
                });
                blocks.push(Block {
                    conv1,
                    bn1,
                    conv2,
                    bn2,
                    shortcut,
                });
                cin = w;
            }
        }
        let fc_w = Tensor::from_fn([cin, 1], |_| 0.01 * b.rng.sample::<f64, _>(StandardNormal));
        let fc_weight = b.push("head.weight".into(), fc_w);
        let fc_bias = b.push("head.bias".into(), Tensor::zeros([1]));
        let Builder { params, stats, .. } = b;
        Ok(Self {
            config,
            params,
            stats,
            stem_conv,
            stem_bn,
            blocks,
            fc_weight,
            fc_bias,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &[Param<T>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Param<T>] {
        &mut self.params
    }

    pub fn running_stats(&self) -> impl Iterator<Item = (&str, &RunningStats<T>)> {
        self.stats.iter().map(|(n, s)| (n.as_str(), s))
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().map(|p| p.value.numel()).sum()
    }

    fn check_batch(&self, batch: &Tensor<T>) -> Result<usize> {
        let c = &self.config;
        match batch.shape() {
            &[n, ch, h, w] if ch == c.input_channels && h == c.input_side && w == c.input_side => {
                Ok(n)
            }
            other => Err(Error::Model(format!(
                "batch shape {other:?} does not match N x {} x {} x {}",
                c.input_channels, c.input_side, c.input_side
            ))),
        }
    }

    /// Records a forward pass with every parameter as a gradient leaf. Train
    /// mode uses batch statistics, updates the running statistics and
    /// samples dropout masks from `rng`.
    pub fn forward<R: RngCore + ?Sized>(
        &mut self,
        batch: Tensor<T>,
        mode: Mode,
        rng: &mut R,
    ) -> Result<ForwardPass<T>> {
        self.check_batch(&batch)?;
        let mut tape = Tape::new();
        let params: Vec<Var> = self
            .params
            .iter()
            .map(|p| tape.param(p.value.clone()))
            .collect();
        let x = tape.constant(batch);
        let mut stats = std::mem::take(&mut self.stats);
        let out = self.graph(&mut tape, &params, x, mode, &mut stats, rng);
        self.stats = stats;
        Ok(ForwardPass {
            tape,
            output: out?,
            params,
        })
    }

    /// Eval-mode predictions, one per batch row.
    pub fn predict(&self, batch: Tensor<T>) -> Result<Vec<T>> {
        self.check_batch(&batch)?;
        let mut tape = Tape::inference();
        let params: Vec<Var> = self
            .params
            .iter()
            .map(|p| tape.constant(p.value.clone()))
            .collect();
        let x = tape.constant(batch);
        let mut stats = self.stats.clone();
        let mut unused = seeds::rng(0);
        let out = self.graph(&mut tape, &params, x, Mode::Eval, &mut stats, &mut unused)?;
        Ok(tape.value(out).data().to_vec())
    }

    fn graph<R: RngCore + ?Sized>(
        &self,
        tape: &mut Tape<T>,
        p: &[Var],
        x: Var,
        mode: Mode,
        stats: &mut [(String, RunningStats<T>)],
        rng: &mut R,
    ) -> Result<Var> {
        let bn_cfg = self.config.bn();
        let conv =
            |tape: &mut Tape<T>, l: &ConvLayer, x: Var| tape.conv2d(x, p[l.weight], None, l.opts);
        let mut bn = |tape: &mut Tape<T>, l: &BnLayer, x: Var| {
            let s = &mut stats[l.stats].1;
            let st = match mode {
                Mode::Train => BatchNormStats::Train(s),
                Mode::Eval => BatchNormStats::Eval(&*s),
            };
            tape.batch_norm2d(x, p[l.gamma], p[l.beta], st, bn_cfg)
        };

        let mut h = conv(tape, &self.stem_conv, x)?;
        h = bn(tape, &self.stem_bn, h)?;
        h = tape.relu(h)?;
        if self.config.stem_maxpool {
            h = tape.max_pool2d(
                h,
                Pool2dOptions {
                    kernel: 3,
                    stride: 2,
                    padding: 1,
                },
            )?;
        }
        for block in &self.blocks {
            let mut y = conv(tape, &block.conv1, h)?;
            y = bn(tape, &block.bn1, y)?;
            y = tape.relu(y)?;
            y = conv(tape, &block.conv2, y)?;
            y = bn(tape, &block.bn2, y)?;
            let skip = match &block.shortcut {
                Some((c, b)) => {
                    let s = conv(tape, c, h)?;
                    bn(tape, b, s)?
                }
                None => h,
            };
            let sum = tape.add(y, skip)?;
            h = tape.relu(sum)?;
        }
        let pooled = tape.global_avg_pool(h)?;
        let dropped = tape.dropout(pooled, self.config.dropout, mode, rng)?;
        Ok(tape.linear(dropped, p[self.fc_weight], Some(p[self.fc_bias]))?)
    }

    /// Named tensors for a checkpoint file: parameters, then running
    /// statistics as `<layer>.running_mean` / `<layer>.running_var`.
    pub fn to_checkpoint(&self) -> Vec<(String, Tensor<f64>)> {
        let mut out: Vec<(String, Tensor<f64>)> = self
            .params
            .iter()
            .map(|p| (p.name.clone(), p.value.cast()))
            .collect();
        for (name, s) in &self.stats {
            let c = s.channels();
            let f = |v: &[T]| {
                Tensor::new([c], v.iter().map(|x| x.as_f64()).collect()).expect("channels > 0")
            };
            out.push((format!("{name}.running_mean"), f(&s.mean)));
            out.push((format!("{name}.running_var"), f(&s.var)));
        }
        out
    }

    pub fn load_checkpoint(&mut self, entries: &[(String, Tensor<f64>)]) -> Result<()> {
        let find = |name: &str, shape: &[usize]| -> Result<Tensor<f64>> {
            let (_, t) = entries
                .iter()
                .find(|(n, _)| n == name)
                .ok_or_else(|| Error::Model(format!("checkpoint lacks {name}")))?;
            if t.shape() != shape {
                return Err(Error::Model(format!(
                    "{name}: checkpoint shape {:?}, model {shape:?}",
                    t.shape()
                )));
            }
            Ok(t.clone())
        };
        for p in &mut self.params {
            p.value = find(&p.name, p.value.shape())?.cast();
        }
        for (name, s) in &mut self.stats {
            let c = [s.channels()];
            s.mean = find(&format!("{name}.running_mean"), &c)?
                .cast::<T>()
                .into_data();
            s.var = find(&format!("{name}.running_var"), &c)?
                .cast::<T>()
                .into_data();
        }
        Ok(())
    }
}
