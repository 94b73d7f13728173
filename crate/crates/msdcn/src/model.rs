//! The forecaster: parallel dilated depthwise conv blocks at two kernel
//! scales, learned per-channel fusion, a linear head over the fused
//! features, and a linear autoregressive branch, wrapped in last-value
//! normalization. `y_hat = y_c + y_h + anchor`.

use crate::error::{Error, Result};
use crate::grid::Grid3;
use crate::kernels::{self, Mode};
use crate::scalar::Scalar;
use crate::tape::{Tape, ValueId};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};
use std::path::Path;

pub const BN_MOMENTUM: f64 = 0.1;
pub const BN_EPS: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PaddingMode {
    Symmetric,
    Causal,
}

impl std::str::FromStr for PaddingMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "symmetric" => Ok(Self::Symmetric),
            "causal" => Ok(Self::Causal),
            other => Err(Error::Config(format!("unknown padding mode '{other}'"))),
        }
    }
}

/// All architectural hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Lookback window length T.
    pub lookback: usize,
    /// Forecast horizon L.
    pub horizon: usize,
    /// Number of variables C.
    pub n_vars: usize,
    /// Long-module block count n.
    pub n_long: usize,
    /// Short-module block count m.
    pub n_short: usize,
    /// Long-module kernel size.
    pub k_long: usize,
    /// Short-module kernel size.
    pub k_short: usize,
    pub huber_delta: f64,
    pub use_long: bool,
    pub use_short: bool,
    pub use_ar: bool,
    pub padding_mode: PaddingMode,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            lookback: 96,
            horizon: 96,
            n_vars: 7,
            n_long: 4,
            n_short: 4,
            k_long: 13,
            k_short: 3,
            huber_delta: 1.0,
            use_long: true,
            use_short: true,
            use_ar: true,
            padding_mode: PaddingMode::Symmetric,
            seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn n_blocks(&self) -> usize {
        self.n_long + self.n_short
    }

    pub fn validate(&self) -> Result<()> {
        if self.lookback == 0 || self.horizon == 0 || self.n_vars == 0 {
            return Err(Error::Config("lookback, horizon, n_vars must be >= 1".into()));
        }
        if (self.use_long || self.use_short) && self.n_blocks() == 0 {
            return Err(Error::Config(
                "n_long + n_short must be >= 1 unless both conv modules are disabled".into(),
            ));
        }
        if self.n_long > 0 && self.n_short > 0 && self.k_long <= self.k_short {
            return Err(Error::Config("k_long must exceed k_short".into()));
        }
        if (self.n_long > 0 && self.k_long == 0) || (self.n_short > 0 && self.k_short == 0) {
            return Err(Error::Config("kernel sizes must be >= 1".into()));
        }
        if !(self.huber_delta > 0.0) {
            return Err(Error::Config("huber_delta must be > 0".into()));
        }
        Ok(())
    }

    /// Indices of blocks that participate in fusion under the ablation
    /// switches: first `n_long` blocks are long, the rest short.
    pub fn active_blocks(&self) -> Vec<usize> {
        let mut idx = Vec::new();
        if self.use_long {
            idx.extend(0..self.n_long);
        }
        if self.use_short {
            idx.extend(self.n_long..self.n_blocks());
        }
        idx
    }
}

/// Dilations for a module of `count` parallel blocks: block i (1-indexed)
/// gets 2^(i-1) + 1, so a 4-block module uses [2, 3, 5, 9].
pub fn build_dilation_schedule(count: usize) -> Vec<usize> {
    (0..count).map(|i| (1usize << i) + 1).collect()
}

/// Input span influencing one output value: (k-1)*d + 1.
pub fn receptive_field(k: usize, d: usize) -> usize {
    (k - 1) * d + 1
}

/// (pad_left, pad_right) for a length-preserving convolution.
pub fn pad_for(k: usize, d: usize, mode: PaddingMode) -> (usize, usize) {
    let total = (k - 1) * d;
    match mode {
        PaddingMode::Symmetric => (total - total / 2, total / 2),
        PaddingMode::Causal => (total, 0),
    }
}

/// One conv block: dilated depthwise conv -> batch norm -> ReLU.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvBlockParams<S: Scalar> {
    pub kernel: Vec<S>, // [C][k]
    pub bias: Vec<S>,   // [C]
    pub bn_gamma: Vec<S>,
    pub bn_beta: Vec<S>,
    pub bn_running_mean: Vec<S>,
    pub bn_running_var: Vec<S>,
    pub dilation: usize,
    pub kernel_size: usize,
}

/// Every learnable array of the model plus BN running statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterSet<S: Scalar> {
    pub blocks: Vec<ConvBlockParams<S>>,
    pub fusion_w: Vec<S>, // [C][n+m]
    pub ffn_w1: Vec<S>,   // [L][T]
    pub ffn_b1: Vec<S>,   // [L]
    pub ar_w2: Vec<S>,    // [L][T]
    pub ar_b2: Vec<S>,    // [L]
}

impl<S: Scalar> ParameterSet<S> {
    /// All-zero parameters (BN running stats too); the model then emits
    /// the last-value persistence forecast.
    pub fn zeros(cfg: &ModelConfig) -> Self {
        let c = cfg.n_vars;
        let (t, l) = (cfg.lookback, cfg.horizon);
        let mut blocks = Vec::new();
        for (global, (k, d)) in block_shapes(cfg) {
            let _ = global;
            blocks.push(ConvBlockParams {
                kernel: vec![S::zero(); c * k],
                bias: vec![S::zero(); c],
                bn_gamma: vec![S::zero(); c],
                bn_beta: vec![S::zero(); c],
                bn_running_mean: vec![S::zero(); c],
                bn_running_var: vec![S::zero(); c],
                dilation: d,
                kernel_size: k,
            });
        }
        Self {
            blocks,
            fusion_w: vec![S::zero(); c * cfg.n_blocks()],
            ffn_w1: vec![S::zero(); l * t],
            ffn_b1: vec![S::zero(); l],
            ar_w2: vec![S::zero(); l * t],
            ar_b2: vec![S::zero(); l],
        }
    }

    /// Learnable arrays in canonical order (BN running stats excluded).
    pub fn learnable(&self) -> Vec<&Vec<S>> {
        let mut v = Vec::new();
        for b in &self.blocks {
            v.push(&b.kernel);
            v.push(&b.bias);
            v.push(&b.bn_gamma);
            v.push(&b.bn_beta);
        }
        v.push(&self.fusion_w);
        v.push(&self.ffn_w1);
        v.push(&self.ffn_b1);
        v.push(&self.ar_w2);
        v.push(&self.ar_b2);
        v
    }

    pub fn learnable_mut(&mut self) -> Vec<&mut Vec<S>> {
        let mut v = Vec::new();
        for b in &mut self.blocks {
            v.push(&mut b.kernel);
            v.push(&mut b.bias);
            v.push(&mut b.bn_gamma);
            v.push(&mut b.bn_beta);
        }
        v.push(&mut self.fusion_w);
        v.push(&mut self.ffn_w1);
        v.push(&mut self.ffn_b1);
        v.push(&mut self.ar_w2);
        v.push(&mut self.ar_b2);
        v
    }

    /// Named arrays for checkpointing, running stats included.
    pub fn named_arrays(&self) -> Vec<(String, &Vec<S>)> {
        let mut v = Vec::new();
        for (i, b) in self.blocks.iter().enumerate() {
            v.push((format!("block{i}.kernel"), &b.kernel));
            v.push((format!("block{i}.bias"), &b.bias));
            v.push((format!("block{i}.bn_gamma"), &b.bn_gamma));
            v.push((format!("block{i}.bn_beta"), &b.bn_beta));
            v.push((format!("block{i}.bn_running_mean"), &b.bn_running_mean));
            v.push((format!("block{i}.bn_running_var"), &b.bn_running_var));
        }
        v.push(("fusion_w".into(), &self.fusion_w));
        v.push(("ffn_w1".into(), &self.ffn_w1));
        v.push(("ffn_b1".into(), &self.ffn_b1));
        v.push(("ar_w2".into(), &self.ar_w2));
        v.push(("ar_b2".into(), &self.ar_b2));
        v
    }

    fn named_arrays_mut(&mut self) -> Vec<(String, &mut Vec<S>)> {
        let mut v = Vec::new();
        for (i, b) in self.blocks.iter_mut().enumerate() {
            v.push((format!("block{i}.kernel"), &mut b.kernel));
            v.push((format!("block{i}.bias"), &mut b.bias));
            v.push((format!("block{i}.bn_gamma"), &mut b.bn_gamma));
            v.push((format!("block{i}.bn_beta"), &mut b.bn_beta));
            v.push((format!("block{i}.bn_running_mean"), &mut b.bn_running_mean));
            v.push((format!("block{i}.bn_running_var"), &mut b.bn_running_var));
        }
        v.push(("fusion_w".into(), &mut self.fusion_w));
        v.push(("ffn_w1".into(), &mut self.ffn_w1));
        v.push(("ffn_b1".into(), &mut self.ffn_b1));
        v.push(("ar_w2".into(), &mut self.ar_w2));
        v.push(("ar_b2".into(), &mut self.ar_b2));
        v
    }

    pub fn cast<R: Scalar>(&self) -> ParameterSet<R> {
        let cast_vec = |v: &Vec<S>| -> Vec<R> {
            v.iter().map(|&x| R::from_f64(x.to_f64())).collect()
        };
        ParameterSet {
            blocks: self
                .blocks
                .iter()
                .map(|b| ConvBlockParams {
                    kernel: cast_vec(&b.kernel),
                    bias: cast_vec(&b.bias),
                    bn_gamma: cast_vec(&b.bn_gamma),
                    bn_beta: cast_vec(&b.bn_beta),
                    bn_running_mean: cast_vec(&b.bn_running_mean),
                    bn_running_var: cast_vec(&b.bn_running_var),
                    dilation: b.dilation,
                    kernel_size: b.kernel_size,
                })
                .collect(),
            fusion_w: cast_vec(&self.fusion_w),
            ffn_w1: cast_vec(&self.ffn_w1),
            ffn_b1: cast_vec(&self.ffn_b1),
            ar_w2: cast_vec(&self.ar_w2),
            ar_b2: cast_vec(&self.ar_b2),
        }
    }
}

/// (kernel_size, dilation) per block in global order.
pub fn block_shapes(cfg: &ModelConfig) -> Vec<(usize, (usize, usize))> {
    let long_d = build_dilation_schedule(cfg.n_long);
    let short_d = build_dilation_schedule(cfg.n_short);
    let mut out = Vec::new();
    for (i, &d) in long_d.iter().enumerate() {
        out.push((i, (cfg.k_long, d)));
    }
    for (i, &d) in short_d.iter().enumerate() {
        out.push((cfg.n_long + i, (cfg.k_short, d)));
    }
    out
}

/// Seeded initialization: weights uniform in ±1/sqrt(fan_in), biases zero,
/// BN identity, fusion weights at 1/(n+m).
pub fn init_parameters<S: Scalar>(cfg: &ModelConfig, seed: u64) -> ParameterSet<S> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let c = cfg.n_vars;
    let (t, l) = (cfg.lookback, cfg.horizon);
    let mut uniform = |n: usize, fan_in: usize| -> Vec<S> {
        let bound = 1.0 / (fan_in as f64).sqrt();
        (0..n)
            .map(|_| S::from_f64(rng.gen_range(-bound..bound)))
            .collect()
    };

    let mut blocks = Vec::new();
    for (_, (k, d)) in block_shapes(cfg) {
        blocks.push(ConvBlockParams {
            kernel: uniform(c * k, k),
            bias: vec![S::zero(); c],
            bn_gamma: vec![S::one(); c],
            bn_beta: vec![S::zero(); c],
            bn_running_mean: vec![S::zero(); c],
            bn_running_var: vec![S::one(); c],
            dilation: d,
            kernel_size: k,
        });
    }
    let n_blocks = cfg.n_blocks();
    let fusion_w = if n_blocks > 0 {
        vec![S::from_f64(1.0 / n_blocks as f64); c * n_blocks]
    } else {
        Vec::new()
    };
    let ffn_w1 = uniform(l * t, t);
    let ar_w2 = uniform(l * t, t);
    ParameterSet {
        blocks,
        fusion_w,
        ffn_w1,
        ffn_b1: vec![S::zero(); l],
        ar_w2,
        ar_b2: vec![S::zero(); l],
    }
}

/// One forecast batch: `y_hat = y_c + y_h + anchor`, all `(B, C, L)`;
/// `anchor[b*C + c]` is the last lookback value of lane (b, c).
#[derive(Debug, Clone)]
pub struct Forecast<S: Scalar> {
    pub y_hat: Grid3<S>,
    pub y_c: Grid3<S>,
    pub y_h: Grid3<S>,
    pub anchor: Vec<S>,
}

fn split_anchor<S: Scalar>(x: &Grid3<S>) -> (Vec<S>, Grid3<S>) {
    let (b, c, t) = x.shape();
    let mut anchor = Vec::with_capacity(b * c);
    let mut norm = Grid3::zeros(b, c, t);
    for bi in 0..b {
        for ci in 0..c {
            let a = x.get(bi, ci, t - 1);
            anchor.push(a);
            let lane = x.lane(bi, ci);
            let out = norm.lane_mut(bi, ci);
            for ti in 0..t {
                out[ti] = lane[ti] - a;
            }
        }
    }
    (anchor, norm)
}

fn add_anchor<S: Scalar>(y: &Grid3<S>, anchor: &[S]) -> Grid3<S> {
    let (b, c, _) = y.shape();
    let mut out = y.clone();
    for bi in 0..b {
        for ci in 0..c {
            let a = anchor[bi * c + ci];
            for v in out.lane_mut(bi, ci) {
                *v = *v + a;
            }
        }
    }
    out
}

fn check_input<S: Scalar>(cfg: &ModelConfig, x: &Grid3<S>) -> Result<()> {
    let (_, c, t) = x.shape();
    if t != cfg.lookback || c != cfg.n_vars {
        return Err(Error::ShapeMismatch(format!(
            "input (C={c}, T={t}) vs config (C={}, T={})",
            cfg.n_vars, cfg.lookback
        )));
    }
    Ok(())
}

/// One conv block in a given mode; train mode updates running stats.
pub fn conv_block_forward<S: Scalar>(
    x: &Grid3<S>,
    block: &mut ConvBlockParams<S>,
    mode: Mode,
    padding_mode: PaddingMode,
) -> Result<Grid3<S>> {
    let (pl, pr) = pad_for(block.kernel_size, block.dilation, padding_mode);
    let u = kernels::dilated_depthwise_conv1d(
        x,
        &block.kernel,
        block.kernel_size,
        &block.bias,
        block.dilation,
        pl,
        pr,
    )?;
    let y = kernels::batchnorm1d(
        &u,
        &block.bn_gamma,
        &block.bn_beta,
        &mut block.bn_running_mean,
        &mut block.bn_running_var,
        mode,
        S::from_f64(BN_MOMENTUM),
        S::from_f64(BN_EPS),
    )?;
    Ok(kernels::relu(&y))
}

/// Infer-mode conv block (running stats frozen, shared reference).
pub fn conv_block_infer<S: Scalar>(
    x: &Grid3<S>,
    block: &ConvBlockParams<S>,
    padding_mode: PaddingMode,
) -> Result<Grid3<S>> {
    let (pl, pr) = pad_for(block.kernel_size, block.dilation, padding_mode);
    let u = kernels::dilated_depthwise_conv1d(
        x,
        &block.kernel,
        block.kernel_size,
        &block.bias,
        block.dilation,
        pl,
        pr,
    )?;
    let y = kernels::bn_infer_forward(
        &u,
        &block.bn_gamma,
        &block.bn_beta,
        &block.bn_running_mean,
        &block.bn_running_var,
        S::from_f64(BN_EPS),
    )?;
    Ok(kernels::relu(&y))
}

/// Inference forward pass. Safe to call concurrently on shared parameters.
pub fn forward<S: Scalar>(
    params: &ParameterSet<S>,
    cfg: &ModelConfig,
    x: &Grid3<S>,
) -> Result<Forecast<S>> {
    check_input(cfg, x)?;
    let (b, c, _) = x.shape();
    let l = cfg.horizon;
    let (anchor, x_norm) = split_anchor(x);

    let active = cfg.active_blocks();
    let y_c = if active.is_empty() {
        Grid3::zeros(b, c, l)
    } else {
        let hs: Vec<Grid3<S>> = active
            .iter()
            .map(|&i| conv_block_infer(&x_norm, &params.blocks[i], cfg.padding_mode))
            .collect::<Result<_>>()?;
        let views: Vec<&Grid3<S>> = hs.iter().collect();
        let m = kernels::fuse_cols(&views, &params.fusion_w, cfg.n_blocks(), &active)?;
        kernels::channel_affine(&m, &params.ffn_w1, &params.ffn_b1, l)?
    };
    let y_h = if cfg.use_ar {
        kernels::channel_affine(&x_norm, &params.ar_w2, &params.ar_b2, l)?
    } else {
        Grid3::zeros(b, c, l)
    };
    let y_sum = y_c.add(&y_h)?;
    let y_hat = add_anchor(&y_sum, &anchor);
    y_hat.check_finite("forward output")?;
    Ok(Forecast {
        y_hat,
        y_c,
        y_h,
        anchor,
    })
}

struct BlockLeaves {
    kernel: ValueId,
    bias: ValueId,
    gamma: ValueId,
    beta: ValueId,
}

/// A taped train-mode forward pass; call [`TrainForward::backward`] with
/// the loss gradient w.r.t. `y_hat` to get parameter gradients.
pub struct TrainForward<S: Scalar> {
    tape: Tape<S>,
    y_sum: Option<ValueId>,
    pub forecast: Forecast<S>,
    block_leaves: Vec<Option<BlockLeaves>>,
    fusion_leaf: Option<ValueId>,
    ffn_leaves: Option<(ValueId, ValueId)>,
    ar_leaves: Option<(ValueId, ValueId)>,
    cfg: ModelConfig,
}

/// Gradients for every learnable array, in [`ParameterSet`] layout.
#[derive(Debug, Clone)]
pub struct BlockGrads<S: Scalar> {
    pub kernel: Vec<S>,
    pub bias: Vec<S>,
    pub bn_gamma: Vec<S>,
    pub bn_beta: Vec<S>,
}

#[derive(Debug, Clone)]
pub struct ParamGrads<S: Scalar> {
    pub blocks: Vec<BlockGrads<S>>,
    pub fusion_w: Vec<S>,
    pub ffn_w1: Vec<S>,
    pub ffn_b1: Vec<S>,
    pub ar_w2: Vec<S>,
    pub ar_b2: Vec<S>,
}

impl<S: Scalar> ParamGrads<S> {
    pub fn zeros(cfg: &ModelConfig) -> Self {
        let c = cfg.n_vars;
        let (t, l) = (cfg.lookback, cfg.horizon);
        Self {
            blocks: block_shapes(cfg)
                .into_iter()
                .map(|(_, (k, _))| BlockGrads {
                    kernel: vec![S::zero(); c * k],
                    bias: vec![S::zero(); c],
                    bn_gamma: vec![S::zero(); c],
                    bn_beta: vec![S::zero(); c],
                })
                .collect(),
            fusion_w: vec![S::zero(); c * cfg.n_blocks()],
            ffn_w1: vec![S::zero(); l * t],
            ffn_b1: vec![S::zero(); l],
            ar_w2: vec![S::zero(); l * t],
            ar_b2: vec![S::zero(); l],
        }
    }

    /// Arrays in the same canonical order as [`ParameterSet::learnable`].
    pub fn arrays(&self) -> Vec<&Vec<S>> {
        let mut v = Vec::new();
        for b in &self.blocks {
            v.push(&b.kernel);
            v.push(&b.bias);
            v.push(&b.bn_gamma);
            v.push(&b.bn_beta);
        }
        v.push(&self.fusion_w);
        v.push(&self.ffn_w1);
        v.push(&self.ffn_b1);
        v.push(&self.ar_w2);
        v.push(&self.ar_b2);
        v
    }
}

/// Train-mode forward: BN uses batch statistics and running stats are
/// updated in place; every op is recorded for reverse-mode gradients.
pub fn forward_train<S: Scalar>(
    params: &mut ParameterSet<S>,
    cfg: &ModelConfig,
    x: &Grid3<S>,
) -> Result<TrainForward<S>> {
    check_input(cfg, x)?;
    let (b, c, _) = x.shape();
    let l = cfg.horizon;
    let (anchor, x_norm) = split_anchor(x);
    let momentum = S::from_f64(BN_MOMENTUM);
    let keep = S::one() - momentum;
    let eps = S::from_f64(BN_EPS);

    let mut tape = Tape::new();
    let x_leaf = tape.leaf(x_norm);
    let active = cfg.active_blocks();

    let mut block_leaves: Vec<Option<BlockLeaves>> =
        (0..cfg.n_blocks()).map(|_| None).collect();
    let mut hs = Vec::with_capacity(active.len());
    for &i in &active {
        let blk = &params.blocks[i];
        let kernel = tape.leaf_slice(&blk.kernel, c, blk.kernel_size)?;
        let bias = tape.leaf_slice(&blk.bias, c, 1)?;
        let gamma = tape.leaf_slice(&blk.bn_gamma, c, 1)?;
        let beta = tape.leaf_slice(&blk.bn_beta, c, 1)?;
        let (pl, pr) = pad_for(blk.kernel_size, blk.dilation, cfg.padding_mode);
        let u = tape.conv(x_leaf, kernel, bias, blk.dilation, pl, pr)?;
        let (bn, batch_mean, batch_var) = tape.batchnorm_train(u, gamma, beta, eps)?;
        let h = tape.relu(bn);
        hs.push(h);
        let blk = &mut params.blocks[i];
        for ci in 0..c {
            blk.bn_running_mean[ci] = keep * blk.bn_running_mean[ci] + momentum * batch_mean[ci];
            blk.bn_running_var[ci] = keep * blk.bn_running_var[ci] + momentum * batch_var[ci];
        }
        block_leaves[i] = Some(BlockLeaves {
            kernel,
            bias,
            gamma,
            beta,
        });
    }

    let mut fusion_leaf = None;
    let mut ffn_leaves = None;
    let y_c_id = if hs.is_empty() {
        None
    } else {
        let w = tape.leaf_slice(&params.fusion_w, c, cfg.n_blocks())?;
        let m = tape.fuse(&hs, w, cfg.n_blocks(), &active)?;
        let w1 = tape.leaf_slice(&params.ffn_w1, l, cfg.lookback)?;
        let b1 = tape.leaf_slice(&params.ffn_b1, l, 1)?;
        let y_c = tape.channel_affine(m, w1, b1)?;
        fusion_leaf = Some(w);
        ffn_leaves = Some((w1, b1));
        Some(y_c)
    };

    let mut ar_leaves = None;
    let y_h_id = if cfg.use_ar {
        let w2 = tape.leaf_slice(&params.ar_w2, l, cfg.lookback)?;
        let b2 = tape.leaf_slice(&params.ar_b2, l, 1)?;
        let y_h = tape.channel_affine(x_leaf, w2, b2)?;
        ar_leaves = Some((w2, b2));
        Some(y_h)
    } else {
        None
    };

    let y_sum = match (y_c_id, y_h_id) {
        (Some(a), Some(bid)) => Some(tape.add(a, bid)?),
        (Some(a), None) => Some(a),
        (None, Some(bid)) => Some(bid),
        (None, None) => None,
    };

    let zeros = Grid3::zeros(b, c, l);
    let y_c = y_c_id.map(|id| tape.value(id).clone()).unwrap_or_else(|| zeros.clone());
    let y_h = y_h_id.map(|id| tape.value(id).clone()).unwrap_or_else(|| zeros.clone());
    let summed = y_sum.map(|id| tape.value(id).clone()).unwrap_or(zeros);
    let y_hat = add_anchor(&summed, &anchor);
    y_hat.check_finite("forward output")?;

    Ok(TrainForward {
        tape,
        y_sum,
        forecast: Forecast {
            y_hat,
            y_c,
            y_h,
            anchor,
        },
        block_leaves,
        fusion_leaf,
        ffn_leaves,
        ar_leaves,
        cfg: cfg.clone(),
    })
}

impl<S: Scalar> TrainForward<S> {
    /// Reverse sweep seeded with `d loss / d y_hat` (the anchor add is
    /// gradient-transparent). Disabled branches get zero gradients.
    pub fn backward(mut self, seed: Grid3<S>) -> Result<ParamGrads<S>> {
        let mut out = ParamGrads::zeros(&self.cfg);
        let root = match self.y_sum {
            Some(id) => id,
            None => return Ok(out),
        };
        let mut grads = self.tape.backward(root, seed)?;
        for (i, leaves) in self.block_leaves.iter().enumerate() {
            if let Some(lv) = leaves {
                let g = &mut out.blocks[i];
                g.kernel = grads.take_or_zeros(lv.kernel, g.kernel.len());
                g.bias = grads.take_or_zeros(lv.bias, g.bias.len());
                g.bn_gamma = grads.take_or_zeros(lv.gamma, g.bn_gamma.len());
                g.bn_beta = grads.take_or_zeros(lv.beta, g.bn_beta.len());
            }
        }
        if let Some(w) = self.fusion_leaf {
            out.fusion_w = grads.take_or_zeros(w, out.fusion_w.len());
        }
        if let Some((w1, b1)) = self.ffn_leaves {
            out.ffn_w1 = grads.take_or_zeros(w1, out.ffn_w1.len());
            out.ffn_b1 = grads.take_or_zeros(b1, out.ffn_b1.len());
        }
        if let Some((w2, b2)) = self.ar_leaves {
            out.ar_w2 = grads.take_or_zeros(w2, out.ar_w2.len());
            out.ar_b2 = grads.take_or_zeros(b2, out.ar_b2.len());
        }
        Ok(out)
    }
}

const CKPT_MAGIC: &[u8] = b"MSDCNCKPT1\n";

/// Writes config plus every named parameter array; round-trips bitwise.
pub fn save_checkpoint<S: Scalar>(
    path: &Path,
    cfg: &ModelConfig,
    params: &ParameterSet<S>,
) -> Result<()> {
    let mut buf = Vec::new();
    buf.extend_from_slice(CKPT_MAGIC);
    let dtype = S::DTYPE.as_bytes();
    buf.extend_from_slice(&(dtype.len() as u32).to_le_bytes());
    buf.extend_from_slice(dtype);
    let cfg_json = serde_json::to_vec(cfg)
        .map_err(|e| Error::Checkpoint(format!("config encode: {e}")))?;
    buf.extend_from_slice(&(cfg_json.len() as u32).to_le_bytes());
    buf.extend_from_slice(&cfg_json);
    let arrays = params.named_arrays();
    buf.extend_from_slice(&(arrays.len() as u32).to_le_bytes());
    for (name, arr) in arrays {
        let nb = name.as_bytes();
        buf.extend_from_slice(&(nb.len() as u32).to_le_bytes());
        buf.extend_from_slice(nb);
        buf.extend_from_slice(&(arr.len() as u64).to_le_bytes());
        for &v in arr {
            v.write_le(&mut buf);
        }
    }
    let mut f = std::fs::File::create(path)?;
    f.write_all(&buf)?;
    Ok(())
}

pub fn load_checkpoint<S: Scalar>(path: &Path) -> Result<(ModelConfig, ParameterSet<S>)> {
    let mut buf = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut buf)?;
    let mut pos = 0usize;
    let take = |pos: &mut usize, n: usize| -> Result<&[u8]> {
        if *pos + n > buf.len() {
            return Err(Error::Checkpoint("truncated checkpoint".into()));
        }
        let s = &buf[*pos..*pos + n];
        *pos += n;
        Ok(s)
    };
    if take(&mut pos, CKPT_MAGIC.len())? != CKPT_MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let read_u32 = |pos: &mut usize| -> Result<u32> {
        Ok(u32::from_le_bytes(take(pos, 4)?.try_into().unwrap()))
    };
    let dlen = read_u32(&mut pos)? as usize;
    let dtype = String::from_utf8_lossy(take(&mut pos, dlen)?).to_string();
    if dtype != S::DTYPE {
        return Err(Error::Checkpoint(format!(
            "checkpoint dtype {dtype} but {} requested",
            S::DTYPE
        )));
    }
    let clen = read_u32(&mut pos)? as usize;
    let cfg: ModelConfig = serde_json::from_slice(take(&mut pos, clen)?)
        .map_err(|e| Error::Checkpoint(format!("config decode: {e}")))?;
    cfg.validate()?;
    let n_arrays = read_u32(&mut pos)? as usize;

    let mut params = ParameterSet::<S>::zeros(&cfg);
    let mut slots = params.named_arrays_mut();
    if n_arrays != slots.len() {
        return Err(Error::Checkpoint(format!(
            "array count {n_arrays}, expected {}",
            slots.len()
        )));
    }
    for (expected_name, slot) in slots.iter_mut() {
        let nlen = read_u32(&mut pos)? as usize;
        let name = String::from_utf8_lossy(take(&mut pos, nlen)?).to_string();
        if &name != expected_name {
            return Err(Error::Checkpoint(format!(
                "array '{name}' where '{expected_name}' expected"
            )));
        }
        let count =
            u64::from_le_bytes(take(&mut pos, 8)?.try_into().unwrap()) as usize;
        if count != slot.len() {
            return Err(Error::Checkpoint(format!(
                "array '{name}' has {count} elements, expected {}",
                slot.len()
            )));
        }
        let bytes = take(&mut pos, count * S::BYTES)?;
        for (i, v) in slot.iter_mut().enumerate() {
            *v = S::read_le(&bytes[i * S::BYTES..]);
        }
    }
    Ok((cfg, params))
}
