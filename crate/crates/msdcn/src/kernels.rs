//! Numeric primitives: dilated depthwise 1-D convolution, batch
//! normalization, ReLU, and affine maps.
//!
//! All kernels are scalar loops over contiguous slices; channels are
//! independent throughout (depthwise design), so outputs for channel `c`
//! depend only on inputs for channel `c`.

use crate::error::{Error, Result};
use crate::grid::Grid3;
use crate::scalar::Scalar;

/// Forward mode for batch normalization and the model as a whole.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

/// Dilated depthwise 1-D convolution with explicit zero padding.
///
/// `kernel` is laid out `[C][k]`, `bias` is `[C]`. Requires
/// `pad_left + pad_right == (k - 1) * dilation` so the output time length
/// equals the input's.
pub fn dilated_depthwise_conv1d<S: Scalar>(
    x: &Grid3<S>,
    kernel: &[S],
    kernel_size: usize,
    bias: &[S],
    dilation: usize,
    pad_left: usize,
    pad_right: usize,
) -> Result<Grid3<S>> {
    let (b, c, t) = x.shape();
    if kernel_size == 0 || dilation == 0 {
        return Err(Error::InvalidArgument(
            "kernel_size and dilation must be >= 1".into(),
        ));
    }
    if kernel.len() != c * kernel_size {
        return Err(Error::ShapeMismatch(format!(
            "kernel has {} weights, expected C*k = {}*{}",
            kernel.len(),
            c,
            kernel_size
        )));
    }
    if bias.len() != c {
        return Err(Error::ShapeMismatch(format!(
            "bias has {} entries, expected C = {}",
            bias.len(),
            c
        )));
    }
    if pad_left + pad_right != (kernel_size - 1) * dilation {
        return Err(Error::InvalidArgument(format!(
            "padding ({}, {}) does not sum to (k-1)*d = {}",
            pad_left,
            pad_right,
            (kernel_size - 1) * dilation
        )));
    }

    let mut out = Grid3::zeros(b, c, t);
    for bi in 0..b {
        for ci in 0..c {
            let lane = x.lane(bi, ci);
            let kern = &kernel[ci * kernel_size..(ci + 1) * kernel_size];
            let out_lane = out.lane_mut(bi, ci);
            for ti in 0..t {
                let mut acc = bias[ci];
                // tap j reads x[t - pad_left + j*d]; out-of-range taps hit zero pad
                let base = ti as isize - pad_left as isize;
                for (j, &w) in kern.iter().enumerate() {
                    let src = base + (j * dilation) as isize;
                    if src >= 0 && (src as usize) < t {
                        acc = acc + w * lane[src as usize];
                    }
                }
                out_lane[ti] = acc;
            }
        }
    }
    Ok(out)
}

/// Per-channel batch statistics saved for the backward pass.
pub struct BnForward<S: Scalar> {
    pub y: Grid3<S>,
    pub x_hat: Grid3<S>,
    pub inv_std: Vec<S>,
    pub batch_mean: Vec<S>,
    pub batch_var: Vec<S>,
}

/// Train-mode batch normalization: statistics over all (batch, time)
/// positions of each channel.
pub fn bn_train_forward<S: Scalar>(
    x: &Grid3<S>,
    gamma: &[S],
    beta: &[S],
    eps: S,
) -> Result<BnForward<S>> {
    let (b, c, t) = x.shape();
    if eps <= S::zero() {
        return Err(Error::InvalidArgument("bn eps must be > 0".into()));
    }
    if b * t < 2 {
        return Err(Error::InvalidArgument(
            "bn train mode needs B*T >= 2".into(),
        ));
    }
    x.check_finite("batchnorm input")?;
    let n = S::from_f64((b * t) as f64);

    let mut y = Grid3::zeros(b, c, t);
    let mut x_hat = Grid3::zeros(b, c, t);
    let mut inv_std = vec![S::zero(); c];
    let mut batch_mean = vec![S::zero(); c];
    let mut batch_var = vec![S::zero(); c];
    for ci in 0..c {
        let mut sum = S::zero();
        for bi in 0..b {
            for &v in x.lane(bi, ci) {
                sum = sum + v;
            }
        }
        let mean = sum / n;
        let mut var_sum = S::zero();
        for bi in 0..b {
            for &v in x.lane(bi, ci) {
                let d = v - mean;
                var_sum = var_sum + d * d;
            }
        }
        let var = var_sum / n;
        let istd = S::one() / (var + eps).sqrt();
        batch_mean[ci] = mean;
        batch_var[ci] = var;
        inv_std[ci] = istd;
        for bi in 0..b {
            for ti in 0..t {
                let xh = (x.get(bi, ci, ti) - mean) * istd;
                x_hat.set(bi, ci, ti, xh);
                y.set(bi, ci, ti, gamma[ci] * xh + beta[ci]);
            }
        }
    }
    Ok(BnForward {
        y,
        x_hat,
        inv_std,
        batch_mean,
        batch_var,
    })
}

/// Infer-mode batch normalization using frozen running statistics.
pub fn bn_infer_forward<S: Scalar>(
    x: &Grid3<S>,
    gamma: &[S],
    beta: &[S],
    running_mean: &[S],
    running_var: &[S],
    eps: S,
) -> Result<Grid3<S>> {
    let (b, c, t) = x.shape();
    if eps <= S::zero() {
        return Err(Error::InvalidArgument("bn eps must be > 0".into()));
    }
    x.check_finite("batchnorm input")?;
    let mut y = Grid3::zeros(b, c, t);
    for ci in 0..c {
        let istd = S::one() / (running_var[ci] + eps).sqrt();
        for bi in 0..b {
            for ti in 0..t {
                let v = (x.get(bi, ci, ti) - running_mean[ci]) * istd;
                y.set(bi, ci, ti, gamma[ci] * v + beta[ci]);
            }
        }
    }
    Ok(y)
}

/// Batch normalization with running-stat bookkeeping.
///
/// Train mode normalizes with batch statistics and updates the running
/// stats in place as `running <- (1 - momentum) * running + momentum * batch`;
/// infer mode uses the running stats only.
#[allow(clippy::too_many_arguments)]
pub fn batchnorm1d<S: Scalar>(
    x: &Grid3<S>,
    gamma: &[S],
    beta: &[S],
    running_mean: &mut [S],
    running_var: &mut [S],
    mode: Mode,
    momentum: S,
    eps: S,
) -> Result<Grid3<S>> {
    match mode {
        Mode::Train => {
            let fwd = bn_train_forward(x, gamma, beta, eps)?;
            let keep = S::one() - momentum;
            for ci in 0..running_mean.len() {
                running_mean[ci] = keep * running_mean[ci] + momentum * fwd.batch_mean[ci];
                running_var[ci] = keep * running_var[ci] + momentum * fwd.batch_var[ci];
            }
            Ok(fwd.y)
        }
        Mode::Infer => bn_infer_forward(x, gamma, beta, running_mean, running_var, eps),
    }
}

/// Elementwise max(0, x).
pub fn relu<S: Scalar>(x: &Grid3<S>) -> Grid3<S> {
    x.map(|v| if v > S::zero() { v } else { S::zero() })
}

/// `out = W v + b` with `W` laid out `[L][T]` row-major.
pub fn affine_map<S: Scalar>(w: &[S], b: &[S], v: &[S]) -> Result<Vec<S>> {
    let l = b.len();
    let t = v.len();
    if w.len() != l * t {
        return Err(Error::ShapeMismatch(format!(
            "affine: W has {} weights, expected L*T = {}*{}",
            w.len(),
            l,
            t
        )));
    }
    let mut out = Vec::with_capacity(l);
    for li in 0..l {
        let row = &w[li * t..(li + 1) * t];
        let mut acc = b[li];
        for (wi, vi) in row.iter().zip(v) {
            acc = acc + *wi * *vi;
        }
        out.push(acc);
    }
    Ok(out)
}

/// Applies one shared `[L][T]` affine map to every (batch, channel) lane.
pub fn channel_affine<S: Scalar>(
    x: &Grid3<S>,
    w: &[S],
    b: &[S],
    out_len: usize,
) -> Result<Grid3<S>> {
    let (bs, c, t) = x.shape();
    if b.len() != out_len || w.len() != out_len * t {
        return Err(Error::ShapeMismatch(format!(
            "channel_affine: W {} b {} for L={} T={}",
            w.len(),
            b.len(),
            out_len,
            t
        )));
    }
    let mut out = Grid3::zeros(bs, c, out_len);
    for bi in 0..bs {
        for ci in 0..c {
            let lane = x.lane(bi, ci);
            let out_lane = out.lane_mut(bi, ci);
            for li in 0..out_len {
                let row = &w[li * t..(li + 1) * t];
                let mut acc = b[li];
                for (wi, vi) in row.iter().zip(lane) {
                    acc = acc + *wi * *vi;
                }
                out_lane[li] = acc;
            }
        }
    }
    Ok(out)
}

/// Weighted sum of block outputs: `M[b][c][t] = sum_i h_i[b][c][t] * w[c][i]`.
///
/// `fusion_w` is laid out `[C][n_cols]`; `cols[i]` is the column of
/// `fusion_w` assigned to `hs[i]` (non-contiguous under ablation).
pub fn fuse_cols<S: Scalar>(
    hs: &[&Grid3<S>],
    fusion_w: &[S],
    n_cols: usize,
    cols: &[usize],
) -> Result<Grid3<S>> {
    let first = hs
        .first()
        .ok_or_else(|| Error::InvalidArgument("fuse: empty block list".into()))?;
    let (b, c, t) = first.shape();
    if fusion_w.len() != c * n_cols {
        return Err(Error::ShapeMismatch(format!(
            "fusion weights {} for C={} cols={}",
            fusion_w.len(),
            c,
            n_cols
        )));
    }
    if cols.len() != hs.len() {
        return Err(Error::ShapeMismatch("fuse: cols/hs length".into()));
    }
    let mut out = Grid3::zeros(b, c, t);
    for (h, &col) in hs.iter().zip(cols) {
        if h.shape() != (b, c, t) {
            return Err(Error::ShapeMismatch(format!(
                "fuse: block shape {:?} vs {:?}",
                h.shape(),
                (b, c, t)
            )));
        }
        for bi in 0..b {
            for ci in 0..c {
                let w = fusion_w[ci * n_cols + col];
                let lane = h.lane(bi, ci);
                let out_lane = out.lane_mut(bi, ci);
                for ti in 0..t {
                    out_lane[ti] = out_lane[ti] + lane[ti] * w;
                }
            }
        }
    }
    Ok(out)
}

/// Fusion over a full block list with weights `[C][n+m]`.
pub fn fuse<S: Scalar>(hs: &[&Grid3<S>], fusion_w: &[S]) -> Result<Grid3<S>> {
    let cols: Vec<usize> = (0..hs.len()).collect();
    fuse_cols(hs, fusion_w, hs.len(), &cols)
}
