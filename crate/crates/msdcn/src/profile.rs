//! Analytic parameter and multiply-accumulate counting plus wall-clock
//! inference timing.
//!
//! MAC convention: one MAC per kernel-tap multiply (padding taps
//! included), per fusion multiply, and per affine-weight multiply. Batch
//! norm, ReLU, and bias adds contribute zero MACs.

use crate::error::Result;
use crate::grid::Grid3;
use crate::model::{self, block_shapes, ModelConfig, ParameterSet};
use crate::scalar::Scalar;
use serde::{Deserialize, Serialize};
use std::time::Instant;

/// Trainable parameter counts per component. `total` covers every
/// learnable array the config instantiates; `active` counts only the
/// branches enabled by the ablation switches.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamCount {
    pub conv_blocks: usize,
    pub fusion: usize,
    pub ffn: usize,
    pub ar: usize,
    pub bn_running_stats: usize,
    pub total: usize,
    pub active: usize,
}

/// Closed-form parameter count: per block C*(k + 1 + 2) for kernel,
/// bias, and BN affine; C*(n+m) fusion weights; T*L + L per affine head.
/// BN running stats are not trainable and are reported separately.
pub fn count_params(cfg: &ModelConfig) -> ParamCount {
    let c = cfg.n_vars;
    let (t, l) = (cfg.lookback, cfg.horizon);
    let head = t * l + l;
    let shapes = block_shapes(cfg);
    let conv_blocks: usize = shapes.iter().map(|&(_, (k, _))| c * (k + 1 + 2)).sum();
    let fusion = c * cfg.n_blocks();
    let bn_running_stats = shapes.len() * 2 * c;

    let active_idx = cfg.active_blocks();
    let active_conv: usize = active_idx
        .iter()
        .map(|&i| c * (shapes[i].1 .0 + 3))
        .sum();
    let mut active = active_conv;
    if !active_idx.is_empty() {
        active += c * active_idx.len() + head; // fusion columns in use + FFN
    }
    if cfg.use_ar {
        active += head;
    }

    ParamCount {
        conv_blocks,
        fusion,
        ffn: head,
        ar: head,
        bn_running_stats,
        total: conv_blocks + fusion + 2 * head,
        active,
    }
}

/// Multiply-accumulate counts per forecast window (batch of one).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MacCount {
    pub conv: u64,
    pub fusion: u64,
    pub ffn: u64,
    pub ar: u64,
    /// Sum over the branches the ablation switches enable.
    pub total: u64,
}

/// Per window: conv sum_i C*T*k_i, fusion C*T*n_active, each affine head
/// C*T*L; disabled branches contribute zero to `total`.
pub fn count_macs(cfg: &ModelConfig) -> MacCount {
    let c = cfg.n_vars as u64;
    let t = cfg.lookback as u64;
    let l = cfg.horizon as u64;
    let shapes = block_shapes(cfg);
    let active = cfg.active_blocks();
    let conv: u64 = active
        .iter()
        .map(|&i| c * t * shapes[i].1 .0 as u64)
        .sum();
    let fusion = c * t * active.len() as u64;
    let ffn = if active.is_empty() { 0 } else { c * t * l };
    let ar = if cfg.use_ar { c * t * l } else { 0 };
    MacCount {
        conv,
        fusion,
        ffn,
        ar,
        total: conv + fusion + ffn + ar,
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LatencyStats {
    pub repetitions: usize,
    pub mean_seconds: f64,
    pub median_seconds: f64,
    pub p95_seconds: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EfficiencyReport {
    pub total_params: usize,
    pub active_params: usize,
    pub macs_per_window: u64,
    pub latency: LatencyStats,
    pub peak_activation_bytes: usize,
    pub environment: String,
}

/// Analytic peak-activation estimate for one forward pass: the
/// normalized input, conv/BN intermediates and block outputs, the fused
/// features, and the three horizon-length outputs.
pub fn activation_bytes(cfg: &ModelConfig, batch: usize, elem_bytes: usize) -> usize {
    let c = cfg.n_vars;
    let (t, l) = (cfg.lookback, cfg.horizon);
    let n_active = cfg.active_blocks().len();
    let lookback_arrays = 1 + 2 * n_active + usize::from(n_active > 0); // x_norm, u+h per block, M
    (batch * c * (lookback_arrays * t + 3 * l)) * elem_bytes
}

/// Times full inference passes over `batch`, one warm-up run excluded.
pub fn time_inference<S: Scalar>(
    params: &ParameterSet<S>,
    cfg: &ModelConfig,
    batch: &Grid3<S>,
    repetitions: usize,
) -> Result<EfficiencyReport> {
    let reps = repetitions.max(3);
    model::forward(params, cfg, batch)?; // warm-up
    let mut times = Vec::with_capacity(reps);
    for _ in 0..reps {
        let start = Instant::now();
        let f = model::forward(params, cfg, batch)?;
        let elapsed = start.elapsed().as_secs_f64();
        std::hint::black_box(f.y_hat.data().first().copied());
        times.push(elapsed);
    }
    let mut sorted = times.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mean = times.iter().sum::<f64>() / reps as f64;
    let median = sorted[reps / 2];
    let p95 = sorted[((0.95 * reps as f64).ceil() as usize).clamp(1, reps) - 1];

    let counts = count_params(cfg);
    Ok(EfficiencyReport {
        total_params: counts.total,
        active_params: counts.active,
        macs_per_window: count_macs(cfg).total,
        latency: LatencyStats {
            repetitions: reps,
            mean_seconds: mean,
            median_seconds: median,
            p95_seconds: p95,
        },
        peak_activation_bytes: activation_bytes(cfg, batch.batches(), S::BYTES),
        environment: format!("{} {}", std::env::consts::OS, std::env::consts::ARCH),
    })
}
