//! Metrics, test-set evaluation, ablation grids, and per-block
//! activation dumps.

use crate::data::Windows;
use crate::error::{Error, Result};
use crate::grid::Grid3;
use crate::model::{self, ModelConfig, ParameterSet};
use crate::scalar::Scalar;
use crate::train::{self, TrainConfig, TrainHistory};
use serde::{Deserialize, Serialize};
use std::path::Path;
use std::time::Instant;

/// Mean squared error over all elements.
pub fn mse<S: Scalar>(pred: &[S], truth: &[S]) -> Result<f64> {
    if pred.is_empty() || pred.len() != truth.len() {
        return Err(Error::ShapeMismatch(format!(
            "mse: {} predictions vs {} targets",
            pred.len(),
            truth.len()
        )));
    }
    let sum: f64 = pred
        .iter()
        .zip(truth)
        .map(|(&p, &y)| {
            let r = (y - p).to_f64();
            r * r
        })
        .sum();
    Ok(sum / pred.len() as f64)
}

/// Mean absolute error over all elements.
pub fn mae<S: Scalar>(pred: &[S], truth: &[S]) -> Result<f64> {
    if pred.is_empty() || pred.len() != truth.len() {
        return Err(Error::ShapeMismatch(format!(
            "mae: {} predictions vs {} targets",
            pred.len(),
            truth.len()
        )));
    }
    let sum: f64 = pred
        .iter()
        .zip(truth)
        .map(|(&p, &y)| (y - p).to_f64().abs())
        .sum();
    Ok(sum / pred.len() as f64)
}

/// One evaluation result row: metrics are a single mean over every
/// (window, horizon step, channel) element.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ForecastReport {
    pub dataset_id: String,
    pub horizon: usize,
    pub mse: f64,
    pub mae: f64,
    pub n_windows: usize,
    pub use_long: bool,
    pub use_short: bool,
    pub use_ar: bool,
    pub seed: u64,
    pub config_hash: String,
    pub seconds: f64,
}

impl ForecastReport {
    pub fn to_jsonl(&self) -> Result<String> {
        serde_json::to_string(self).map_err(|e| Error::Data(format!("report encode: {e}")))
    }

    pub fn table_row(&self) -> String {
        let flag = |b: bool| if b { "x" } else { " " };
        format!(
            "{:<16} {:>4}  long[{}] short[{}] ar[{}]  mse {:.6}  mae {:.6}  windows {:>6}  seed {}",
            self.dataset_id,
            self.horizon,
            flag(self.use_long),
            flag(self.use_short),
            flag(self.use_ar),
            self.mse,
            self.mae,
            self.n_windows,
            self.seed
        )
    }
}

/// Accumulates MSE/MAE over every test window in infer mode.
pub fn evaluate<S: Scalar>(
    params: &ParameterSet<S>,
    cfg: &ModelConfig,
    windows: &Windows,
    batch_size: usize,
    dataset_id: &str,
    config_hash: &str,
) -> Result<ForecastReport> {
    if windows.is_empty() {
        return Err(Error::Data("evaluation stream is empty".into()));
    }
    let start = Instant::now();
    let mut se_sum = 0.0f64;
    let mut ae_sum = 0.0f64;
    let mut count = 0usize;
    let idx: Vec<usize> = (0..windows.len()).collect();
    for chunk in idx.chunks(batch_size.max(1)) {
        let (x, y) = windows.batch::<S>(chunk)?;
        let f = model::forward(params, cfg, &x)?;
        for (&p, &t) in f.y_hat.data().iter().zip(y.data()) {
            let r = (t - p).to_f64();
            se_sum += r * r;
            ae_sum += r.abs();
        }
        count += y.len();
    }
    Ok(ForecastReport {
        dataset_id: dataset_id.to_string(),
        horizon: cfg.horizon,
        mse: se_sum / count as f64,
        mae: ae_sum / count as f64,
        n_windows: windows.len(),
        use_long: cfg.use_long,
        use_short: cfg.use_short,
        use_ar: cfg.use_ar,
        seed: cfg.seed,
        config_hash: config_hash.to_string(),
        seconds: start.elapsed().as_secs_f64(),
    })
}

/// One (use_long, use_short, use_ar) combination.
pub type AblationFlags = (bool, bool, bool);

/// The four conv-module rows of the ablation table, AR kept on.
pub const CONV_GRID: [AblationFlags; 4] = [
    (false, false, true),
    (true, false, true),
    (false, true, true),
    (true, true, true),
];

/// AR ablation: AR-only, conv-only, full.
pub const AR_GRID: [AblationFlags; 3] = [
    (false, false, true),
    (true, true, false),
    (true, true, true),
];

/// Trains and evaluates one model per flag combination under the same
/// seed and data.
#[allow(clippy::too_many_arguments)]
pub fn run_ablation_grid<S: Scalar>(
    cfg: &ModelConfig,
    tcfg: &TrainConfig,
    train_windows: &Windows,
    val_windows: &Windows,
    test_windows: &Windows,
    grid: &[AblationFlags],
    dataset_id: &str,
    config_hash: &str,
) -> Result<Vec<(ForecastReport, ParameterSet<S>, TrainHistory)>> {
    if grid.is_empty() {
        return Err(Error::Config("ablation grid is empty".into()));
    }
    let mut out = Vec::new();
    for &(use_long, use_short, use_ar) in grid {
        if !use_long && !use_short && !use_ar {
            return Err(Error::Config(
                "ablation with every branch disabled has no trainable model".into(),
            ));
        }
        let run_cfg = ModelConfig {
            use_long,
            use_short,
            use_ar,
            ..cfg.clone()
        };
        let (params, history) = train::train::<S>(&run_cfg, tcfg, train_windows, val_windows)?;
        let report = evaluate(
            &params,
            &run_cfg,
            test_windows,
            tcfg.batch_size,
            dataset_id,
            config_hash,
        )?;
        out.push((report, params, history));
    }
    Ok(out)
}

/// Per-block activation trace of one channel on one window.
#[derive(Debug, Clone)]
pub struct ActivationDump {
    pub channel: usize,
    /// One column per block, each `lookback` long.
    pub columns: Vec<Vec<f64>>,
    /// Blocks whose output is entirely zero on this window.
    pub suppressed: Vec<bool>,
}

/// Runs every conv block in infer mode on the normalized window and
/// tabulates `h_i[channel][.]`.
pub fn dump_block_activations<S: Scalar>(
    params: &ParameterSet<S>,
    cfg: &ModelConfig,
    window: &Grid3<S>,
    channel: usize,
) -> Result<ActivationDump> {
    let (_, c, t) = window.shape();
    if channel >= c {
        return Err(Error::InvalidArgument(format!(
            "channel {channel} out of range (C = {c})"
        )));
    }
    if t != cfg.lookback || c != cfg.n_vars {
        return Err(Error::ShapeMismatch("window shape vs config".into()));
    }
    // blocks consume the last-value-normalized input, as in forward
    let anchor = window.get(0, channel, t - 1);
    let mut x_norm = window.clone();
    for bi in 0..window.batches() {
        for ci in 0..c {
            let a = x_norm.get(bi, ci, t - 1);
            for v in x_norm.lane_mut(bi, ci) {
                *v = *v - a;
            }
        }
    }
    let _ = anchor;
    let mut columns = Vec::new();
    let mut suppressed = Vec::new();
    for block in &params.blocks {
        let h = model::conv_block_infer(&x_norm, block, cfg.padding_mode)?;
        let lane: Vec<f64> = h.lane(0, channel).iter().map(|&v| v.to_f64()).collect();
        suppressed.push(h.data().iter().all(|&v| v == S::zero()));
        columns.push(lane);
    }
    Ok(ActivationDump {
        channel,
        columns,
        suppressed,
    })
}

impl ActivationDump {
    /// CSV with a time index plus one column per block; suppressed blocks
    /// are flagged in a leading comment line.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        let flagged: Vec<String> = self
            .suppressed
            .iter()
            .enumerate()
            .filter(|(_, &s)| s)
            .map(|(i, _)| format!("block{i}"))
            .collect();
        if flagged.is_empty() {
            out.push_str("# suppressed: none\n");
        } else {
            out.push_str(&format!("# suppressed: {}\n", flagged.join(",")));
        }
        out.push('t');
        for i in 0..self.columns.len() {
            out.push_str(&format!(",block{i}"));
        }
        out.push('\n');
        let t_len = self.columns.first().map_or(0, |c| c.len());
        for ti in 0..t_len {
            out.push_str(&ti.to_string());
            for col in &self.columns {
                out.push_str(&format!(",{}", col[ti]));
            }
            out.push('\n');
        }
        std::fs::write(path, out)?;
        Ok(())
    }
}
