//! Run configuration and the command implementations behind the CLI.
//!
//! Precedence: built-in defaults < config file (`key = value` lines)
//! < command-line flags. A sha256 hash over the resolved configuration
//! is stamped into every output artifact.

use crate::data::{self, SeriesDataset, Windows};
use crate::error::{Error, Result};
use crate::eval::{self, AblationFlags, ForecastReport};
use crate::model::{self, ModelConfig};
use crate::profile::{self, EfficiencyReport};
use crate::train::{self, TrainConfig};
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub data_path: Option<PathBuf>,
    pub split: (f64, f64, f64),
    pub context_from_previous: bool,
    pub stride: usize,
    pub out_dir: PathBuf,
    pub dataset_id: String,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            data_path: None,
            split: (0.7, 0.1, 0.2),
            context_from_previous: true,
            stride: 1,
            out_dir: PathBuf::from("runs/default"),
            dataset_id: String::new(),
        }
    }
}

impl RunConfig {
    /// Dataset protocol presets: `ett` (6:2:2, lookback 96) and
    /// `illness` (7:1:2, lookback 36).
    pub fn apply_preset(&mut self, preset: &str) -> Result<()> {
        match preset {
            "ett" => {
                self.split = (0.6, 0.2, 0.2);
                self.model.lookback = 96;
            }
            "illness" => {
                self.split = (0.7, 0.1, 0.2);
                self.model.lookback = 36;
                self.model.horizon = 24;
            }
            other => {
                return Err(Error::Config(format!("unknown preset '{other}'")));
            }
        }
        Ok(())
    }

    /// Applies one `key = value` assignment.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let bad = |what: &str| Error::Config(format!("bad value '{value}' for {what}"));
        match key {
            "lookback" => self.model.lookback = value.parse().map_err(|_| bad(key))?,
            "horizon" => self.model.horizon = value.parse().map_err(|_| bad(key))?,
            "n_vars" | "channels" => self.model.n_vars = value.parse().map_err(|_| bad(key))?,
            "n_long" => self.model.n_long = value.parse().map_err(|_| bad(key))?,
            "n_short" => self.model.n_short = value.parse().map_err(|_| bad(key))?,
            "k_long" => self.model.k_long = value.parse().map_err(|_| bad(key))?,
            "k_short" => self.model.k_short = value.parse().map_err(|_| bad(key))?,
            "huber_delta" => {
                let d: f64 = value.parse().map_err(|_| bad(key))?;
                self.model.huber_delta = d;
                self.train.huber_delta = d;
            }
            "use_long" => self.model.use_long = value.parse().map_err(|_| bad(key))?,
            "use_short" => self.model.use_short = value.parse().map_err(|_| bad(key))?,
            "use_ar" => self.model.use_ar = value.parse().map_err(|_| bad(key))?,
            "padding_mode" => self.model.padding_mode = value.parse()?,
            "seed" => {
                let s: u64 = value.parse().map_err(|_| bad(key))?;
                self.model.seed = s;
                self.train.seed = s;
            }
            "learning_rate" => self.train.learning_rate = value.parse().map_err(|_| bad(key))?,
            "batch_size" => self.train.batch_size = value.parse().map_err(|_| bad(key))?,
            "max_epochs" => self.train.max_epochs = value.parse().map_err(|_| bad(key))?,
            "patience" => self.train.patience = value.parse().map_err(|_| bad(key))?,
            "adam_beta1" => self.train.adam_beta1 = value.parse().map_err(|_| bad(key))?,
            "adam_beta2" => self.train.adam_beta2 = value.parse().map_err(|_| bad(key))?,
            "adam_eps" => self.train.adam_eps = value.parse().map_err(|_| bad(key))?,
            "data" => self.data_path = Some(PathBuf::from(value)),
            "split" => self.split = data::parse_ratios(value)?,
            "context_from_previous" => {
                self.context_from_previous = value.parse().map_err(|_| bad(key))?
            }
            "stride" => self.stride = value.parse().map_err(|_| bad(key))?,
            "out_dir" => self.out_dir = PathBuf::from(value),
            "dataset_id" => self.dataset_id = value.to_string(),
            "preset" => self.apply_preset(value)?,
            other => {
                return Err(Error::Config(format!("unknown config key '{other}'")));
            }
        }
        Ok(())
    }

    /// Applies a `key = value` config file (blank lines and `#` comments
    /// ignored).
    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("{}:{}: expected key = value", path.display(), i + 1))
            })?;
            self.set(key.trim(), value.trim())?;
        }
        Ok(())
    }

    /// Canonical listing of every resolved field.
    pub fn canonical(&self) -> String {
        let m = &self.model;
        let t = &self.train;
        format!(
            "adam_beta1={}\nadam_beta2={}\nadam_eps={}\nbatch_size={}\ncontext_from_previous={}\n\
             data={}\ndataset_id={}\nhorizon={}\nhuber_delta={}\nk_long={}\nk_short={}\n\
             learning_rate={}\nlookback={}\nmax_epochs={}\nn_long={}\nn_short={}\nn_vars={}\n\
             padding_mode={:?}\npatience={}\nseed={}\nsplit={}:{}:{}\nstride={}\n\
             use_ar={}\nuse_long={}\nuse_short={}\n",
            t.adam_beta1,
            t.adam_beta2,
            t.adam_eps,
            t.batch_size,
            self.context_from_previous,
            self.data_path
                .as_ref()
                .map(|p| p.display().to_string())
                .unwrap_or_default(),
            self.dataset_id,
            m.horizon,
            m.huber_delta,
            m.k_long,
            m.k_short,
            t.learning_rate,
            m.lookback,
            t.max_epochs,
            m.n_long,
            m.n_short,
            m.n_vars,
            m.padding_mode,
            t.patience,
            m.seed,
            self.split.0,
            self.split.1,
            self.split.2,
            self.stride,
            m.use_ar,
            m.use_long,
            m.use_short,
        )
    }

    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.canonical().as_bytes());
        let hex: String = digest.iter().map(|b| format!("{b:02x}")).collect();
        hex[..16].to_string()
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.train.validate()?;
        if self.stride == 0 {
            return Err(Error::Config("stride must be >= 1".into()));
        }
        Ok(())
    }
}

/// Loaded, split, standardized data plus the three window sets.
pub struct PreparedData {
    pub dataset: SeriesDataset,
    pub split: data::SplitSpec,
    pub stats: data::StandardizeStats,
}

impl PreparedData {
    pub fn windows(&self, run: &RunConfig) -> Result<(Windows<'_>, Windows<'_>, Windows<'_>)> {
        let (t, l) = (run.model.lookback, run.model.horizon);
        let train = data::make_windows(&self.dataset, &self.split.train, t, l, run.stride, false)?;
        let val = data::make_windows(
            &self.dataset,
            &self.split.val,
            t,
            l,
            run.stride,
            run.context_from_previous,
        )?;
        let test = data::make_windows(
            &self.dataset,
            &self.split.test,
            t,
            l,
            run.stride,
            run.context_from_previous,
        )?;
        Ok((train, val, test))
    }
}

/// Loads the configured CSV, splits chronologically, and standardizes
/// with train-range statistics. Also fixes `n_vars` from the data.
pub fn prepare_data(run: &mut RunConfig) -> Result<PreparedData> {
    let path = run
        .data_path
        .clone()
        .ok_or_else(|| Error::Config("no dataset path given (--data)".into()))?;
    let raw = data::load_csv(&path)?;
    run.model.n_vars = raw.n_vars;
    if run.dataset_id.is_empty() {
        run.dataset_id = path
            .file_stem()
            .map(|s| s.to_string_lossy().to_string())
            .unwrap_or_else(|| "dataset".into());
    }
    let split = data::chronological_split(raw.n_obs, run.split)?;
    let (dataset, stats) = data::standardize(&raw, &split.train)?;
    Ok(PreparedData {
        dataset,
        split,
        stats,
    })
}

fn ensure_out_dir(run: &RunConfig) -> Result<()> {
    std::fs::create_dir_all(&run.out_dir)?;
    Ok(())
}

/// Loads, splits, standardizes, trains, and writes checkpoint +
/// history + test report into the run directory.
pub fn cmd_train(mut run: RunConfig) -> Result<ForecastReport> {
    run.validate()?;
    let prepared = prepare_data(&mut run)?;
    run.validate()?;
    ensure_out_dir(&run)?;
    let hash = run.hash();
    let (train_w, val_w, test_w) = prepared.windows(&run)?;

    let (params, history) = train::train::<f32>(&run.model, &run.train, &train_w, &val_w)?;
    let mut report = eval::evaluate(
        &params,
        &run.model,
        &test_w,
        run.train.batch_size,
        &run.dataset_id,
        &hash,
    )?;
    report.seconds = history.epochs.iter().map(|e| e.seconds).sum();

    prepared.stats.write_sidecar(
        &run.out_dir.join("standardize_stats.txt"),
        &prepared.dataset.variable_names,
    )?;
    model::save_checkpoint(&run.out_dir.join("model.ckpt"), &run.model, &params)?;
    history.write_jsonl(&run.out_dir.join("history.jsonl"))?;
    std::fs::write(
        run.out_dir.join("report.json"),
        report.to_jsonl()? + "\n",
    )?;
    std::fs::write(
        run.out_dir.join("report.txt"),
        format!("config {hash}\n{}\n", report.table_row()),
    )?;
    Ok(report)
}

/// Named ablation grids for the CLI.
pub fn grid_by_name(name: &str) -> Result<Vec<AblationFlags>> {
    match name {
        "conv" => Ok(eval::CONV_GRID.to_vec()),
        "ar" => Ok(eval::AR_GRID.to_vec()),
        "full" => {
            let mut g = eval::CONV_GRID.to_vec();
            g.push((true, true, false));
            Ok(g)
        }
        "" => Err(Error::Config("empty ablation grid".into())),
        other => Err(Error::Config(format!(
            "unknown grid '{other}' (expected conv, ar, or full)"
        ))),
    }
}

/// Trains one model per flag combination and writes a comparison table.
pub fn cmd_ablate(mut run: RunConfig, grid_name: &str) -> Result<Vec<ForecastReport>> {
    run.validate()?;
    let grid = grid_by_name(grid_name)?;
    let prepared = prepare_data(&mut run)?;
    run.validate()?;
    ensure_out_dir(&run)?;
    let hash = run.hash();
    let (train_w, val_w, test_w) = prepared.windows(&run)?;

    let results = eval::run_ablation_grid::<f32>(
        &run.model,
        &run.train,
        &train_w,
        &val_w,
        &test_w,
        &grid,
        &run.dataset_id,
        &hash,
    )?;
    let mut table = format!("config {hash}\nlong short ar    mse       mae\n");
    let mut jsonl = String::new();
    let mut reports = Vec::new();
    for (report, _, _) in results {
        let flag = |b: bool| if b { "\u{2713}" } else { "\u{00d7}" };
        table.push_str(&format!(
            "{:^4} {:^5} {:^2}  {:.6}  {:.6}\n",
            flag(report.use_long),
            flag(report.use_short),
            flag(report.use_ar),
            report.mse,
            report.mae
        ));
        jsonl.push_str(&report.to_jsonl()?);
        jsonl.push('\n');
        reports.push(report);
    }
    std::fs::write(run.out_dir.join("ablation.txt"), &table)?;
    std::fs::write(run.out_dir.join("ablation.jsonl"), jsonl)?;
    print!("{table}");
    Ok(reports)
}

/// Model-shape presets for the profiler.
pub fn apply_profile_preset(run: &mut RunConfig, preset: &str) -> Result<()> {
    match preset {
        // two lookback -> horizon affine maps, no conv blocks
        "dlinear" => {
            run.model.n_long = 0;
            run.model.n_short = 0;
            run.model.use_long = false;
            run.model.use_short = false;
            run.model.use_ar = true;
            run.model.lookback = 96;
            run.model.horizon = 720;
        }
        "ar-only" => {
            run.model.n_long = 0;
            run.model.n_short = 0;
            run.model.use_long = false;
            run.model.use_short = false;
            run.model.use_ar = true;
        }
        other => {
            return Err(Error::Config(format!("unknown profile preset '{other}'")));
        }
    }
    Ok(())
}

/// Emits an [`EfficiencyReport`] for the configured model, no training.
pub fn cmd_profile(run: RunConfig, batch: usize, repetitions: usize) -> Result<EfficiencyReport> {
    run.validate()?;
    let params: model::ParameterSet<f32> = model::init_parameters(&run.model, run.model.seed);
    let x = crate::grid::Grid3::<f32>::zeros(batch.max(1), run.model.n_vars, run.model.lookback);
    let report = profile::time_inference(&params, &run.model, &x, repetitions)?;
    ensure_out_dir(&run)?;
    let json = serde_json::to_string_pretty(&report)
        .map_err(|e| Error::Data(format!("profile encode: {e}")))?;
    std::fs::write(run.out_dir.join("profile.json"), &json)?;
    println!(
        "config {}\ntotal params      {}\nactive params     {}\nmacs per window   {}\n\
         latency mean      {:.6}s\nlatency median    {:.6}s\nlatency p95       {:.6}s\n\
         activation bytes  {}\nenvironment       {}",
        run.hash(),
        report.total_params,
        report.active_params,
        report.macs_per_window,
        report.latency.mean_seconds,
        report.latency.median_seconds,
        report.latency.p95_seconds,
        report.peak_activation_bytes,
        report.environment
    );
    Ok(report)
}

/// Writes the per-block activation CSV for one test window and channel.
pub fn cmd_dump(
    mut run: RunConfig,
    checkpoint: &Path,
    window_index: usize,
    channel: usize,
    out: &Path,
) -> Result<()> {
    let (cfg, params) = model::load_checkpoint::<f32>(checkpoint)?;
    run.model = cfg;
    let prepared = prepare_data(&mut run)?;
    if run.model.n_vars != prepared.dataset.n_vars {
        return Err(Error::Config(format!(
            "checkpoint expects {} variables, dataset has {}",
            run.model.n_vars, prepared.dataset.n_vars
        )));
    }
    let (_, _, test_w) = prepared.windows(&run)?;
    if window_index >= test_w.len() {
        return Err(Error::InvalidArgument(format!(
            "window index {window_index} past stream end ({} windows)",
            test_w.len()
        )));
    }
    let (x, _) = test_w.batch::<f32>(&[window_index])?;
    let dump = eval::dump_block_activations(&params, &run.model, &x, channel)?;
    if let Some(parent) = out.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    dump.write_csv(out)?;
    Ok(())
}

/// Synthetic-series generation parameters.
pub struct SynthSpec {
    pub periods: Vec<f64>,
    pub amplitudes: Vec<f64>,
    pub slope: f64,
    pub noise_sigma: f64,
    pub n_obs: usize,
    pub channels: usize,
    pub seed: u64,
}

/// Writes a synthetic CSV in the benchmark convention.
pub fn cmd_synth(spec: &SynthSpec, out: &Path) -> Result<()> {
    let amplitudes = if spec.amplitudes.is_empty() {
        vec![1.0; spec.periods.len()]
    } else {
        spec.amplitudes.clone()
    };
    let ds = data::generate_synthetic(
        &spec.periods,
        &amplitudes,
        spec.slope,
        spec.noise_sigma,
        spec.n_obs,
        spec.channels,
        spec.seed,
    )?;
    if let Some(parent) = out.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    ds.write_csv(out)?;
    Ok(())
}
