use clap::{Args, Parser, Subcommand};
use msdcn::run::{self, RunConfig, SynthSpec};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "msdcn", about = "Multi-scale dilated convolution forecaster")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by every command that resolves a run configuration.
#[derive(Args, Clone, Default)]
struct CommonOpts {
    /// key = value config file, applied over built-in defaults
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dataset protocol preset: ett or illness
    #[arg(long)]
    preset: Option<String>,
    /// Input CSV (first column 'date')
    #[arg(long)]
    data: Option<PathBuf>,
    /// Split ratios, e.g. 6:2:2
    #[arg(long)]
    split: Option<String>,
    #[arg(long)]
    lookback: Option<usize>,
    #[arg(long)]
    horizon: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    n_long: Option<usize>,
    #[arg(long)]
    n_short: Option<usize>,
    #[arg(long)]
    k_long: Option<usize>,
    #[arg(long)]
    k_short: Option<usize>,
    #[arg(long)]
    huber_delta: Option<f64>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    max_epochs: Option<usize>,
    #[arg(long)]
    patience: Option<usize>,
    /// symmetric or causal
    #[arg(long)]
    padding_mode: Option<String>,
    /// Disable the long conv module
    #[arg(long)]
    no_long: bool,
    /// Disable the short conv module
    #[arg(long)]
    no_short: bool,
    /// Disable the autoregressive branch
    #[arg(long)]
    no_ar: bool,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[arg(long)]
    dataset_id: Option<String>,
}

impl CommonOpts {
    fn resolve(&self) -> msdcn::Result<RunConfig> {
        let mut run = RunConfig::default();
        if let Some(path) = &self.config {
            run.apply_file(path)?;
        }
        if let Some(p) = &self.preset {
            run.apply_preset(p)?;
        }
        let mut set = |key: &str, value: Option<String>| -> msdcn::Result<()> {
            if let Some(v) = value {
                run.set(key, &v)?;
            }
            Ok(())
        };
        set("data", self.data.as_ref().map(|p| p.display().to_string()))?;
        set("split", self.split.clone())?;
        set("lookback", self.lookback.map(|v| v.to_string()))?;
        set("horizon", self.horizon.map(|v| v.to_string()))?;
        set("seed", self.seed.map(|v| v.to_string()))?;
        set("n_long", self.n_long.map(|v| v.to_string()))?;
        set("n_short", self.n_short.map(|v| v.to_string()))?;
        set("k_long", self.k_long.map(|v| v.to_string()))?;
        set("k_short", self.k_short.map(|v| v.to_string()))?;
        set("huber_delta", self.huber_delta.map(|v| v.to_string()))?;
        set("learning_rate", self.learning_rate.map(|v| v.to_string()))?;
        set("batch_size", self.batch_size.map(|v| v.to_string()))?;
        set("max_epochs", self.max_epochs.map(|v| v.to_string()))?;
        set("patience", self.patience.map(|v| v.to_string()))?;
        set("padding_mode", self.padding_mode.clone())?;
        set(
            "out_dir",
            self.out_dir.as_ref().map(|p| p.display().to_string()),
        )?;
        set("dataset_id", self.dataset_id.clone())?;
        if self.no_long {
            run.set("use_long", "false")?;
        }
        if self.no_short {
            run.set("use_short", "false")?;
        }
        if self.no_ar {
            run.set("use_ar", "false")?;
        }
        Ok(run)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Train on a CSV and report test metrics
    Train {
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Train one model per ablation-flag combination
    Ablate {
        #[command(flatten)]
        common: CommonOpts,
        /// conv, ar, or full
        #[arg(long)]
        grid: String,
    },
    /// Emit parameter/MAC counts and inference latency, no training
    Profile {
        #[command(flatten)]
        common: CommonOpts,
        /// Model-shape preset: dlinear or ar-only
        #[arg(long)]
        model_preset: Option<String>,
        #[arg(long, default_value_t = 1)]
        batch: usize,
        #[arg(long, default_value_t = 10)]
        repetitions: usize,
        #[arg(long)]
        channels: Option<usize>,
    },
    /// Dump per-block activations for one test window
    Dump {
        #[command(flatten)]
        common: CommonOpts,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 0)]
        window: usize,
        #[arg(long, default_value_t = 0)]
        channel: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a synthetic CSV
    Synth {
        #[arg(long)]
        out: PathBuf,
        /// Comma-separated periods, e.g. 24,168
        #[arg(long, default_value = "24,168")]
        periods: String,
        /// Comma-separated amplitudes (default: 1 per period)
        #[arg(long, default_value = "")]
        amplitudes: String,
        #[arg(long, default_value_t = 0.0)]
        slope: f64,
        #[arg(long, default_value_t = 0.1)]
        noise: f64,
        #[arg(long, default_value_t = 5000)]
        n: usize,
        #[arg(long, default_value_t = 7)]
        channels: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn parse_list(s: &str) -> msdcn::Result<Vec<f64>> {
    if s.trim().is_empty() {
        return Ok(Vec::new());
    }
    s.split(',')
        .map(|p| {
            p.trim()
                .parse::<f64>()
                .map_err(|_| msdcn::Error::Config(format!("bad list entry '{p}'")))
        })
        .collect()
}

fn dispatch(cli: Cli) -> msdcn::Result<()> {
    match cli.command {
        Command::Train { common } => {
            let report = run::cmd_train(common.resolve()?)?;
            println!("{}", report.table_row());
        }
        Command::Ablate { common, grid } => {
            run::cmd_ablate(common.resolve()?, &grid)?;
        }
        Command::Profile {
            common,
            model_preset,
            batch,
            repetitions,
            channels,
        } => {
            let mut cfg = common.resolve()?;
            if let Some(p) = model_preset {
                run::apply_profile_preset(&mut cfg, &p)?;
            }
            if let Some(c) = channels {
                cfg.model.n_vars = c;
            }
            run::cmd_profile(cfg, batch, repetitions)?;
        }
        Command::Dump {
            common,
            checkpoint,
            window,
            channel,
            out,
        } => {
            run::cmd_dump(common.resolve()?, &checkpoint, window, channel, &out)?;
            println!("wrote {}", out.display());
        }
        Command::Synth {
            out,
            periods,
            amplitudes,
            slope,
            noise,
            n,
            channels,
            seed,
        } => {
            let spec = SynthSpec {
                periods: parse_list(&periods)?,
                amplitudes: parse_list(&amplitudes)?,
                slope,
                noise_sigma: noise,
                n_obs: n,
                channels,
                seed,
            };
            run::cmd_synth(&spec, &out)?;
            println!("wrote {}", out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
