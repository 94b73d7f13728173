//! Dataset ingestion, chronological splitting, train-split
//! standardization, sliding-window extraction, and synthetic series
//! generation.
//!
//! CSV convention: first column is a timestamp header named `date`,
//! remaining columns are numeric variables, no missing cells.

use crate::error::{Error, Result};
use crate::grid::Grid3;
use crate::scalar::Scalar;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use std::ops::Range;
use std::path::Path;

/// A multivariate series: `values` is row-major `[n_obs][n_vars]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesDataset {
    pub variable_names: Vec<String>,
    pub timestamps: Vec<String>,
    pub values: Vec<f64>,
    pub n_obs: usize,
    pub n_vars: usize,
    pub frequency: String,
}

impl SeriesDataset {
    #[inline]
    pub fn value(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.n_vars + col]
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec!["date".to_string()];
        header.extend(self.variable_names.iter().cloned());
        w.write_record(&header)
            .map_err(|e| Error::Data(e.to_string()))?;
        for row in 0..self.n_obs {
            let mut rec = vec![self.timestamps[row].clone()];
            for col in 0..self.n_vars {
                rec.push(format!("{}", self.value(row, col)));
            }
            w.write_record(&rec).map_err(|e| Error::Data(e.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Loads the benchmark CSV convention; rejects missing or non-numeric
/// cells with the offending row and column named.
pub fn load_csv(path: &Path) -> Result<SeriesDataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    let headers = rdr
        .headers()
        .map_err(|e| Error::Data(format!("{}: {e}", path.display())))?
        .clone();
    if headers.is_empty() {
        return Err(Error::Data(format!("{}: empty file", path.display())));
    }
    if headers.get(0) != Some("date") {
        return Err(Error::Data(format!(
            "{}: first column must be named 'date', got '{}'",
            path.display(),
            headers.get(0).unwrap_or("")
        )));
    }
    let variable_names: Vec<String> = headers.iter().skip(1).map(str::to_string).collect();
    let n_vars = variable_names.len();
    if n_vars == 0 {
        return Err(Error::Data(format!(
            "{}: no variable columns",
            path.display()
        )));
    }

    let mut timestamps = Vec::new();
    let mut values = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::Data(format!("row {}: {e}", i + 1)))?;
        if rec.len() != n_vars + 1 {
            return Err(Error::Data(format!(
                "row {}: {} fields, expected {}",
                i + 1,
                rec.len(),
                n_vars + 1
            )));
        }
        timestamps.push(rec.get(0).unwrap_or("").to_string());
        for (j, name) in variable_names.iter().enumerate() {
            let cell = rec.get(j + 1).unwrap_or("");
            if cell.trim().is_empty() {
                return Err(Error::Data(format!(
                    "row {}, column '{}': missing value",
                    i + 1,
                    name
                )));
            }
            let v: f64 = cell.trim().parse().map_err(|_| {
                Error::Data(format!(
                    "row {}, column '{}': non-numeric value '{}'",
                    i + 1,
                    name,
                    cell
                ))
            })?;
            if !v.is_finite() {
                return Err(Error::Data(format!(
                    "row {}, column '{}': non-finite value",
                    i + 1,
                    name
                )));
            }
            values.push(v);
        }
    }
    if timestamps.is_empty() {
        return Err(Error::Data(format!("{}: no data rows", path.display())));
    }
    let n_obs = timestamps.len();
    Ok(SeriesDataset {
        variable_names,
        timestamps,
        values,
        n_obs,
        n_vars,
        frequency: String::new(),
    })
}

/// Contiguous chronological train/val/test row ranges.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitSpec {
    pub train: Range<usize>,
    pub val: Range<usize>,
    pub test: Range<usize>,
}

/// Floor the first two boundaries, remainder to test.
pub fn chronological_split(n_obs: usize, ratios: (f64, f64, f64)) -> Result<SplitSpec> {
    let (r1, r2, r3) = ratios;
    if r1 <= 0.0 || r2 <= 0.0 || r3 <= 0.0 {
        return Err(Error::Config("split ratios must be positive".into()));
    }
    if (r1 + r2 + r3 - 1.0).abs() > 1e-9 {
        return Err(Error::Config(format!(
            "split ratios must sum to 1, got {}",
            r1 + r2 + r3
        )));
    }
    let b1 = (r1 * n_obs as f64).floor() as usize;
    let b2 = ((r1 + r2) * n_obs as f64).floor() as usize;
    Ok(SplitSpec {
        train: 0..b1,
        val: b1..b2,
        test: b2..n_obs,
    })
}

/// Parses "6:2:2"-style ratio strings.
pub fn parse_ratios(s: &str) -> Result<(f64, f64, f64)> {
    let parts: Vec<f64> = s
        .split(':')
        .map(|p| p.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::Config(format!("bad split spec '{s}'")))?;
    if parts.len() != 3 {
        return Err(Error::Config(format!("split spec '{s}' needs 3 parts")));
    }
    let sum: f64 = parts.iter().sum();
    if sum <= 0.0 {
        return Err(Error::Config(format!("split spec '{s}' sums to zero")));
    }
    Ok((parts[0] / sum, parts[1] / sum, parts[2] / sum))
}

/// Per-variable z-score statistics from the train range (population std).
#[derive(Debug, Clone, PartialEq)]
pub struct StandardizeStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl StandardizeStats {
    /// Sidecar text file: one `variable mean std` line per column.
    pub fn write_sidecar(&self, path: &Path, names: &[String]) -> Result<()> {
        let mut out = String::new();
        for (i, name) in names.iter().enumerate() {
            out.push_str(&format!("{} {} {}\n", name, self.mean[i], self.std[i]));
        }
        std::fs::write(path, out)?;
        Ok(())
    }
}

/// Z-scores every row using statistics computed on the train range only.
pub fn standardize(
    ds: &SeriesDataset,
    train: &Range<usize>,
) -> Result<(SeriesDataset, StandardizeStats)> {
    let n = train.len();
    if n < 2 {
        return Err(Error::Data("train range too small to standardize".into()));
    }
    let c = ds.n_vars;
    let mut mean = vec![0.0; c];
    let mut std = vec![0.0; c];
    for col in 0..c {
        let mut sum = 0.0;
        for row in train.clone() {
            sum += ds.value(row, col);
        }
        let mu = sum / n as f64;
        let mut var = 0.0;
        for row in train.clone() {
            let d = ds.value(row, col) - mu;
            var += d * d;
        }
        let sigma = (var / n as f64).sqrt();
        if sigma < 1e-12 {
            return Err(Error::Data(format!(
                "column '{}' has zero variance on the train range",
                ds.variable_names[col]
            )));
        }
        mean[col] = mu;
        std[col] = sigma;
    }
    let mut out = ds.clone();
    for row in 0..ds.n_obs {
        for col in 0..c {
            out.values[row * c + col] = (ds.value(row, col) - mean[col]) / std[col];
        }
    }
    Ok((out, StandardizeStats { mean, std }))
}

/// Sliding (lookback, horizon) windows over one split.
///
/// Each window's input covers rows `[start, start+T)` and its target
/// `[start+T, start+T+L)`; targets never overlap inputs.
#[derive(Debug, Clone)]
pub struct Windows<'a> {
    ds: &'a SeriesDataset,
    starts: Vec<usize>,
    pub lookback: usize,
    pub horizon: usize,
}

impl<'a> Windows<'a> {
    pub fn len(&self) -> usize {
        self.starts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.starts.is_empty()
    }

    pub fn start(&self, i: usize) -> usize {
        self.starts[i]
    }

    /// Materializes the windows at `idxs` as (inputs, targets) grids.
    pub fn batch<S: Scalar>(&self, idxs: &[usize]) -> Result<(Grid3<S>, Grid3<S>)> {
        let b = idxs.len();
        let c = self.ds.n_vars;
        let (t, l) = (self.lookback, self.horizon);
        let mut x = Grid3::zeros(b, c, t);
        let mut y = Grid3::zeros(b, c, l);
        for (bi, &wi) in idxs.iter().enumerate() {
            let s = *self
                .starts
                .get(wi)
                .ok_or_else(|| Error::Data(format!("window index {wi} out of range")))?;
            for ci in 0..c {
                for ti in 0..t {
                    x.set(bi, ci, ti, S::from_f64(self.ds.value(s + ti, ci)));
                }
                for li in 0..l {
                    y.set(bi, ci, li, S::from_f64(self.ds.value(s + t + li, ci)));
                }
            }
        }
        Ok((x, y))
    }
}

/// Cuts stride-`stride` windows from `range`. With
/// `context_from_previous`, lookbacks may reach into rows before the
/// range so the first target is the first row of the range.
pub fn make_windows<'a>(
    ds: &'a SeriesDataset,
    range: &Range<usize>,
    lookback: usize,
    horizon: usize,
    stride: usize,
    context_from_previous: bool,
) -> Result<Windows<'a>> {
    if stride == 0 {
        return Err(Error::Config("stride must be >= 1".into()));
    }
    if range.end > ds.n_obs {
        return Err(Error::Data("split range exceeds dataset".into()));
    }
    let first = if context_from_previous {
        range.start.saturating_sub(lookback)
    } else {
        range.start
    };
    // every target must fit inside the range
    let starts: Vec<usize> = (first..)
        .step_by(stride)
        .take_while(|s| s + lookback + horizon <= range.end)
        .filter(|s| s + lookback >= range.start)
        .collect();
    if starts.is_empty() {
        return Err(Error::Data(format!(
            "range of {} rows is too short for lookback {} + horizon {}",
            range.len(),
            lookback,
            horizon
        )));
    }
    Ok(Windows {
        ds,
        starts,
        lookback,
        horizon,
    })
}

// days-since-epoch to (year, month, day), Gregorian
fn civil_from_days(z: i64) -> (i64, u32, u32) {
    let z = z + 719_468;
    let era = if z >= 0 { z } else { z - 146_096 } / 146_097;
    let doe = (z - era * 146_097) as u64;
    let yoe = (doe - doe / 1460 + doe / 36524 - doe / 146_096) / 365;
    let y = yoe as i64 + era * 400;
    let doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    let mp = (5 * doy + 2) / 153;
    let d = (doy - (153 * mp + 2) / 5 + 1) as u32;
    let m = (if mp < 10 { mp + 3 } else { mp - 9 }) as u32;
    (if m <= 2 { y + 1 } else { y }, m, d)
}

fn hourly_timestamp(hours: usize) -> String {
    let days = hours / 24;
    let hour = hours % 24;
    let (y, m, d) = civil_from_days(days as i64 + 10_957); // 2000-01-01 base
    format!("{y:04}-{m:02}-{d:02} {hour:02}:00:00")
}

/// Sum of sinusoids plus a linear trend plus Gaussian noise, one phase
/// offset per channel; hourly timestamps; deterministic per seed.
#[allow(clippy::too_many_arguments)]
pub fn generate_synthetic(
    periods: &[f64],
    amplitudes: &[f64],
    trend_slope: f64,
    noise_sigma: f64,
    n_obs: usize,
    n_vars: usize,
    seed: u64,
) -> Result<SeriesDataset> {
    if periods.len() != amplitudes.len() {
        return Err(Error::Config(
            "periods and amplitudes must have equal length".into(),
        ));
    }
    if periods.iter().any(|&p| p <= 0.0) {
        return Err(Error::Config("periods must be positive".into()));
    }
    if n_vars == 0 || n_obs == 0 {
        return Err(Error::Config("n_obs and n_vars must be >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0).map_err(|e| Error::Config(e.to_string()))?;
    let tau = std::f64::consts::TAU;

    let mut values = vec![0.0; n_obs * n_vars];
    for row in 0..n_obs {
        for col in 0..n_vars {
            let phase = tau * col as f64 / n_vars as f64;
            let mut v = trend_slope * row as f64;
            for (p, a) in periods.iter().zip(amplitudes) {
                v += a * (tau * row as f64 / p + phase).sin();
            }
            if noise_sigma > 0.0 {
                v += noise_sigma * normal.sample(&mut rng);
            }
            values[row * n_vars + col] = v;
        }
    }
    Ok(SeriesDataset {
        variable_names: (0..n_vars).map(|i| format!("var{i}")).collect(),
        timestamps: (0..n_obs).map(hourly_timestamp).collect(),
        values,
        n_obs,
        n_vars,
        frequency: "1h".into(),
    })
}
