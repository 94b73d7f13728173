//! Multi-scale dilated convolution network (MSDCN) for long-horizon
//! time-series forecasting.
//!
//! The model runs a bank of parallel dilated depthwise convolution blocks
//! (conv → batch norm → ReLU) at two kernel scales over a last-value
//! normalized lookback window, fuses the block outputs with learned
//! per-channel weights, maps the fused features to the horizon with a
//! linear head, and adds a linear autoregressive branch. Training uses
//! Huber loss with Adam and validation-based early stopping.
//!
//! Layers:
//! - [`grid`] / [`kernels`] — numeric primitives (conv, BN, ReLU, affine)
//! - [`tape`] — reverse-mode autodiff over whole-array ops
//! - [`model`] — architecture assembly, init, checkpoints
//! - [`train`] — Huber loss, Adam, the training loop
//! - [`data`] — CSV ingestion, splits, standardization, windows, synthesis
//! - [`eval`] — metrics, evaluation, ablation grids, activation dumps
//! - [`profile`] — parameter/MAC counting and latency measurement

pub mod data;
pub mod error;
pub mod eval;
pub mod grid;
pub mod kernels;
pub mod model;
pub mod profile;
pub mod run;
pub mod scalar;
pub mod tape;
pub mod train;

pub use error::{Error, Result};
pub use grid::Grid3;
pub use scalar::Scalar;
