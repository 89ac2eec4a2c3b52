//! Balanced Adam with a single tied momentum parameter, a small experiment
//! harness for sweeping that parameter, and the refresh-count rule that picks
//! it from the effective learning horizon of a run.
//!
//! Module map:
//!
//! - [`optim`]: the one-clock Adam/AdamW update on flat parameter vectors.
//! - [`schedule`]: linear warmup followed by cosine decay.
//! - [`tasks`] and [`harness`]: analytic-gradient toy tasks, the training
//!   loop, and beta sweeps with top-k seed refinement.
//! - [`horizon`]: early stopping and the `T_ES` horizon estimate.
//! - [`betagrid`]: the log-uniform beta grid, refresh rule, projection and
//!   stability intervals.
//! - [`metrics`]: relative gaps, CVaR and the `R0` calibration sweep.
//! - [`perturb`]: Monte Carlo robustness of the rule to horizon noise.
//! - [`io`] and [`report`]: on-disk formats and table rendering.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod betagrid;
pub mod error;
pub mod harness;
pub mod horizon;
pub mod io;
pub mod metrics;
pub mod optim;
pub mod perturb;
pub mod report;
pub mod schedule;
pub mod tasks;

pub use error::{Error, Result};
