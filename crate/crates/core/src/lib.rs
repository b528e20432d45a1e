//! Measurement toolkit for gradient signal-to-noise ratio (GSNR) and the
//! one-step generalization ratio (OSGR) of small fully connected networks
//! trained with full-batch gradient descent.
//!
//! The crate is organized around the measurement pipeline:
//!
//! - [`synthdata`]: deterministic synthetic datasets (a 2-d product
//!   regression task and a teacher-labeled classification task), label
//!   corruption and multi-training-set bundles.
//! - [`netcore`]: the MLP itself — forward pass, exact per-sample gradients
//!   via reverse mode, full-batch loss, one GD step, and a central-difference
//!   gradient oracle.
//! - [`gradstats`]: per-parameter gradient moments, GSNR, sign-consistency
//!   statistics and Pearson correlation.
//! - [`osgr`]: OSGR by definition (loss-delta ratio over many runs) and OSGR
//!   predicted from gradient moments, in both algebraic forms.
//! - [`dynamics`]: the training loop with read-only probes (GSNR curves,
//!   gradient-mean/weight correlation, opposite-sign ratios, feature-target
//!   correlations).
//! - [`harness`]: experiment orchestration, config parsing, CSV/JSON output
//!   and the Monte Carlo identity checks.

pub mod dynamics;
pub mod error;
pub mod gradstats;
pub mod harness;
pub mod netcore;
pub mod osgr;
pub mod seed;
pub mod synthdata;

pub use error::{Error, Result};
