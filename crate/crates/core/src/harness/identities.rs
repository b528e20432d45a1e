//! Monte Carlo checks of the two moment identities underlying the OSGR
//! prediction: the variance-of-the-mean relation (the per-sample gradient
//! variance divided by n equals the variance of the dataset-mean gradient)
//! and the expected one-step generalization-gap increment.
//!
//! The per-sample variance is estimated once on a large held-out dataset so
//! the estimator's own noise stays out of the quantity under test.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::netcore::{
    batch_loss, gd_step, init_params, per_sample_grads_with_losses, FreezeMask, MlpSpec,
};
use crate::seed::sub_seed;
use crate::synthdata::{gen_dataset, DataSpec};

/// Acceptance threshold for the variance relation.
pub const VARIANCE_RELATION_TOL: f64 = 0.05;
/// Acceptance threshold for the gap-increment expectation.
pub const GAP_INCREMENT_TOL: f64 = 0.10;
/// Held-out dataset size multiplier for estimating the per-sample variance.
const RHO2_DATASET_FACTOR: usize = 100;
/// Floor on the held-out dataset size so the variance estimate stays tight
/// even for tiny n.
const RHO2_DATASET_MIN: usize = 20_000;

#[derive(Debug, Clone, Serialize)]
pub struct VarianceCheck {
    pub n: usize,
    pub trials: usize,
    /// Sum over parameters of the Monte Carlo variance of the mean gradient.
    pub measured_sum: f64,
    /// Sum over parameters of rho2_hat / n.
    pub predicted_sum: f64,
    pub relative_error: f64,
    pub tolerance: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct GapCheck {
    pub n: usize,
    pub trials: usize,
    pub learning_rate: f64,
    /// Monte Carlo mean of the one-step gap increment.
    pub measured_mean: f64,
    /// lr * sum_j rho2_hat_j / n.
    pub predicted: f64,
    pub relative_error: f64,
    pub tolerance: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct IdentityReport {
    pub variance_relation: VarianceCheck,
    pub gap_increment: GapCheck,
}

impl IdentityReport {
    pub fn all_pass(&self) -> bool {
        self.variance_relation.pass && self.gap_increment.pass
    }
}

/// Per-parameter per-sample gradient variance estimated on a dataset of
/// size `RHO2_DATASET_FACTOR * n`.
fn rho2_hat(
    params: &crate::netcore::MlpParams,
    spec: &DataSpec,
    n: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    let mega_n = (RHO2_DATASET_FACTOR * n).max(RHO2_DATASET_MIN);
    let mega = gen_dataset(&spec.with_n(mega_n), seed)?;
    let (grads, _) = per_sample_grads_with_losses(params, &mega)?;
    Ok(crate::gradstats::moments(&grads)?.var)
}

/// Variance relation check: variance across fresh datasets of the mean
/// gradient, against the per-sample variance divided by n.
pub fn check_variance_relation(
    data_spec: &DataSpec,
    mlp_spec: &MlpSpec,
    n: usize,
    trials: usize,
    seed: u64,
) -> Result<VarianceCheck> {
    if trials < 100 {
        return Err(Error::InvalidSpec("variance check needs at least 100 trials".into()));
    }
    let params = init_params(mlp_spec, sub_seed(seed, 0));
    let rho2 = rho2_hat(&params, data_spec, n, sub_seed(seed, 1))?;
    let p = params.param_count();

    let means: Vec<Vec<f64>> = (0..trials)
        .into_par_iter()
        .map(|k| {
            let d = gen_dataset(&data_spec.with_n(n), sub_seed(seed, 100 + k as u64))?;
            let (grads, _) = per_sample_grads_with_losses(&params, &d)?;
            Ok(grads.mean())
        })
        .collect::<Result<Vec<_>>>()?;

    let mut grand = vec![0.0; p];
    for m in &means {
        for j in 0..p {
            grand[j] += m[j];
        }
    }
    for g in &mut grand {
        *g /= trials as f64;
    }
    let mut measured_sum = 0.0;
    for m in &means {
        for j in 0..p {
            let d = m[j] - grand[j];
            measured_sum += d * d;
        }
    }
    measured_sum /= trials as f64;

    let predicted_sum: f64 = rho2.iter().sum::<f64>() / n as f64;
    let relative_error = (measured_sum - predicted_sum).abs() / predicted_sum;
    Ok(VarianceCheck {
        n,
        trials,
        measured_sum,
        predicted_sum,
        relative_error,
        tolerance: VARIANCE_RELATION_TOL,
        pass: relative_error <= VARIANCE_RELATION_TOL,
    })
}

/// Gap-increment check: mean over trials of (train-loss decrease minus
/// test-loss decrease) after one GD step on a fresh training set, against
/// lr * sum rho2 / n.
pub fn check_gap_increment(
    data_spec: &DataSpec,
    mlp_spec: &MlpSpec,
    n: usize,
    learning_rate: f64,
    trials: usize,
    seed: u64,
) -> Result<GapCheck> {
    if trials < 100 {
        return Err(Error::InvalidSpec("gap check needs at least 100 trials".into()));
    }
    if learning_rate <= 0.0 || learning_rate > 1e-3 {
        return Err(Error::InvalidSpec(
            "gap check learning rate must lie in (0, 1e-3]".into(),
        ));
    }
    let params = init_params(mlp_spec, sub_seed(seed, 0));
    let rho2 = rho2_hat(&params, data_spec, n, sub_seed(seed, 1))?;
    let mask = FreezeMask::none(params.param_count());

    let increments: Vec<f64> = (0..trials)
        .into_par_iter()
        .map(|k| {
            let train = gen_dataset(&data_spec.with_n(n), sub_seed(seed, 10_000 + 2 * k as u64))?;
            let test =
                gen_dataset(&data_spec.with_n(n), sub_seed(seed, 10_001 + 2 * k as u64))?;
            let (grads, losses) = per_sample_grads_with_losses(&params, &train)?;
            let train_before = losses.iter().sum::<f64>() / losses.len() as f64;
            let test_before = batch_loss(&params, &test)?;
            let stepped = gd_step(&params, &grads.mean(), learning_rate, &mask)?;
            let train_after = batch_loss(&stepped, &train)?;
            let test_after = batch_loss(&stepped, &test)?;
            // decreases: before minus after
            Ok((train_before - train_after) - (test_before - test_after))
        })
        .collect::<Result<Vec<_>>>()?;

    let measured_mean = increments.iter().sum::<f64>() / trials as f64;
    let predicted = learning_rate * rho2.iter().sum::<f64>() / n as f64;
    let relative_error = (measured_mean - predicted).abs() / predicted;
    Ok(GapCheck {
        n,
        trials,
        learning_rate,
        measured_mean,
        predicted,
        relative_error,
        tolerance: GAP_INCREMENT_TOL,
        pass: relative_error <= GAP_INCREMENT_TOL,
    })
}
