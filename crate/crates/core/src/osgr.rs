//! One-step generalization ratio (OSGR).
//!
//! Two routes to the same number: the definition route (ratio of summed
//! one-step test- and train-loss deltas over M runs) and the gradient-moment
//! route, in both its direct form and its GSNR-weighted form. The two
//! moment forms are the same algebra rearranged and must agree to near
//! machine precision; the weighted form is computed with the per-parameter
//! factor (r_j + 1/n) expressed as E(g_D^2)/rho^2 so the identity survives
//! sampling noise (a moment estimate of g~^2 can go negative, the ratio of
//! the two nonnegative estimates cannot).

use crate::error::{Error, Result};
use crate::gradstats::GradMoments;

/// Losses and gradient moments of one training run.
#[derive(Debug, Clone)]
pub struct RunTrace {
    pub run_index: usize,
    pub n: usize,
    pub n_test: usize,
    /// Training loss at every epoch, recorded before the step.
    pub train_loss: Vec<f64>,
    /// Test loss per epoch; `None` where evaluation was skipped.
    pub test_loss: Vec<Option<f64>>,
    /// (epoch, moments on the training set) at recorded epochs.
    pub moments: Vec<(usize, GradMoments)>,
    /// Average GSNR over all parameters at the recorded epochs.
    pub avg_gsnr: Vec<(usize, f64)>,
}

impl RunTrace {
    pub fn test_loss_at(&self, t: usize) -> Result<f64> {
        self.test_loss
            .get(t)
            .copied()
            .flatten()
            .ok_or_else(|| Error::ShapeMismatch(format!("no test loss recorded at epoch {t}")))
    }

    pub fn moments_at(&self, t: usize) -> Result<&GradMoments> {
        self.moments
            .iter()
            .find(|(e, _)| *e == t)
            .map(|(_, m)| m)
            .ok_or_else(|| Error::ShapeMismatch(format!("no moments recorded at epoch {t}")))
    }
}

/// Gradient-moment averages pooled over the M runs of one setting.
#[derive(Debug, Clone)]
pub struct MomentEnsemble {
    /// Per parameter: mean over runs of the squared mean gradient.
    pub e_g2: Vec<f64>,
    /// Per parameter: mean over runs of the per-sample gradient variance.
    pub rho2: Vec<f64>,
    pub m: usize,
    pub n: usize,
}

/// One (setting, epoch) comparison of the definition and moment routes.
#[derive(Debug, Clone)]
pub struct OsgrPoint {
    pub setting_id: String,
    pub epoch: usize,
    pub n: usize,
    pub lhs: f64,
    pub rhs19: f64,
    pub rhs22: f64,
}

/// OSGR by definition at epoch `t`: summed test-loss deltas over summed
/// train-loss deltas across the M runs.
pub fn osgr_lhs(traces: &[RunTrace], t: usize) -> Result<f64> {
    if traces.len() < 2 {
        return Err(Error::InvalidSpec("osgr_lhs needs at least 2 runs".into()));
    }
    let mut num = 0.0;
    let mut den = 0.0;
    for trace in traces {
        let train_t = *trace
            .train_loss
            .get(t)
            .ok_or_else(|| Error::ShapeMismatch(format!("run has no epoch {t}")))?;
        let train_t1 = *trace
            .train_loss
            .get(t + 1)
            .ok_or_else(|| Error::ShapeMismatch(format!("run has no epoch {}", t + 1)))?;
        num += trace.test_loss_at(t + 1)? - trace.test_loss_at(t)?;
        den += train_t1 - train_t;
    }
    if den == 0.0 {
        return Err(Error::Stalled(format!(
            "summed train-loss delta at epoch {t} is exactly zero"
        )));
    }
    Ok(num / den)
}

/// Average the per-run moments into the ensemble estimates: mean of squared
/// mean gradients and mean of per-sample variances.
pub fn ensemble_moments(per_run: &[&GradMoments]) -> Result<MomentEnsemble> {
    if per_run.len() < 2 {
        return Err(Error::InvalidSpec("ensemble needs at least 2 runs".into()));
    }
    let p = per_run[0].mean.len();
    let n = per_run[0].n;
    if per_run.iter().any(|m| m.mean.len() != p || m.n != n) {
        return Err(Error::ShapeMismatch("runs disagree on P or n".into()));
    }
    let m = per_run.len();
    let mut e_g2 = vec![0.0; p];
    let mut rho2 = vec![0.0; p];
    for run in per_run {
        for j in 0..p {
            e_g2[j] += run.mean[j] * run.mean[j];
            rho2[j] += run.var[j];
        }
    }
    let inv = 1.0 / m as f64;
    for j in 0..p {
        e_g2[j] *= inv;
        rho2[j] *= inv;
    }
    Ok(MomentEnsemble { e_g2, rho2, m, n })
}

/// Direct moment form: 1 - sum(rho2) / (n * sum(E g_D^2)).
pub fn osgr_rhs19(e: &MomentEnsemble) -> Result<f64> {
    let total_g2: f64 = e.e_g2.iter().sum();
    if total_g2 <= 0.0 {
        return Err(Error::Degenerate("sum of squared mean gradients is zero".into()));
    }
    let total_rho2: f64 = e.rho2.iter().sum();
    Ok(1.0 - total_rho2 / (e.n as f64 * total_g2))
}

/// GSNR-weighted form: 1 - (1/n) sum_j W_j / (r_j + 1/n), with
/// W_j = E(g_D,j^2)/sum E(g_D^2) and (r_j + 1/n) = E(g_D,j^2)/rho2_j.
/// Zero-variance parameters contribute zero.
pub fn osgr_rhs22(e: &MomentEnsemble) -> Result<f64> {
    let total_g2: f64 = e.e_g2.iter().sum();
    if total_g2 <= 0.0 {
        return Err(Error::Degenerate("sum of squared mean gradients is zero".into()));
    }
    let mut weighted = 0.0;
    for (&g2, &rho2) in e.e_g2.iter().zip(&e.rho2) {
        if rho2 == 0.0 || g2 == 0.0 {
            continue;
        }
        let w = g2 / total_g2;
        // 1/(r_j + 1/n) = rho2 / E(g_D^2)
        weighted += w * (rho2 / g2);
    }
    Ok(1.0 - weighted / e.n as f64)
}

/// Expected one-step generalization-gap increment:
/// lr * sum_j rho2_j / n (the variance-of-the-mean identity folded in).
pub fn gap_increment_expectation(rho2: &[f64], n: usize, learning_rate: f64) -> Result<f64> {
    if learning_rate <= 0.0 {
        return Err(Error::InvalidSpec("learning rate must be positive".into()));
    }
    if n == 0 {
        return Err(Error::InvalidSpec("n must be positive".into()));
    }
    Ok(learning_rate * rho2.iter().sum::<f64>() / n as f64)
}
