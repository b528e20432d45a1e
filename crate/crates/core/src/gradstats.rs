//! Per-parameter statistics of a per-sample gradient matrix: moments, GSNR,
//! sign consistency, and the Pearson correlation used throughout the probes.
//!
//! Variance is population variance (divide by n) everywhere; this keeps the
//! variance-of-the-mean relation and the two OSGR forms algebraically exact
//! under one convention.

use crate::error::{Error, Result};
use crate::netcore::GradMatrix;

/// Default variance floor for GSNR.
pub const GSNR_EPS: f64 = 1e-20;

/// Column mean and population variance of a gradient matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct GradMoments {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
    pub n: usize,
}

/// Per-parameter GSNR with the variance-floor bookkeeping.
#[derive(Debug, Clone)]
pub struct GsnrVector {
    pub r: Vec<f64>,
    /// Parameters whose variance was below the floor.
    pub floored: Vec<bool>,
}

impl GsnrVector {
    pub fn floored_count(&self) -> usize {
        self.floored.iter().filter(|&&f| f).count()
    }
}

/// Per-parameter gradient sign counts over the samples.
#[derive(Debug, Clone)]
pub struct SignStats {
    /// Majority-sign fraction among the signed samples per parameter; NaN
    /// for a parameter whose gradient is zero on every sample.
    pub p_same_sign: Vec<f64>,
    pub positive_count: Vec<usize>,
    pub negative_count: Vec<usize>,
    pub zero_count: Vec<usize>,
}

impl SignStats {
    /// Mean over parameters that carry sign information.
    pub fn mean_p_same_sign(&self) -> f64 {
        let defined: Vec<f64> =
            self.p_same_sign.iter().copied().filter(|p| !p.is_nan()).collect();
        if defined.is_empty() {
            return f64::NAN;
        }
        defined.iter().sum::<f64>() / defined.len() as f64
    }
}

/// Column mean and population variance of the per-sample gradients.
pub fn moments(g: &GradMatrix) -> Result<GradMoments> {
    let n = g.n();
    if n < 2 {
        return Err(Error::Degenerate("gradient moments need at least 2 samples".into()));
    }
    let p = g.param_count();
    let mean = g.mean();
    let mut var = vec![0.0; p];
    for i in 0..n {
        let row = g.row(i);
        for j in 0..p {
            let d = row[j] - mean[j];
            var[j] += d * d;
        }
    }
    let inv = 1.0 / n as f64;
    for v in &mut var {
        *v *= inv;
    }
    Ok(GradMoments { mean, var, n })
}

/// GSNR per parameter: mean^2 / max(var, eps), flagging floored variances.
pub fn gsnr(m: &GradMoments, eps: f64) -> Result<GsnrVector> {
    if eps <= 0.0 {
        return Err(Error::InvalidSpec("gsnr variance floor must be positive".into()));
    }
    let mut r = Vec::with_capacity(m.mean.len());
    let mut floored = Vec::with_capacity(m.mean.len());
    for (&mean, &var) in m.mean.iter().zip(&m.var) {
        let f = var < eps;
        r.push(mean * mean / var.max(eps));
        floored.push(f);
    }
    Ok(GsnrVector { r, floored })
}

/// Arithmetic mean of GSNR over `subset`, excluding floored parameters.
pub fn avg_gsnr(g: &GsnrVector, subset: &[usize]) -> Result<f64> {
    if subset.is_empty() {
        return Err(Error::Degenerate("avg_gsnr over an empty parameter subset".into()));
    }
    let mut sum = 0.0;
    let mut count = 0usize;
    for &j in subset {
        if !g.floored[j] {
            sum += g.r[j];
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::Degenerate(
            "every parameter in the subset has floored variance".into(),
        ));
    }
    Ok(sum / count as f64)
}

/// Per-parameter proportion of samples sharing the majority gradient sign.
/// Exact zeros count toward neither sign.
pub fn same_sign_proportion(g: &GradMatrix) -> Result<SignStats> {
    let n = g.n();
    if n == 0 {
        return Err(Error::Degenerate("sign statistics of an empty matrix".into()));
    }
    let p = g.param_count();
    let mut positive = vec![0usize; p];
    let mut negative = vec![0usize; p];
    for i in 0..n {
        let row = g.row(i);
        for j in 0..p {
            if row[j] > 0.0 {
                positive[j] += 1;
            } else if row[j] < 0.0 {
                negative[j] += 1;
            }
        }
    }
    let zero: Vec<usize> = (0..p).map(|j| n - positive[j] - negative[j]).collect();
    // majority fraction among samples with a signed gradient; a parameter
    // whose gradient vanishes on every sample carries no sign information
    let p_same_sign = (0..p)
        .map(|j| {
            let signed = positive[j] + negative[j];
            if signed == 0 {
                f64::NAN
            } else {
                positive[j].max(negative[j]) as f64 / signed as f64
            }
        })
        .collect();
    Ok(SignStats { p_same_sign, positive_count: positive, negative_count: negative, zero_count: zero })
}

/// Product-moment correlation; errors on degenerate input instead of
/// returning NaN.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::ShapeMismatch("pearson inputs differ in length".into()));
    }
    if x.len() < 2 {
        return Err(Error::Degenerate("pearson needs at least 2 points".into()));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    let mut sxy = 0.0;
    for (&a, &b) in x.iter().zip(y) {
        let dx = a - mx;
        let dy = b - my;
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::Degenerate("pearson input has zero variance".into()));
    }
    Ok(sxy / (sxx * syy).sqrt())
}
