//! Full-batch gradient-descent training with read-only probes.
//!
//! One run is strictly sequential and deterministic. Probes never touch the
//! trajectory: the one-step-lookahead probe for the gradient-mean change
//! operates on a parameter copy.

use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::gradstats::{self, GSNR_EPS};
use crate::netcore::{
    batch_loss, forward, gd_step, per_sample_grads_with_losses, FreezeMask, MlpParams,
};
use crate::osgr::RunTrace;
use crate::synthdata::Dataset;

/// Which epochs get a test-loss evaluation.
#[derive(Debug, Clone)]
pub enum TestSchedule {
    Every,
    Epochs(BTreeSet<usize>),
}

impl TestSchedule {
    fn contains(&self, t: usize) -> bool {
        match self {
            TestSchedule::Every => true,
            TestSchedule::Epochs(set) => set.contains(&t),
        }
    }
}

/// Probe selection for a run.
#[derive(Debug, Clone)]
pub struct ProbeConfig {
    /// Average GSNR (overall and per layer).
    pub gsnr: bool,
    /// Mean p_same_sign over parameters.
    pub sign: bool,
    /// Gradient-mean-change/weight correlation and opposite-sign ratios,
    /// per layer, overall and for the top-|W| fraction.
    pub weight_dynamics: bool,
    /// Fraction of a layer's weights (by |W|) for the "top" variants.
    pub top_frac: f64,
    /// Track per-weight GSNR series for this weight layer (0-based), for
    /// feature-correlation bookkeeping.
    pub per_weight_gsnr_layer: Option<usize>,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            gsnr: true,
            sign: true,
            weight_dynamics: false,
            top_frac: 0.1,
            per_weight_gsnr_layer: None,
        }
    }
}

impl ProbeConfig {
    pub fn none() -> Self {
        Self {
            gsnr: false,
            sign: false,
            weight_dynamics: false,
            top_frac: 0.1,
            per_weight_gsnr_layer: None,
        }
    }
}

/// Configuration of one training run.
#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub epochs: usize,
    /// Learning rate; 0 is allowed and makes the run a fixed-parameter probe.
    pub learning_rate: f64,
    pub record_every: usize,
    /// When set, overrides `record_every` with an explicit epoch set.
    pub record_epochs: Option<BTreeSet<usize>>,
    pub freeze: FreezeMask,
    pub probes: ProbeConfig,
    pub test_schedule: TestSchedule,
}

impl TrainConfig {
    fn is_recorded(&self, t: usize) -> bool {
        match &self.record_epochs {
            Some(set) => set.contains(&t),
            None => t % self.record_every == 0,
        }
    }
}

/// Epoch-indexed probe outputs. Per-layer vectors are indexed by weight
/// layer (0-based); entries are NaN when the probe is disabled.
#[derive(Debug, Clone)]
pub struct ProbeSeries {
    pub epochs: Vec<usize>,
    pub train_loss: Vec<f64>,
    pub test_loss: Vec<f64>,
    pub avg_gsnr_all: Vec<f64>,
    /// avg_gsnr_layer[l][k]: average GSNR over layer l's parameters at the
    /// k-th recorded epoch.
    pub avg_gsnr_layer: Vec<Vec<f64>>,
    pub p_same_sign_mean: Vec<f64>,
    pub dgw_corr: Vec<Vec<f64>>,
    pub dgw_corr_top: Vec<Vec<f64>>,
    pub opp_sign: Vec<Vec<f64>>,
    pub opp_sign_top: Vec<Vec<f64>>,
    /// (layer, per-epoch GSNR of each weight entry of that layer).
    pub per_weight_gsnr: Option<(usize, Vec<Vec<f64>>)>,
    pub num_layers: usize,
}

impl ProbeSeries {
    fn new(num_layers: usize) -> Self {
        Self {
            epochs: Vec::new(),
            train_loss: Vec::new(),
            test_loss: Vec::new(),
            avg_gsnr_all: Vec::new(),
            avg_gsnr_layer: vec![Vec::new(); num_layers],
            p_same_sign_mean: Vec::new(),
            dgw_corr: vec![Vec::new(); num_layers],
            dgw_corr_top: vec![Vec::new(); num_layers],
            opp_sign: vec![Vec::new(); num_layers],
            opp_sign_top: vec![Vec::new(); num_layers],
            per_weight_gsnr: None,
            num_layers,
        }
    }

    /// Average-GSNR curve of one layer.
    pub fn gsnr_curve_layer(&self, layer: usize) -> &[f64] {
        &self.avg_gsnr_layer[layer]
    }

    /// Per-weight GSNR curves of the tracked layer, and the recorded-epoch
    /// index at which each weight's curve peaks.
    pub fn per_weight_gsnr_argmax(&self) -> Result<Vec<usize>> {
        let (_, series) = self
            .per_weight_gsnr
            .as_ref()
            .ok_or_else(|| Error::InvalidSpec("no per-weight GSNR series tracked".into()))?;
        if series.is_empty() {
            return Err(Error::Degenerate("empty GSNR series".into()));
        }
        let width = series[0].len();
        let mut argmax = vec![0usize; width];
        for (k, row) in series.iter().enumerate() {
            for (w, &v) in row.iter().enumerate() {
                if v > series[argmax[w]][w] {
                    argmax[w] = k;
                }
            }
        }
        Ok(argmax)
    }
}

/// Pearson correlation between the one-step change of the mean gradient of
/// layer `l`'s weights and the weights themselves at the current parameters.
///
/// The change is an exact one-step lookahead on a parameter copy: compute
/// g_D, take one GD step, recompute g_D, correlate the difference with W.
pub fn delta_gmean_weight_corr(
    params: &MlpParams,
    train: &Dataset,
    learning_rate: f64,
    layer: usize,
    top_frac: Option<f64>,
) -> Result<f64> {
    let (grads, _) = per_sample_grads_with_losses(params, train)?;
    let gm = grads.mean();
    dgw_with_mean(params, &gm, train, learning_rate, layer, top_frac, &FreezeMask::none(params.param_count()))
}

fn dgw_with_mean(
    params: &MlpParams,
    grad_mean: &[f64],
    train: &Dataset,
    learning_rate: f64,
    layer: usize,
    top_frac: Option<f64>,
    mask: &FreezeMask,
) -> Result<f64> {
    let wr = params.spec().weight_range(layer);
    if wr.len() < 3 {
        return Err(Error::InvalidSpec(format!(
            "layer {layer} has fewer than 3 weight entries"
        )));
    }
    let stepped = gd_step(params, grad_mean, learning_rate, mask)?;
    let (next_grads, _) = per_sample_grads_with_losses(&stepped, train)?;
    let next_mean = next_grads.mean();

    let flat = params.flatten();
    let weights: Vec<f64> = flat[wr.clone()].to_vec();
    let delta_g: Vec<f64> = wr.clone().map(|j| next_mean[j] - grad_mean[j]).collect();

    match top_frac {
        None => gradstats::pearson(&delta_g, &weights),
        Some(frac) => {
            let idx = top_indices_by_abs(&weights, frac)?;
            let w_sel: Vec<f64> = idx.iter().map(|&i| weights[i]).collect();
            let d_sel: Vec<f64> = idx.iter().map(|&i| delta_g[i]).collect();
            gradstats::pearson(&d_sel, &w_sel)
        }
    }
}

/// Fraction of layer `l`'s weight entries whose product with the gradient
/// mean is strictly negative. Zero products count as not-opposite.
pub fn opposite_sign_ratio(
    params: &MlpParams,
    grad_mean: &[f64],
    layer: usize,
    top_frac: Option<f64>,
) -> Result<f64> {
    let wr = params.spec().weight_range(layer);
    if wr.is_empty() {
        return Err(Error::InvalidSpec(format!("layer {layer} has no weights")));
    }
    if grad_mean.len() != params.param_count() {
        return Err(Error::ShapeMismatch("gradient length must equal P".into()));
    }
    let flat = params.flatten();
    let weights: Vec<f64> = flat[wr.clone()].to_vec();
    let grads: Vec<f64> = grad_mean[wr].to_vec();
    let indices: Vec<usize> = match top_frac {
        None => (0..weights.len()).collect(),
        Some(frac) => top_indices_by_abs(&weights, frac)?,
    };
    let opposite =
        indices.iter().filter(|&&i| weights[i] * grads[i] < 0.0).count();
    Ok(opposite as f64 / indices.len() as f64)
}

/// Indices of the ceil(frac * len) entries largest in absolute value.
fn top_indices_by_abs(values: &[f64], frac: f64) -> Result<Vec<usize>> {
    if !(0.0..=1.0).contains(&frac) || frac == 0.0 {
        return Err(Error::InvalidSpec("top fraction must lie in (0, 1]".into()));
    }
    let count = ((values.len() as f64 * frac).ceil() as usize).clamp(1, values.len());
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| {
        values[b].abs().partial_cmp(&values[a].abs()).unwrap().then(a.cmp(&b))
    });
    idx.truncate(count);
    idx.sort_unstable();
    Ok(idx)
}

/// Correlation of one hidden unit's activation with the regression target.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FeatureCorr {
    Value(f64),
    /// Zero activation variance (dead relu unit).
    Degenerate,
}

/// Pearson correlation of each unit of hidden layer `hidden` (1-based index
/// into the activation stack; 1 = first hidden layer) against the targets.
pub fn feature_target_correlation(
    params: &MlpParams,
    d: &Dataset,
    hidden: usize,
) -> Result<Vec<FeatureCorr>> {
    let y = d.values().map_err(|_| {
        Error::InvalidSpec("feature-target correlation applies to regression data".into())
    })?;
    if d.is_empty() {
        return Err(Error::Degenerate("empty dataset".into()));
    }
    if hidden == 0 || hidden >= params.spec().layer_dims.len() - 1 {
        return Err(Error::InvalidSpec(format!("layer {hidden} is not a hidden layer")));
    }
    let width = params.spec().layer_dims[hidden];
    let mut activations: Vec<Vec<f64>> = vec![Vec::with_capacity(d.len()); width];
    for i in 0..d.len() {
        let trace = forward(params, d.input(i))?;
        for (s, col) in activations.iter_mut().enumerate() {
            col.push(trace.layer_inputs[hidden][s]);
        }
    }
    Ok(activations
        .iter()
        .map(|col| match gradstats::pearson(col, y) {
            Ok(c) => FeatureCorr::Value(c),
            Err(_) => FeatureCorr::Degenerate,
        })
        .collect())
}

/// Run full-batch gradient descent with the configured probes.
///
/// Losses and probes are always evaluated before the step of the same epoch;
/// the returned trace covers epochs 0..=cfg.epochs (no step after the last
/// evaluation).
pub fn train_with_probes(
    params: &MlpParams,
    train: &Dataset,
    test: &Dataset,
    cfg: &TrainConfig,
) -> Result<(MlpParams, RunTrace, ProbeSeries)> {
    if cfg.record_every == 0 {
        return Err(Error::InvalidSpec("record_every must be positive".into()));
    }
    if cfg.learning_rate < 0.0 {
        return Err(Error::InvalidSpec("learning rate must be nonnegative".into()));
    }
    if cfg.learning_rate > 0.01 {
        eprintln!(
            "warning: learning rate {} is above 0.01; the small-step loss approximations degrade",
            cfg.learning_rate
        );
    }
    if cfg.learning_rate == 0.0 && cfg.probes.weight_dynamics {
        return Err(Error::Degenerate(
            "the gradient-mean-change probe is degenerate at learning rate 0".into(),
        ));
    }
    let spec = params.spec().clone();
    let num_layers = spec.num_layers();
    let p = spec.param_count();
    if cfg.freeze.len() != p {
        return Err(Error::ShapeMismatch("freeze mask length must equal P".into()));
    }

    let layer_subsets: Vec<Vec<usize>> =
        (0..num_layers).map(|l| spec.layer_range(l).collect()).collect();
    let all_params: Vec<usize> = (0..p).collect();

    let mut current = params.clone();
    let mut trace = RunTrace {
        run_index: 0,
        n: train.len(),
        n_test: test.len(),
        train_loss: Vec::with_capacity(cfg.epochs + 1),
        test_loss: vec![None; cfg.epochs + 1],
        moments: Vec::new(),
        avg_gsnr: Vec::new(),
    };
    let mut series = ProbeSeries::new(num_layers);
    if let Some(l) = cfg.probes.per_weight_gsnr_layer {
        series.per_weight_gsnr = Some((l, Vec::new()));
    }

    for t in 0..=cfg.epochs {
        let (grads, losses) = per_sample_grads_with_losses(&current, train)?;
        let train_loss = losses.iter().sum::<f64>() / losses.len() as f64;
        if !train_loss.is_finite() {
            return Err(Error::NonFinite(format!("train loss diverged at epoch {t}")));
        }
        trace.train_loss.push(train_loss);
        if cfg.test_schedule.contains(t) {
            let test_loss = batch_loss(&current, test)?;
            if !test_loss.is_finite() {
                return Err(Error::NonFinite(format!("test loss diverged at epoch {t}")));
            }
            trace.test_loss[t] = Some(test_loss);
        }
        let grad_mean = grads.mean();

        if cfg.is_recorded(t) {
            series.epochs.push(t);
            series.train_loss.push(train_loss);
            series.test_loss.push(trace.test_loss[t].unwrap_or(f64::NAN));

            let moments = gradstats::moments(&grads)?;
            let gsnr_vec = gradstats::gsnr(&moments, GSNR_EPS)?;
            if cfg.probes.gsnr {
                series
                    .avg_gsnr_all
                    .push(gradstats::avg_gsnr(&gsnr_vec, &all_params).unwrap_or(f64::NAN));
                for l in 0..num_layers {
                    series.avg_gsnr_layer[l].push(
                        gradstats::avg_gsnr(&gsnr_vec, &layer_subsets[l]).unwrap_or(f64::NAN),
                    );
                }
            } else {
                series.avg_gsnr_all.push(f64::NAN);
                for l in 0..num_layers {
                    series.avg_gsnr_layer[l].push(f64::NAN);
                }
            }
            if cfg.probes.sign {
                let signs = gradstats::same_sign_proportion(&grads)?;
                series.p_same_sign_mean.push(signs.mean_p_same_sign());
            } else {
                series.p_same_sign_mean.push(f64::NAN);
            }
            if cfg.probes.weight_dynamics {
                for l in 0..num_layers {
                    let corr = dgw_with_mean(
                        &current,
                        &grad_mean,
                        train,
                        cfg.learning_rate,
                        l,
                        None,
                        &cfg.freeze,
                    )
                    .unwrap_or(f64::NAN);
                    let corr_top = dgw_with_mean(
                        &current,
                        &grad_mean,
                        train,
                        cfg.learning_rate,
                        l,
                        Some(cfg.probes.top_frac),
                        &cfg.freeze,
                    )
                    .unwrap_or(f64::NAN);
                    series.dgw_corr[l].push(corr);
                    series.dgw_corr_top[l].push(corr_top);
                    series.opp_sign[l]
                        .push(opposite_sign_ratio(&current, &grad_mean, l, None)?);
                    series.opp_sign_top[l].push(opposite_sign_ratio(
                        &current,
                        &grad_mean,
                        l,
                        Some(cfg.probes.top_frac),
                    )?);
                }
            } else {
                for l in 0..num_layers {
                    series.dgw_corr[l].push(f64::NAN);
                    series.dgw_corr_top[l].push(f64::NAN);
                    series.opp_sign[l].push(f64::NAN);
                    series.opp_sign_top[l].push(f64::NAN);
                }
            }
            if let Some((l, rows)) = &mut series.per_weight_gsnr {
                let wr = spec.weight_range(*l);
                rows.push(wr.map(|j| gsnr_vec.r[j]).collect());
            }
            let avg_all = gradstats::avg_gsnr(&gsnr_vec, &all_params).unwrap_or(f64::NAN);
            trace.avg_gsnr.push((t, avg_all));
            trace.moments.push((t, moments));
        }

        if t < cfg.epochs && cfg.learning_rate > 0.0 {
            current = gd_step(&current, &grad_mean, cfg.learning_rate, &cfg.freeze)?;
        }
    }
    Ok((current, trace, series))
}
