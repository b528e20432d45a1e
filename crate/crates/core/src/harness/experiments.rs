//! GSNR-curve and training-dynamics experiment recipes.

use crate::dynamics::{
    feature_target_correlation, train_with_probes, FeatureCorr, ProbeConfig, ProbeSeries,
    TestSchedule, TrainConfig,
};
use crate::error::{Error, Result};
use crate::harness::config::ExperimentConfig;
use crate::netcore::{gd_step, per_sample_grads_with_losses, FreezeMask, MlpParams};
use crate::seed::sub_seed;
use crate::synthdata::{corrupt_labels, gen_dataset, Dataset, TaskKind};

/// One named arm of a paired experiment.
#[derive(Debug)]
pub struct ArmResult {
    pub name: String,
    pub series: ProbeSeries,
}

/// Table-1-style record for one hidden unit.
#[derive(Debug, Clone)]
pub struct FeatureCorrRecord {
    pub unit: usize,
    pub c_t0: FeatureCorr,
    pub t_max: usize,
    pub c_tmax: FeatureCorr,
}

#[derive(Debug)]
pub struct DynamicsResult {
    pub series: ProbeSeries,
    /// Present for regression runs only.
    pub features: Vec<FeatureCorrRecord>,
}

fn base_train_config(cfg: &ExperimentConfig, param_count: usize) -> TrainConfig {
    let train = cfg.train.as_ref().unwrap();
    TrainConfig {
        epochs: train.epochs,
        learning_rate: train.learning_rate,
        record_every: train.record_every,
        record_epochs: None,
        freeze: FreezeMask::none(param_count),
        probes: ProbeConfig::default(),
        test_schedule: TestSchedule::Every,
    }
}

fn pair_datasets(cfg: &ExperimentConfig) -> Result<(Dataset, Dataset)> {
    let pair = cfg.pair.as_ref().unwrap();
    let mut section = cfg.data.clone();
    section.n = pair.n_train;
    let train = gen_dataset(&section.to_spec()?, sub_seed(cfg.seed, 0))?;
    section.n = pair.n_test;
    let test = gen_dataset(&section.to_spec()?, sub_seed(cfg.seed, 1))?;
    Ok((train, test))
}

/// Matched-pair GSNR experiment: frozen vs non-frozen first layer for
/// regression, real vs randomized labels for classification. Both arms
/// share one initialization and (for classification) one input sample.
pub fn run_gsnr_experiment(cfg: &ExperimentConfig) -> Result<Vec<ArmResult>> {
    cfg.validate()?;
    if cfg.kind != super::ExperimentKind::GsnrCurve {
        return Err(Error::Config("config kind is not gsnr_curve".into()));
    }
    let (train, test) = pair_datasets(cfg)?;
    let model = cfg.model.as_ref().unwrap();
    let mlp_spec = model.to_spec(&cfg.data)?;
    let params = model.init(&cfg.data, sub_seed(cfg.seed, 2))?;
    let base = base_train_config(cfg, mlp_spec.param_count());

    let mut arms = Vec::new();
    match cfg.data.task {
        TaskKind::Regression => {
            let (_, _, nonfrozen) = train_with_probes(&params, &train, &test, &base)?;
            arms.push(ArmResult { name: "nonfrozen".into(), series: nonfrozen });
            let mut frozen_cfg = base;
            frozen_cfg.freeze = FreezeMask::freeze_layer(&mlp_spec, 0);
            let (_, _, frozen) = train_with_probes(&params, &train, &test, &frozen_cfg)?;
            arms.push(ArmResult { name: "frozen".into(), series: frozen });
        }
        TaskKind::Classification => {
            let p_random = cfg.pair.as_ref().unwrap().p_random;
            let (_, _, real) = train_with_probes(&params, &train, &test, &base)?;
            arms.push(ArmResult { name: "real".into(), series: real });
            let random_train = corrupt_labels(&train, p_random, sub_seed(cfg.seed, 3))?;
            let (_, _, random) = train_with_probes(&params, &random_train, &test, &base)?;
            arms.push(ArmResult { name: "random".into(), series: random });
        }
    }
    Ok(arms)
}

/// Replay the deterministic GD trajectory and snapshot parameters at the
/// requested epochs (same arithmetic path as the training loop).
fn params_at_epochs(
    params: &MlpParams,
    train: &Dataset,
    cfg: &TrainConfig,
    epochs: &[usize],
) -> Result<Vec<(usize, MlpParams)>> {
    let max_epoch = epochs.iter().copied().max().unwrap_or(0);
    let mut snapshots = Vec::new();
    let mut current = params.clone();
    for t in 0..=max_epoch {
        if epochs.contains(&t) {
            snapshots.push((t, current.clone()));
        }
        if t < max_epoch && cfg.learning_rate > 0.0 {
            let (grads, _) = per_sample_grads_with_losses(&current, train)?;
            current = gd_step(&current, &grads.mean(), cfg.learning_rate, &cfg.freeze)?;
        }
    }
    Ok(snapshots)
}

/// Full dynamics run: weight-dynamics probes every recorded epoch plus, for
/// regression, the feature-target correlation records at the start of
/// training and at each unit's GSNR-curve peak.
pub fn run_dynamics_experiment(cfg: &ExperimentConfig) -> Result<DynamicsResult> {
    cfg.validate()?;
    if cfg.kind != super::ExperimentKind::Dynamics {
        return Err(Error::Config("config kind is not dynamics".into()));
    }
    let (train, test) = pair_datasets(cfg)?;
    let model = cfg.model.as_ref().unwrap();
    let mlp_spec = model.to_spec(&cfg.data)?;
    let params = model.init(&cfg.data, sub_seed(cfg.seed, 2))?;
    let last_layer = mlp_spec.num_layers() - 1;

    let mut run_cfg = base_train_config(cfg, mlp_spec.param_count());
    run_cfg.probes = ProbeConfig {
        weight_dynamics: true,
        per_weight_gsnr_layer: Some(last_layer),
        ..ProbeConfig::default()
    };
    let (_, _, series) = train_with_probes(&params, &train, &test, &run_cfg)?;

    let features = if cfg.data.task == TaskKind::Regression {
        feature_records(&params, &train, &test, &run_cfg, &series, last_layer)?
    } else {
        Vec::new()
    };
    Ok(DynamicsResult { series, features })
}

/// Correlations use the test set (the larger sample); t_max of a hidden unit
/// is the epoch where its outgoing weight's GSNR curve peaks.
fn feature_records(
    params: &MlpParams,
    train: &Dataset,
    test: &Dataset,
    run_cfg: &TrainConfig,
    series: &ProbeSeries,
    last_layer: usize,
) -> Result<Vec<FeatureCorrRecord>> {
    let hidden = last_layer; // activation index of the last hidden layer
    let c_t0 = feature_target_correlation(params, test, hidden)?;
    let argmax = series.per_weight_gsnr_argmax()?;
    let t_max_epochs: Vec<usize> = argmax.iter().map(|&k| series.epochs[k]).collect();
    let mut needed: Vec<usize> = t_max_epochs.clone();
    needed.sort_unstable();
    needed.dedup();
    let snapshots = params_at_epochs(params, train, run_cfg, &needed)?;
    let corr_at = |epoch: usize| -> Result<Vec<FeatureCorr>> {
        let (_, p) = snapshots
            .iter()
            .find(|(t, _)| *t == epoch)
            .ok_or_else(|| Error::ShapeMismatch(format!("no snapshot at epoch {epoch}")))?;
        feature_target_correlation(p, test, hidden)
    };
    let mut records = Vec::new();
    for (unit, &t_max) in t_max_epochs.iter().enumerate() {
        records.push(FeatureCorrRecord {
            unit,
            c_t0: c_t0[unit],
            t_max,
            c_tmax: corr_at(t_max)?[unit],
        });
    }
    Ok(records)
}
