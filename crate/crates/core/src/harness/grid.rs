//! The multi-training-set OSGR verification grid.
//!
//! For every grid setting (n, width, noise level) we draw M training sets
//! and one test set, train M copies of one shared initialization with
//! full-batch GD, and compare OSGR-by-definition against the
//! gradient-moment prediction at every recorded epoch. Cross-setting
//! Pearson correlation and a least-squares fit are computed per epoch.

use std::collections::BTreeSet;

use rayon::prelude::*;

use crate::dynamics::{train_with_probes, ProbeConfig, TestSchedule, TrainConfig};
use crate::error::{Error, Result};
use crate::harness::config::ExperimentConfig;
use crate::harness::output::fit_line;
use crate::netcore::FreezeMask;
use crate::osgr::{ensemble_moments, osgr_lhs, osgr_rhs19, osgr_rhs22, OsgrPoint, RunTrace};
use crate::seed::sub_seed;
use crate::synthdata::{corrupt_labels, split_bundle, DataSpec, TaskKind};

/// Cross-setting agreement at one epoch.
#[derive(Debug, Clone)]
pub struct EpochFit {
    pub epoch: usize,
    pub pearson: f64,
    pub slope: f64,
    pub intercept: f64,
    pub n_points: usize,
}

#[derive(Debug, Clone)]
pub struct GridResult {
    pub points: Vec<OsgrPoint>,
    pub fits: Vec<EpochFit>,
}

/// Recorded-epoch schedule: every epoch through 50, then every 10. Only
/// epochs with a successor inside the horizon yield an OSGR row.
pub fn osgr_schedule(epochs: usize) -> BTreeSet<usize> {
    let mut set = BTreeSet::new();
    for t in 0..epochs {
        if t <= 50 || t % 10 == 0 {
            set.insert(t);
        }
    }
    set
}

/// One grid setting resolved to concrete values.
#[derive(Debug, Clone)]
struct Setting {
    id: String,
    n: usize,
    width: usize,
    /// eta for regression, p_random for classification.
    noise: f64,
}

fn settings_of(cfg: &ExperimentConfig) -> Vec<Setting> {
    let grid = cfg.grid.as_ref().expect("validated");
    let noise_axis = match cfg.data.task {
        TaskKind::Regression => &grid.noise,
        TaskKind::Classification => &grid.p_random,
    };
    let mut settings = Vec::new();
    for &n in &grid.n {
        for &width in &grid.widths {
            for &noise in noise_axis {
                let id = match cfg.data.task {
                    TaskKind::Regression => format!("n{n}_w{width}_eta{noise}"),
                    TaskKind::Classification => format!("n{n}_w{width}_p{noise}"),
                };
                settings.push(Setting { id, n, width, noise });
            }
        }
    }
    settings
}

fn setting_data_spec(cfg: &ExperimentConfig, s: &Setting) -> Result<DataSpec> {
    match cfg.data.task {
        TaskKind::Regression => DataSpec::regression(s.n, s.noise),
        TaskKind::Classification => {
            let mut section = cfg.data.clone();
            section.n = s.n;
            section.to_spec()
        }
    }
}

/// Run the full grid and aggregate per-epoch cross-setting fits.
pub fn run_osgr_grid(cfg: &ExperimentConfig) -> Result<GridResult> {
    cfg.validate()?;
    let grid = cfg
        .grid
        .as_ref()
        .ok_or_else(|| Error::Config("osgr_verify needs a [grid] section".into()))?;
    let train_section = cfg.train.as_ref().unwrap();
    let model = cfg.model.as_ref().unwrap();
    let recorded = osgr_schedule(train_section.epochs);
    let mut eval_epochs: BTreeSet<usize> = recorded.clone();
    eval_epochs.extend(recorded.iter().map(|t| t + 1));

    let mut points = Vec::new();
    for (idx, setting) in settings_of(cfg).iter().enumerate() {
        let setting_seed = sub_seed(cfg.seed, idx as u64);
        let data_spec = setting_data_spec(cfg, setting)?;
        let mut bundle =
            split_bundle(&data_spec, grid.m, setting.n, grid.n_test, sub_seed(setting_seed, 0))?;
        if cfg.data.task == TaskKind::Classification && setting.noise > 0.0 {
            // corruption is part of the sampled distribution: train and test alike
            for (m, set) in bundle.train_sets.iter_mut().enumerate() {
                *set = corrupt_labels(set, setting.noise, sub_seed(setting_seed, 10 + m as u64))?;
            }
            bundle.test_set = corrupt_labels(
                &bundle.test_set,
                setting.noise,
                sub_seed(setting_seed, 10 + grid.m as u64),
            )?;
        }

        let model_w = model.with_width(setting.width);
        let mlp_spec = model_w.to_spec(&cfg.data)?;
        let shared_init = model_w.init(&cfg.data, sub_seed(setting_seed, 1))?;
        let run_cfg = TrainConfig {
            epochs: train_section.epochs,
            learning_rate: train_section.learning_rate,
            record_every: 1,
            record_epochs: Some(recorded.clone()),
            freeze: FreezeMask::none(mlp_spec.param_count()),
            probes: ProbeConfig::none(),
            test_schedule: TestSchedule::Epochs(eval_epochs.clone()),
        };

        let traces: Vec<RunTrace> = bundle
            .train_sets
            .par_iter()
            .map(|train| {
                train_with_probes(&shared_init, train, &bundle.test_set, &run_cfg)
                    .map(|(_, trace, _)| trace)
            })
            .collect::<Result<Vec<_>>>()
            .map_err(|e| match e {
                Error::Stalled(msg) => Error::Stalled(format!("setting {}: {msg}", setting.id)),
                other => other,
            })?;

        for &t in &recorded {
            let lhs = osgr_lhs(&traces, t).map_err(|e| match e {
                Error::Stalled(msg) => Error::Stalled(format!("setting {}: {msg}", setting.id)),
                other => other,
            })?;
            let per_run: Vec<_> =
                traces.iter().map(|tr| tr.moments_at(t)).collect::<Result<Vec<_>>>()?;
            let ensemble = ensemble_moments(&per_run)?;
            let rhs19 = osgr_rhs19(&ensemble)?;
            let rhs22 = osgr_rhs22(&ensemble)?;
            points.push(OsgrPoint {
                setting_id: setting.id.clone(),
                epoch: t,
                n: setting.n,
                lhs,
                rhs19,
                rhs22,
            });
        }
    }

    let fits = epoch_fits(&points, &recorded);
    Ok(GridResult { points, fits })
}

/// Per-epoch Pearson and least-squares fit of (rhs, lhs) across settings.
pub fn epoch_fits(points: &[OsgrPoint], epochs: &BTreeSet<usize>) -> Vec<EpochFit> {
    let mut fits = Vec::new();
    for &t in epochs {
        let pairs: Vec<(f64, f64)> = points
            .iter()
            .filter(|p| p.epoch == t)
            .map(|p| (p.rhs19, p.lhs))
            .collect();
        if pairs.len() < 2 {
            continue;
        }
        let xs: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        let ys: Vec<f64> = pairs.iter().map(|p| p.1).collect();
        let pearson = crate::gradstats::pearson(&xs, &ys).unwrap_or(f64::NAN);
        let (slope, intercept) = fit_line(&pairs).unwrap_or((f64::NAN, f64::NAN));
        fits.push(EpochFit { epoch: t, pearson, slope, intercept, n_points: pairs.len() });
    }
    fits
}
