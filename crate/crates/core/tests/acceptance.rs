//! Acceptance suite: one test per criterion, each printing a single
//! pass/fail line. All tolerances are pinned as constants next to the
//! check that uses them. Run with `--nocapture` to see every line.

use std::collections::BTreeSet;
use std::process::Command;
use std::sync::OnceLock;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use gsnr_lab::dynamics::FeatureCorr;
use gsnr_lab::harness::{
    check_gap_increment, check_variance_relation, run_dynamics_experiment, run_gsnr_experiment,
    run_osgr_grid, ExperimentConfig,
};
use gsnr_lab::netcore::{
    finite_diff_grad, forward, init_params, per_sample_grads, Activation, LossKind, MlpSpec,
};
use gsnr_lab::osgr::{osgr_rhs19, osgr_rhs22, MomentEnsemble};
use gsnr_lab::seed::sub_seed;
use gsnr_lab::synthdata::{gen_dataset, DataSpec};

const MC_SEED: u64 = 20_260_824;

fn report(criterion: usize, name: &str, pass: bool) {
    println!("criterion {criterion} ({name}): {}", if pass { "pass" } else { "FAIL" });
    assert!(pass, "criterion {criterion} ({name}) failed");
}

/// Off-kink filter: every hidden pre-activation stays clear of the relu
/// kink, where the analytic subgradient and the central difference may
/// legitimately disagree.
fn off_kink(params: &gsnr_lab::netcore::MlpParams, x: &[f64], margin: f64) -> bool {
    let trace = forward(params, x).unwrap();
    let spec = params.spec();
    for l in 0..spec.num_layers() - 1 {
        for (o, b) in trace.matmul_out[l].iter().zip(params.biases(l)) {
            if (o + b).abs() < margin {
                return false;
            }
        }
    }
    true
}

#[test]
fn c01_gradient_correctness() {
    const H: f64 = 1e-6;
    const REL_TOL: f64 = 1e-5;
    const KINK_MARGIN: f64 = 1e-4;
    const CASES: usize = 100;

    let setups = [
        (
            DataSpec::regression(1, 0.01).unwrap(),
            MlpSpec::new(vec![2, 10, 1], Activation::Relu, LossKind::Mse).unwrap(),
        ),
        (
            DataSpec::classification(10, 1, 3, 31).unwrap(),
            MlpSpec::new(vec![10, 8, 3], Activation::Relu, LossKind::SoftmaxCrossEntropy)
                .unwrap(),
        ),
    ];

    let mut worst: f64 = 0.0;
    for (which, (data_spec, mlp_spec)) in setups.iter().enumerate() {
        let mut accepted = 0;
        let mut attempt = 0u64;
        while accepted < CASES {
            let params =
                init_params(mlp_spec, sub_seed(MC_SEED, 2 * attempt + which as u64));
            let sample =
                gen_dataset(data_spec, sub_seed(MC_SEED ^ 0xabcd, attempt)).unwrap();
            attempt += 1;
            if !off_kink(&params, sample.input(0), KINK_MARGIN) {
                continue;
            }
            accepted += 1;
            let analytic = per_sample_grads(&params, &sample).unwrap();
            let fd =
                finite_diff_grad(&params, sample.input(0), &sample.target(0), H).unwrap();
            let diff: f64 = analytic
                .row(0)
                .iter()
                .zip(&fd)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            let norm: f64 = fd.iter().map(|v| v * v).sum::<f64>().sqrt();
            worst = worst.max(diff / norm.max(1e-12));
        }
    }
    report(1, "per-sample gradients match the finite-difference oracle", worst <= REL_TOL);
}

#[test]
fn c02_osgr_algebraic_identity() {
    const TOL: f64 = 1e-12;
    const ENSEMBLES: usize = 1000;

    let mut rng = ChaCha8Rng::seed_from_u64(MC_SEED);
    let mut worst: f64 = 0.0;
    for _ in 0..ENSEMBLES {
        let p = rng.gen_range(1..40);
        let ensemble = MomentEnsemble {
            e_g2: (0..p).map(|_| rng.gen_range(1e-8..10.0)).collect(),
            rho2: (0..p).map(|_| rng.gen_range(1e-8..10.0)).collect(),
            m: rng.gen_range(2..100),
            n: rng.gen_range(1..10_000),
        };
        let a = osgr_rhs19(&ensemble).unwrap();
        let b = osgr_rhs22(&ensemble).unwrap();
        worst = worst.max((a - b).abs());
    }
    report(2, "the two moment forms of OSGR agree", worst <= TOL);
}

fn toy_mc_setup() -> (DataSpec, MlpSpec) {
    (
        DataSpec::regression(50, 0.2).unwrap(),
        MlpSpec::new(vec![2, 20, 1], Activation::Relu, LossKind::Mse).unwrap(),
    )
}

#[test]
fn c03_variance_relation() {
    const REL_TOL: f64 = 0.05;
    let (data, mlp) = toy_mc_setup();
    let check = check_variance_relation(&data, &mlp, 50, 1000, MC_SEED).unwrap();
    report(
        3,
        "variance of the mean gradient equals per-sample variance over n",
        check.relative_error <= REL_TOL,
    );
}

#[test]
fn c04_gap_increment() {
    const REL_TOL: f64 = 0.10;
    const HALVING_TOL: f64 = 0.15;
    let (data, mlp) = toy_mc_setup();
    let full = check_gap_increment(&data, &mlp, 50, 1e-4, 2000, MC_SEED).unwrap();
    let half = check_gap_increment(&data, &mlp, 50, 5e-5, 2000, MC_SEED).unwrap();
    let ratio = half.measured_mean / full.measured_mean;
    report(
        4,
        "one-step gap increment matches lr * sum(rho2) / n and scales with lr",
        full.relative_error <= REL_TOL && (ratio - 0.5).abs() <= 0.5 * HALVING_TOL,
    );
}

#[test]
fn c05_osgr_grid_agreement() {
    const EARLY_EPOCH: usize = 20;
    const EARLY_PEARSON: f64 = 0.9;
    const SLOPE_RANGE: (f64, f64) = (0.7, 1.3);
    const LATE_EPOCH: usize = 500;
    const LATE_PEARSON: f64 = 0.6;

    let cfg = ExperimentConfig::from_toml(
        r#"
        kind = "osgr_verify"
        seed = 20260824
        [data]
        task = "regression"
        n = 50
        noise_half_width = 0.2
        [model]
        hidden = [20]
        [train]
        epochs = 501
        learning_rate = 0.001
        [grid]
        n = [50, 100, 300, 600]
        widths = [6, 12, 20]
        noise = [0.2, 2.0]
        m = 50
        n_test = 2000
        "#,
    )
    .unwrap();
    let result = run_osgr_grid(&cfg).unwrap();
    let early_ok = result
        .fits
        .iter()
        .filter(|f| f.epoch <= EARLY_EPOCH)
        .all(|f| f.pearson >= EARLY_PEARSON && (SLOPE_RANGE.0..=SLOPE_RANGE.1).contains(&f.slope));
    let late = result.fits.iter().find(|f| f.epoch == LATE_EPOCH).unwrap();
    report(
        5,
        "measured OSGR tracks the moment prediction across the grid",
        early_ok && late.pearson >= LATE_PEARSON,
    );
}

#[test]
fn c06_gsnr_rise_and_frozen_control() {
    const RISE_FACTOR: f64 = 2.0;
    const MIN_SEEDS: usize = 4;
    const SEEDS: std::ops::RangeInclusive<u64> = 1..=5;
    const EPOCHS: usize = 6000;

    let mut risen = 0;
    let mut frozen_smaller = 0;
    for seed in SEEDS {
        let cfg = ExperimentConfig::from_toml(&format!(
            r#"
            kind = "gsnr_curve"
            seed = {seed}
            [data]
            task = "regression"
            n = 2000
            noise_half_width = 0.01
            [model]
            hidden = [20]
            init_scale = 0.02
            [train]
            epochs = {EPOCHS}
            learning_rate = 0.01
            record_every = 50
            [pair]
            n_train = 2000
            n_test = 2000
            "#
        ))
        .unwrap();
        let arms = run_gsnr_experiment(&cfg).unwrap();
        let ratio_and_peak_epoch = |name: &str| {
            let arm = arms.iter().find(|a| a.name == name).unwrap();
            let curve = arm.series.gsnr_curve_layer(1);
            let (k, peak) = curve
                .iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |acc, (k, &v)| if v > acc.1 { (k, v) } else { acc });
            (peak / curve[0], arm.series.epochs[k])
        };
        let (nonfrozen_ratio, peak_epoch) = ratio_and_peak_epoch("nonfrozen");
        let (frozen_ratio, _) = ratio_and_peak_epoch("frozen");
        if nonfrozen_ratio >= RISE_FACTOR && peak_epoch <= EPOCHS / 2 {
            risen += 1;
        }
        if frozen_ratio < nonfrozen_ratio {
            frozen_smaller += 1;
        }
    }
    report(
        6,
        "second-layer GSNR rises at least twofold and freezing suppresses the rise",
        risen >= MIN_SEEDS && frozen_smaller >= MIN_SEEDS,
    );
}

/// One classification run per seed, shared by criteria 7 and 8:
/// (time-averaged GSNR real, time-averaged GSNR random, p_same_sign at
/// epoch 0, p_same_sign at mid-training).
fn classification_pairs() -> &'static Vec<(f64, f64, f64, f64)> {
    static RESULTS: OnceLock<Vec<(f64, f64, f64, f64)>> = OnceLock::new();
    RESULTS.get_or_init(|| {
        const EPOCHS: usize = 600;
        let mut out = Vec::new();
        for seed in 1..=5u64 {
            let cfg = ExperimentConfig::from_toml(&format!(
                r#"
                kind = "gsnr_curve"
                seed = {seed}
                [data]
                task = "classification"
                input_dim = 100
                n = 2000
                num_classes = 2
                teacher_seed = 25
                [model]
                hidden = [16]
                [train]
                epochs = {EPOCHS}
                learning_rate = 0.05
                record_every = 5
                [pair]
                n_train = 2000
                n_test = 1500
                p_random = 1.0
                "#
            ))
            .unwrap();
            let arms = run_gsnr_experiment(&cfg).unwrap();
            let time_avg = |name: &str| {
                let arm = arms.iter().find(|a| a.name == name).unwrap();
                let vals: Vec<f64> = arm
                    .series
                    .epochs
                    .iter()
                    .zip(&arm.series.avg_gsnr_all)
                    .filter(|(&e, _)| (10..=200).contains(&e))
                    .map(|(_, &v)| v)
                    .collect();
                vals.iter().sum::<f64>() / vals.len() as f64
            };
            let real = arms.iter().find(|a| a.name == "real").unwrap();
            let mid_k = real.series.epochs.iter().position(|&e| e >= EPOCHS / 2).unwrap();
            out.push((
                time_avg("real"),
                time_avg("random"),
                real.series.p_same_sign_mean[0],
                real.series.p_same_sign_mean[mid_k],
            ));
        }
        out
    })
}

#[test]
fn c07_random_label_control() {
    const MIN_SEEDS: usize = 4;
    let wins = classification_pairs().iter().filter(|(real, random, _, _)| real > random).count();
    report(7, "real labels carry more gradient signal than random labels", wins >= MIN_SEEDS);
}

#[test]
fn c08_sign_consistency_starts_near_chance_and_rises() {
    const EPOCH0_WINDOW: (f64, f64) = (0.47, 0.53);
    const MIN_SEEDS: usize = 4;
    let pairs = classification_pairs();
    let near_chance =
        pairs.iter().all(|(_, _, p0, _)| (EPOCH0_WINDOW.0..=EPOCH0_WINDOW.1).contains(p0));
    let risen = pairs.iter().filter(|(_, _, p0, pmid)| pmid > p0).count();
    report(
        8,
        "p_same_sign starts near one half and rises by mid-training",
        near_chance && risen >= MIN_SEEDS,
    );
}

#[test]
fn c09_weight_dynamics_probes() {
    const MIN_SEEDS: usize = 4;
    const OPP_ALL_BAR: f64 = 0.5;
    const OPP_TOP_BAR: f64 = 0.6;
    const EPOCHS: usize = 600;
    const LAYER: usize = 1; // the output layer, where the effect is strongest

    let mut dgw_negative = 0;
    let mut top_below_overall = 0;
    let mut opp_ordered = 0;
    for seed in 1..=5u64 {
        let cfg = ExperimentConfig::from_toml(&format!(
            r#"
            kind = "dynamics"
            seed = {seed}
            [data]
            task = "classification"
            input_dim = 10
            n = 500
            num_classes = 2
            teacher_seed = 13
            [model]
            hidden = [32]
            [train]
            epochs = {EPOCHS}
            learning_rate = 0.01
            record_every = 5
            [pair]
            n_train = 500
            n_test = 1500
            "#
        ))
        .unwrap();
        let series = run_dynamics_experiment(&cfg).unwrap().series;
        let window_mean = |data: &[f64], keep: &dyn Fn(usize) -> bool| {
            let vals: Vec<f64> = series
                .epochs
                .iter()
                .enumerate()
                .filter(|(_, &e)| keep(e))
                .map(|(k, _)| data[k])
                .collect();
            vals.iter().sum::<f64>() / vals.len() as f64
        };
        let first_quarter = |e: usize| e > 0 && e <= EPOCHS / 4;
        let mid = |e: usize| e * 10 >= EPOCHS * 4 && e * 10 <= EPOCHS * 6;

        let dgw = window_mean(&series.dgw_corr[LAYER], &first_quarter);
        let dgw_top = window_mean(&series.dgw_corr_top[LAYER], &first_quarter);
        let opp = window_mean(&series.opp_sign[LAYER], &mid);
        let opp_top = window_mean(&series.opp_sign_top[LAYER], &mid);

        if dgw < 0.0 {
            dgw_negative += 1;
        }
        if dgw_top <= dgw {
            top_below_overall += 1;
        }
        if opp_top >= opp && opp >= OPP_ALL_BAR && opp_top >= OPP_TOP_BAR {
            opp_ordered += 1;
        }
    }
    report(
        9,
        "gradient-mean shift opposes the weights and large weights sit opposite their gradient",
        dgw_negative >= MIN_SEEDS && top_below_overall >= MIN_SEEDS && opp_ordered >= MIN_SEEDS,
    );
}

#[test]
fn c10_feature_target_correlation_strengthens() {
    const RISE_FACTOR: f64 = 2.0;

    let cfg = ExperimentConfig::from_toml(
        r#"
        kind = "dynamics"
        seed = 1
        [data]
        task = "regression"
        n = 2000
        noise_half_width = 0.01
        [model]
        hidden = [20]
        init_scale = 0.02
        [train]
        epochs = 6000
        learning_rate = 0.01
        record_every = 50
        [pair]
        n_train = 2000
        n_test = 2000
        "#,
    )
    .unwrap();
    let result = run_dynamics_experiment(&cfg).unwrap();
    let (_, curves) = result.series.per_weight_gsnr.as_ref().unwrap();
    let width = curves[0].len();
    let mut risen = 0;
    let mut improved = 0;
    for unit in 0..width {
        let init = curves[0][unit];
        let peak = curves.iter().map(|row| row[unit]).fold(f64::NEG_INFINITY, f64::max);
        if peak >= RISE_FACTOR * init {
            risen += 1;
            let rec = &result.features[unit];
            if let (FeatureCorr::Value(before), FeatureCorr::Value(after)) =
                (rec.c_t0, rec.c_tmax)
            {
                if after.abs() > before.abs() {
                    improved += 1;
                }
            }
        }
    }
    report(
        10,
        "units whose GSNR curve rises end up more correlated with the target",
        risen > 0 && 2 * improved > risen,
    );
}

#[test]
fn c11_byte_identical_reruns() {
    let bin = env!("CARGO_BIN_EXE_gsnr-lab");
    let dir = tempfile::tempdir().unwrap();
    let config_path = dir.path().join("run.toml");
    std::fs::write(
        &config_path,
        r#"
        kind = "gsnr_curve"
        seed = 9
        [data]
        task = "regression"
        n = 120
        noise_half_width = 0.01
        [model]
        hidden = [10]
        [train]
        epochs = 40
        learning_rate = 0.001
        record_every = 10
        [pair]
        n_train = 120
        n_test = 300
        "#,
    )
    .unwrap();

    let mut outputs: Vec<BTreeSet<(String, Vec<u8>)>> = Vec::new();
    for rep in 0..2 {
        let out = dir.path().join(format!("out{rep}"));
        let status = Command::new(bin)
            .args(["gsnr-curve", "--config"])
            .arg(&config_path)
            .arg("--out")
            .arg(&out)
            .status()
            .unwrap();
        assert!(status.success());
        let mut files = BTreeSet::new();
        for entry in std::fs::read_dir(&out).unwrap() {
            let path = entry.unwrap().path();
            if path.extension().is_some_and(|e| e == "csv") {
                files.insert((
                    path.file_name().unwrap().to_string_lossy().into_owned(),
                    std::fs::read(&path).unwrap(),
                ));
            }
        }
        assert!(!files.is_empty());
        outputs.push(files);
    }
    report(11, "identical config and seed reproduce byte-identical CSV output", {
        outputs[0] == outputs[1]
    });
}
