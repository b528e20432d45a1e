use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use gsnr_lab::harness::{
    check_gap_increment, check_variance_relation, output, run_dynamics_experiment,
    run_gsnr_experiment, run_osgr_grid, ExperimentConfig, ExperimentKind,
    IdentityReport,
};
use gsnr_lab::synthdata::gen_dataset;
use gsnr_lab::Error;

/// Train small MLPs with full-batch gradient descent and measure per-parameter
/// gradient signal-to-noise ratio against one-step generalization.
#[derive(Parser)]
#[command(name = "gsnr-lab", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML experiment configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (created if missing).
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Override the config's master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for parallel runs (default: all cores).
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a dataset as CSV plus a JSON sidecar.
    GenData(Common),
    /// Run the multi-training-set OSGR verification grid.
    OsgrVerify(Common),
    /// Run the paired GSNR-curve experiment (frozen/non-frozen or real/random).
    GsnrCurve(Common),
    /// Run the training-dynamics probes (gradient/weight correlations, features).
    Dynamics(Common),
    /// Run the Monte Carlo identity checks and write identities.json.
    CheckIdentities(Common),
}

const EXIT_CONFIG: u8 = 1;
const EXIT_NUMERICAL: u8 = 2;
const EXIT_CHECK_FAILED: u8 = 3;

fn load(common: &Common, expect: ExperimentKind) -> Result<ExperimentConfig, Error> {
    let mut cfg = ExperimentConfig::load(&common.config)?;
    if cfg.kind != expect {
        return Err(Error::Config(format!(
            "config kind {:?} does not match this subcommand",
            cfg.kind
        )));
    }
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    std::fs::create_dir_all(&common.out)?;
    if let Some(jobs) = common.jobs {
        // ignore the error if a global pool already exists
        let _ = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global();
    }
    output::write_config_echo(&common.out.join("config.json"), &cfg)?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<u8, Error> {
    match cli.command {
        Command::GenData(common) => {
            let cfg = load(&common, ExperimentKind::GenData)?;
            let d = gen_dataset(&cfg.data.to_spec()?, cfg.seed)?;
            output::write_dataset_csv(&common.out.join("data.csv"), &d, cfg.seed)?;
            Ok(0)
        }
        Command::OsgrVerify(common) => {
            let cfg = load(&common, ExperimentKind::OsgrVerify)?;
            let result = run_osgr_grid(&cfg)?;
            output::write_grid_csv(&common.out.join("grid.csv"), &result)?;
            output::write_fit_csv(&common.out.join("fit.csv"), &result)?;
            Ok(0)
        }
        Command::GsnrCurve(common) => {
            let cfg = load(&common, ExperimentKind::GsnrCurve)?;
            for arm in run_gsnr_experiment(&cfg)? {
                output::write_probes_csv(
                    &common.out.join(format!("probes_{}.csv", arm.name)),
                    &arm.series,
                )?;
            }
            Ok(0)
        }
        Command::Dynamics(common) => {
            let cfg = load(&common, ExperimentKind::Dynamics)?;
            let result = run_dynamics_experiment(&cfg)?;
            output::write_probes_csv(&common.out.join("probes_dynamics.csv"), &result.series)?;
            if !result.features.is_empty() {
                output::write_features_csv(&common.out.join("features.csv"), &result.features)?;
            }
            Ok(0)
        }
        Command::CheckIdentities(common) => {
            let cfg = load(&common, ExperimentKind::CheckIdentities)?;
            let id = cfg.identities.as_ref().unwrap();
            let data_spec = cfg.data.to_spec()?;
            let mlp_spec = cfg.model.as_ref().unwrap().to_spec(&cfg.data)?;
            let report = IdentityReport {
                variance_relation: check_variance_relation(
                    &data_spec,
                    &mlp_spec,
                    id.n,
                    id.variance_trials,
                    cfg.seed,
                )?,
                gap_increment: check_gap_increment(
                    &data_spec,
                    &mlp_spec,
                    id.n,
                    id.gap_learning_rate,
                    id.gap_trials,
                    cfg.seed.wrapping_add(1),
                )?,
            };
            output::write_identities_json(&common.out.join("identities.json"), &report)?;
            let v = &report.variance_relation;
            let g = &report.gap_increment;
            println!(
                "variance relation: rel err {:.4} (tol {}) -> {}",
                v.relative_error,
                v.tolerance,
                if v.pass { "pass" } else { "FAIL" }
            );
            println!(
                "gap increment:     rel err {:.4} (tol {}) -> {}",
                g.relative_error,
                g.tolerance,
                if g.pass { "pass" } else { "FAIL" }
            );
            Ok(if report.all_pass() { 0 } else { EXIT_CHECK_FAILED })
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            let code = match e {
                Error::NonFinite(_) | Error::Stalled(_) => EXIT_NUMERICAL,
                _ => EXIT_CONFIG,
            };
            ExitCode::from(code)
        }
    }
}
