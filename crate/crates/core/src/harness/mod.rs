//! Experiment orchestration: config parsing, the multi-run OSGR grid, the
//! GSNR-curve and training-dynamics recipes, Monte Carlo identity checks,
//! and CSV/JSON emission.

pub mod config;
pub mod experiments;
pub mod grid;
pub mod identities;
pub mod output;

pub use config::{ExperimentConfig, ExperimentKind};
pub use experiments::{run_dynamics_experiment, run_gsnr_experiment};
pub use grid::{run_osgr_grid, EpochFit, GridResult};
pub use identities::{check_gap_increment, check_variance_relation, IdentityReport};
pub use output::fit_line;
