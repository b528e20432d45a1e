//! TOML experiment configuration. Unknown keys are errors.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::netcore::{Activation, LossKind, MlpSpec};
use crate::synthdata::{DataSpec, TaskKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    GenData,
    OsgrVerify,
    GsnrCurve,
    Dynamics,
    CheckIdentities,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    pub task: TaskKind,
    #[serde(default = "default_input_dim")]
    pub input_dim: usize,
    pub n: usize,
    #[serde(default)]
    pub noise_half_width: f64,
    #[serde(default = "default_num_classes")]
    pub num_classes: usize,
    #[serde(default)]
    pub teacher_seed: u64,
}

fn default_input_dim() -> usize {
    2
}

fn default_num_classes() -> usize {
    2
}

impl DataSection {
    pub fn to_spec(&self) -> Result<DataSpec> {
        let spec = match self.task {
            TaskKind::Regression => {
                if self.input_dim != 2 {
                    return Err(Error::Config(
                        "the regression task is 2-dimensional; set input_dim = 2".into(),
                    ));
                }
                DataSpec::regression(self.n, self.noise_half_width)?
            }
            TaskKind::Classification => DataSpec::classification(
                self.input_dim,
                self.n,
                self.num_classes,
                self.teacher_seed,
            )?,
        };
        Ok(spec)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    /// Hidden-layer widths; input and output dims come from the data section.
    pub hidden: Vec<usize>,
    #[serde(default = "default_activation")]
    pub activation: Activation,
    /// Multiplier on the initial weights. Values below 1 start the network
    /// close to the zero function, which the GSNR-curve experiments need.
    #[serde(default = "default_init_scale")]
    pub init_scale: f64,
}

fn default_activation() -> Activation {
    Activation::Relu
}

fn default_init_scale() -> f64 {
    1.0
}

impl ModelSection {
    /// Full layer dims and loss for the given task.
    pub fn to_spec(&self, data: &DataSection) -> Result<MlpSpec> {
        let (out_dim, loss) = match data.task {
            TaskKind::Regression => (1, LossKind::Mse),
            TaskKind::Classification => (data.num_classes, LossKind::SoftmaxCrossEntropy),
        };
        let mut dims = vec![data.input_dim];
        dims.extend_from_slice(&self.hidden);
        dims.push(out_dim);
        MlpSpec::new(dims, self.activation, loss)
    }

    /// Same spec with the single hidden width replaced (grid axis).
    pub fn with_width(&self, width: usize) -> Self {
        Self { hidden: vec![width], activation: self.activation, init_scale: self.init_scale }
    }

    /// Initial parameters for this model, scaled by `init_scale`.
    pub fn init(&self, data: &DataSection, seed: u64) -> Result<crate::netcore::MlpParams> {
        let spec = self.to_spec(data)?;
        let params = crate::netcore::init_params(&spec, seed);
        if self.init_scale == 1.0 {
            return Ok(params);
        }
        let flat: Vec<f64> = params.flatten().iter().map(|v| v * self.init_scale).collect();
        crate::netcore::MlpParams::unflatten(&spec, &flat)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    pub epochs: usize,
    pub learning_rate: f64,
    #[serde(default = "default_record_every")]
    pub record_every: usize,
}

fn default_record_every() -> usize {
    1
}

/// Axes of the OSGR-verification grid plus its protocol sizes.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub n: Vec<usize>,
    pub widths: Vec<usize>,
    /// Regression noise axis (eta values). Ignored for classification.
    #[serde(default)]
    pub noise: Vec<f64>,
    /// Classification label-corruption axis. Ignored for regression.
    #[serde(default)]
    pub p_random: Vec<f64>,
    pub m: usize,
    pub n_test: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairSection {
    pub n_train: usize,
    pub n_test: usize,
    /// Corruption probability for the random-label arm (classification).
    #[serde(default = "default_p_random")]
    pub p_random: f64,
}

fn default_p_random() -> f64 {
    1.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IdentitySection {
    pub n: usize,
    pub variance_trials: usize,
    pub gap_trials: usize,
    pub gap_learning_rate: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub seed: u64,
    pub data: DataSection,
    #[serde(default)]
    pub model: Option<ModelSection>,
    #[serde(default)]
    pub train: Option<TrainSection>,
    #[serde(default)]
    pub grid: Option<GridSection>,
    #[serde(default)]
    pub pair: Option<PairSection>,
    #[serde(default)]
    pub identities: Option<IdentitySection>,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self =
            toml::from_str(text).map_err(|e| Error::Config(format!("bad config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        self.data.to_spec().map_err(|e| Error::Config(e.to_string()))?;
        if let Some(model) = &self.model {
            if !(model.init_scale > 0.0 && model.init_scale.is_finite()) {
                return Err(Error::Config("model.init_scale must be positive and finite".into()));
            }
        }
        let need = |ok: bool, what: &str| {
            if ok {
                Ok(())
            } else {
                Err(Error::Config(format!("experiment kind requires the [{what}] section")))
            }
        };
        match self.kind {
            ExperimentKind::GenData => {}
            ExperimentKind::OsgrVerify => {
                need(self.model.is_some(), "model")?;
                need(self.train.is_some(), "train")?;
                need(self.grid.is_some(), "grid")?;
                let grid = self.grid.as_ref().unwrap();
                if grid.n.is_empty() || grid.widths.is_empty() {
                    return Err(Error::Config("grid axes must be nonempty".into()));
                }
                let noise_axis = match self.data.task {
                    TaskKind::Regression => &grid.noise,
                    TaskKind::Classification => &grid.p_random,
                };
                if noise_axis.is_empty() {
                    return Err(Error::Config(
                        "the grid needs a noise axis (noise for regression, p_random for classification)"
                            .into(),
                    ));
                }
                if grid.m < 2 {
                    return Err(Error::Config("grid.m must be at least 2".into()));
                }
            }
            ExperimentKind::GsnrCurve | ExperimentKind::Dynamics => {
                need(self.model.is_some(), "model")?;
                need(self.train.is_some(), "train")?;
                need(self.pair.is_some(), "pair")?;
                if self.kind == ExperimentKind::Dynamics
                    && self.train.as_ref().unwrap().learning_rate == 0.0
                {
                    return Err(Error::Config(
                        "dynamics probes are degenerate at learning_rate = 0".into(),
                    ));
                }
            }
            ExperimentKind::CheckIdentities => {
                need(self.model.is_some(), "model")?;
                need(self.identities.is_some(), "identities")?;
                let id = self.identities.as_ref().unwrap();
                if id.variance_trials < 100 || id.gap_trials < 100 {
                    return Err(Error::Config("identity checks need at least 100 trials".into()));
                }
                if id.gap_learning_rate > 1e-3 {
                    return Err(Error::Config(
                        "gap check learning rate must be at most 1e-3".into(),
                    ));
                }
            }
        }
        Ok(())
    }
}
