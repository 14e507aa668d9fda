//! Experiment configuration: a single versioned JSON document validated as a
//! whole before any compute happens.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::chain::ChainConfig;
use crate::ensemble::{OptimizerKind, TrainConfig};
use crate::error::{Error, Result};
use crate::nn::{Activation, MlpArchitecture, Task};
use crate::objectives::{GaussianPrior, LayerPriorStd};

pub const SCHEMA_VERSION: u32 = 1;

/// Ensembling method.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Ae,
    Sae,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Ae => "ae",
            Method::Sae => "sae",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ae" => Ok(Method::Ae),
            "sae" => Ok(Method::Sae),
            other => Err(Error::InvalidConfig(format!(
                "unknown method {other:?}; valid methods: ae, sae"
            ))),
        }
    }
}

/// Dataset source: a named synthetic generator or a CSV file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DatasetConfig {
    Synthetic {
        name: String,
        n: usize,
        #[serde(default)]
        noise: f64,
        /// line1d slope.
        #[serde(default = "default_slope")]
        slope: f64,
        /// line1d intercept.
        #[serde(default)]
        intercept: f64,
        /// twoclass2d center separation.
        #[serde(default = "default_separation")]
        separation: f64,
    },
    Csv {
        path: PathBuf,
        /// Overrides the integer-target task inference.
        #[serde(default)]
        task: Option<Task>,
    },
}

fn default_slope() -> f64 {
    1.0
}

fn default_separation() -> f64 {
    2.0
}

/// Network architecture section.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchConfig {
    pub layer_sizes: Vec<usize>,
    pub activation: Activation,
    pub task: Task,
    #[serde(default = "default_noise_sigma")]
    pub noise_sigma: f64,
    #[serde(default = "default_true")]
    pub use_bias: bool,
}

fn default_noise_sigma() -> f64 {
    1.0
}

fn default_true() -> bool {
    true
}

impl ArchConfig {
    pub fn build(&self) -> Result<MlpArchitecture> {
        MlpArchitecture::with_bias(
            self.layer_sizes.clone(),
            self.activation,
            self.task,
            self.noise_sigma,
            self.use_bias,
        )
    }
}

/// Prior section: isotropic by default, optionally per-layer scales.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorConfig {
    #[serde(default)]
    pub mean: f64,
    #[serde(default = "default_prior_std")]
    pub std: f64,
    /// Per-layer (weight, bias) std overrides; zero-mean when used.
    #[serde(default)]
    pub layer_stds: Option<Vec<LayerPriorStd>>,
}

fn default_prior_std() -> f64 {
    1.0
}

impl Default for PriorConfig {
    fn default() -> Self {
        Self {
            mean: 0.0,
            std: 1.0,
            layer_stds: None,
        }
    }
}

impl PriorConfig {
    pub fn build(&self, arch: &MlpArchitecture) -> Result<GaussianPrior> {
        match &self.layer_stds {
            Some(layers) => {
                if self.mean != 0.0 {
                    return Err(Error::InvalidConfig(
                        "per-layer prior stds require a zero mean".into(),
                    ));
                }
                GaussianPrior::from_layer_stds(arch, layers)
            }
            None => GaussianPrior::isotropic(arch.parameter_count(), self.mean, self.std),
        }
    }
}

/// Budget section: total epochs plus the SAE chain split.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BudgetConfig {
    pub total_epochs: usize,
    #[serde(default = "default_one")]
    pub chains: usize,
    pub initial_epochs: usize,
    #[serde(default = "default_one")]
    pub sequential_epochs: usize,
}

fn default_one() -> usize {
    1
}

/// Optimization settings shared by the initial and sequential trainings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainSettings {
    #[serde(default)]
    pub batch_size: usize,
    #[serde(default = "default_learning_rate")]
    pub learning_rate: f64,
    #[serde(default = "default_optimizer")]
    pub optimizer: OptimizerKind,
    #[serde(default = "default_betas")]
    pub adam_betas: (f64, f64),
    #[serde(default)]
    pub carry_optimizer_state: bool,
}

fn default_learning_rate() -> f64 {
    1e-3
}

fn default_optimizer() -> OptimizerKind {
    OptimizerKind::Adam
}

fn default_betas() -> (f64, f64) {
    (0.9, 0.999)
}

impl Default for TrainSettings {
    fn default() -> Self {
        Self {
            batch_size: 0,
            learning_rate: default_learning_rate(),
            optimizer: default_optimizer(),
            adam_betas: default_betas(),
            carry_optimizer_state: false,
        }
    }
}

impl TrainSettings {
    pub fn to_train_config(&self, epochs: usize) -> TrainConfig {
        TrainConfig {
            epochs,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            optimizer: self.optimizer,
            adam_betas: self.adam_betas,
            seed: 0,
            carry_optimizer_state: self.carry_optimizer_state,
        }
    }
}

/// Guided-walk settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChainSettings {
    /// Proposal std in units of the per-coordinate prior std.
    #[serde(default = "default_step_sigma")]
    pub step_sigma: f64,
}

fn default_step_sigma() -> f64 {
    0.1
}

impl Default for ChainSettings {
    fn default() -> Self {
        Self {
            step_sigma: default_step_sigma(),
        }
    }
}

impl ChainSettings {
    pub fn to_chain_config(&self, seed: u64) -> Result<ChainConfig> {
        ChainConfig::new(self.step_sigma, seed)
    }
}

/// Evaluation settings: deterministic input grid plus predictive sample sizes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalSettings {
    /// Target number of evaluation inputs on the deterministic grid.
    #[serde(default = "default_grid_points")]
    pub grid_points: usize,
    /// Grid padding as a fraction of the data range on each side.
    #[serde(default = "default_pad_fraction")]
    pub pad_fraction: f64,
    /// Regression: predictive samples drawn per ensemble member (0 = auto).
    #[serde(default)]
    pub samples_per_member: usize,
    /// Regression: reference predictive sample count.
    #[serde(default = "default_reference_samples")]
    pub reference_samples: usize,
    /// Grid oracle nodes per axis (0 = auto by parameter count).
    #[serde(default)]
    pub points_per_axis: usize,
}

fn default_grid_points() -> usize {
    200
}

fn default_pad_fraction() -> f64 {
    0.2
}

fn default_reference_samples() -> usize {
    512
}

impl Default for EvalSettings {
    fn default() -> Self {
        Self {
            grid_points: default_grid_points(),
            pad_fraction: default_pad_fraction(),
            samples_per_member: 0,
            reference_samples: default_reference_samples(),
            points_per_axis: 0,
        }
    }
}

/// Which posterior oracle backs the reference predictive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ReferenceKind {
    /// Closed form for linear regression models, grid quadrature for models
    /// with at most four parameters, otherwise an error.
    #[default]
    Auto,
    Linear,
    Grid,
    /// Skip the reference and the comparison metrics entirely.
    None,
}

/// The whole experiment document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub dataset: DatasetConfig,
    pub arch: ArchConfig,
    #[serde(default)]
    pub prior: PriorConfig,
    #[serde(default)]
    pub method: Option<Method>,
    pub budget: BudgetConfig,
    #[serde(default)]
    pub train: TrainSettings,
    #[serde(default)]
    pub chain: ChainSettings,
    #[serde(default)]
    pub eval: EvalSettings,
    #[serde(default)]
    pub reference: ReferenceKind,
    /// Metric subset to report; defaults to all metrics valid for the task.
    #[serde(default)]
    pub metrics: Option<Vec<String>>,
    pub seed: u64,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn from_json(json: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(json)
            .map_err(|e| Error::InvalidConfig(format!("config parse: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self)
            .map_err(|e| Error::InvalidConfig(format!("config serialization: {e}")))
    }

    /// Whole-document validation, run before any compute.
    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::InvalidConfig(format!(
                "unsupported schema_version {}; this build reads version {SCHEMA_VERSION}",
                self.schema_version
            )));
        }
        let arch = self.arch.build()?;
        self.prior.build(&arch)?;
        if self.budget.total_epochs == 0 || self.budget.initial_epochs == 0 {
            return Err(Error::InvalidConfig(
                "budget total_epochs and initial_epochs must be >= 1".into(),
            ));
        }
        if let Some(Method::Sae) = self.method {
            if self.budget.chains == 0 || self.budget.sequential_epochs == 0 {
                return Err(Error::InvalidConfig(
                    "sae runs need chains >= 1 and sequential_epochs >= 1".into(),
                ));
            }
        }
        if let DatasetConfig::Synthetic { name, n, noise, .. } = &self.dataset {
            name.parse::<super::SyntheticName>()?;
            if *n == 0 {
                return Err(Error::InvalidConfig("dataset n must be >= 1".into()));
            }
            if *noise < 0.0 {
                return Err(Error::InvalidConfig("dataset noise must be >= 0".into()));
            }
        }
        self.train.to_train_config(1).validate()?;
        self.chain.to_chain_config(0)?;
        if self.eval.grid_points == 0 {
            return Err(Error::InvalidConfig("eval grid_points must be >= 1".into()));
        }
        if !(self.eval.pad_fraction >= 0.0 && self.eval.pad_fraction.is_finite()) {
            return Err(Error::InvalidConfig(
                "eval pad_fraction must be a nonnegative real".into(),
            ));
        }
        if let Some(metrics) = &self.metrics {
            for name in metrics {
                let valid = match self.arch.task {
                    Task::Classification => ["agreement", "total_variation"].contains(&name.as_str()),
                    Task::Regression => name == "w2",
                };
                if !valid {
                    return Err(Error::InvalidConfig(format!(
                        "metric {name:?} is not valid for a {:?} task; \
                         classification: agreement, total_variation; regression: w2",
                        self.arch.task
                    )));
                }
            }
        }
        Ok(())
    }

    /// True when the named metric should be reported under this config.
    pub fn wants_metric(&self, name: &str) -> bool {
        match &self.metrics {
            None => true,
            Some(list) => list.iter().any(|m| m == name),
        }
    }

    /// The method, requiring it to be set either in the document or by the caller.
    pub fn resolve_method(&self, override_method: Option<Method>) -> Result<Method> {
        match (self.method, override_method) {
            (Some(m), None) => Ok(m),
            (None, Some(m)) => Ok(m),
            (Some(a), Some(b)) if a == b => Ok(a),
            (Some(a), Some(b)) => Err(Error::InvalidConfig(format!(
                "config method {} conflicts with requested method {}",
                a.as_str(),
                b.as_str()
            ))),
            (None, None) => Err(Error::InvalidConfig(
                "no method given: set \"method\" in the config or use a train subcommand".into(),
            )),
        }
    }
}
