//! Declarative experiment configuration: a TOML file names the datasets,
//! preprocessing choices, split scheme, models, search strategy and seed, so
//! an experiment is reproducible from the file alone. Seeding is always
//! explicit; there is no wall-clock fallback.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{FactorPolicy, Format, LabelSpec};
use crate::error::{Error, Result};
use crate::nn::{Activation, ModelKind, StoppingCriterion, TrainConfig};
use crate::search::{ParamAxis, ParamDomain, StrategyKind};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    pub name: String,
    pub path: PathBuf,
    pub format: String,
    /// Label column by header name; `label_index` takes precedence if set.
    #[serde(default)]
    pub label: Option<String>,
    #[serde(default)]
    pub label_index: Option<usize>,
}

impl DatasetConfig {
    pub fn format(&self) -> Result<Format> {
        self.format.parse()
    }

    /// Label column: explicit index, then name, then the last column.
    pub fn label_spec(&self) -> Result<LabelSpec> {
        Ok(match (&self.label_index, &self.label) {
            (Some(i), _) => LabelSpec::Index(*i),
            (None, Some(name)) => LabelSpec::Name(name.clone()),
            (None, None) => LabelSpec::Last,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PreprocessingConfig {
    /// "level_index" or "seeded_permutation" (seeded from the master seed).
    pub factor_policy: String,
    pub normalize: bool,
    pub exclude_label: bool,
    pub convert_factor_features: bool,
}

impl Default for PreprocessingConfig {
    fn default() -> Self {
        PreprocessingConfig {
            factor_policy: "level_index".into(),
            normalize: true,
            exclude_label: true,
            convert_factor_features: true,
        }
    }
}

impl PreprocessingConfig {
    pub fn factor_policy(&self, seed: u64) -> Result<FactorPolicy> {
        match self.factor_policy.as_str() {
            "level_index" => Ok(FactorPolicy::LevelIndex),
            "seeded_permutation" => Ok(FactorPolicy::SeededPermutation(seed)),
            other => Err(Error::InvalidConfig(format!(
                "unknown factor_policy {other:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SplitConfig {
    /// "holdout", "three_way" or "repeated_cv".
    pub scheme: String,
    pub folds: usize,
    pub repeats: usize,
    pub stratified: bool,
    /// Restrict cross-validation to the 70% training side of a holdout.
    pub cv_on_train_only: bool,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig {
            scheme: "three_way".into(),
            folds: 10,
            repeats: 10,
            stratified: false,
            cv_on_train_only: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StrategyConfig {
    pub kind: String,
    /// Random-search budget.
    pub n_trials: usize,
    /// Nelder-Mead budget and tolerance.
    pub max_evals: usize,
    pub tolerance: f64,
}

impl Default for StrategyConfig {
    fn default() -> Self {
        StrategyConfig {
            kind: "random".into(),
            n_trials: 50,
            max_evals: 100,
            tolerance: 1e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub hidden_dims: Vec<usize>,
    pub activation: String,
    pub hidden_dropout: f64,
    pub visible_dropout: f64,
    pub min_loss_delta: f64,
    /// Early-stopping patience in epochs; absent means no early stopping.
    pub patience: Option<usize>,
}

impl Default for TrainSection {
    fn default() -> Self {
        TrainSection {
            epochs: 10,
            batch_size: 10,
            learning_rate: 0.1,
            hidden_dims: vec![8],
            activation: "sigmoid".into(),
            hidden_dropout: 0.0,
            visible_dropout: 0.0,
            min_loss_delta: 0.0,
            patience: None,
        }
    }
}

impl TrainSection {
    pub fn to_train_config(&self, seed: u64) -> Result<TrainConfig> {
        let activation: Activation = self.activation.parse()?;
        Ok(TrainConfig {
            learning_rate: self.learning_rate,
            batch_size: self.batch_size,
            epochs: self.epochs,
            hidden_dims: self.hidden_dims.clone(),
            hidden_dropout: self.hidden_dropout,
            visible_dropout: self.visible_dropout,
            activation,
            seed,
            stopping: StoppingCriterion {
                max_epochs: self.epochs,
                min_loss_delta: self.min_loss_delta,
                patience: self.patience.unwrap_or(usize::MAX),
            },
        })
    }
}

/// One axis override in the [space] section: a discrete value list or a
/// continuous [lo, hi] interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AxisConfig {
    pub name: String,
    #[serde(default)]
    pub values: Option<Vec<f64>>,
    #[serde(default)]
    pub lo: Option<f64>,
    #[serde(default)]
    pub hi: Option<f64>,
}

impl AxisConfig {
    pub fn to_axis(&self) -> Result<ParamAxis> {
        match (&self.values, self.lo, self.hi) {
            (Some(values), None, None) => Ok(ParamAxis {
                name: self.name.clone(),
                domain: ParamDomain::Discrete(values.clone()),
            }),
            (None, Some(lo), Some(hi)) => Ok(ParamAxis {
                name: self.name.clone(),
                domain: ParamDomain::Continuous { lo, hi },
            }),
            _ => Err(Error::InvalidConfig(format!(
                "axis {:?} needs either values or lo+hi",
                self.name
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpaceConfig {
    pub axes: Vec<AxisConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    /// Number of uniformly spaced learning-rate points.
    pub points: usize,
    /// Explicit grid; overrides `points` when non-empty.
    pub lr_values: Vec<f64>,
    pub folds: usize,
    pub repeats: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            points: 208,
            lr_values: Vec::new(),
            folds: 10,
            repeats: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    /// Record measured wall times in trials.csv. Reproducibility configs
    /// turn this off so reruns are byte-identical.
    pub timing: bool,
    /// Worker-pool width for independent trials.
    pub jobs: usize,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            timing: true,
            jobs: 1,
        }
    }
}

/// The whole experiment file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub output_dir: PathBuf,
    pub datasets: Vec<DatasetConfig>,
    pub models: Vec<String>,
    #[serde(default)]
    pub preprocessing: PreprocessingConfig,
    #[serde(default)]
    pub split: SplitConfig,
    #[serde(default)]
    pub strategy: StrategyConfig,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub space: SpaceConfig,
    #[serde(default)]
    pub sweep: SweepConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let config: ExperimentConfig = toml::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        ExperimentConfig::from_toml(&text)
    }

    pub fn model_kinds(&self) -> Result<Vec<ModelKind>> {
        self.models.iter().map(|m| m.parse()).collect()
    }

    pub fn strategy_kind(&self) -> Result<StrategyKind> {
        self.strategy.kind.parse()
    }

    pub fn validate(&self) -> Result<()> {
        if self.datasets.is_empty() {
            return Err(Error::InvalidConfig("at least one dataset is required".into()));
        }
        if self.models.is_empty() {
            return Err(Error::InvalidConfig("at least one model is required".into()));
        }
        if self.output_dir.as_os_str().is_empty() {
            return Err(Error::InvalidConfig("output_dir must be set".into()));
        }
        let mut names: Vec<&str> = self.datasets.iter().map(|d| d.name.as_str()).collect();
        names.sort_unstable();
        names.dedup();
        if names.len() != self.datasets.len() {
            return Err(Error::InvalidConfig("dataset names must be unique".into()));
        }
        for d in &self.datasets {
            d.format()?;
            d.label_spec()?;
        }
        self.model_kinds()?;
        self.strategy_kind()?;
        self.preprocessing.factor_policy(self.seed)?;
        match self.split.scheme.as_str() {
            "holdout" | "three_way" | "repeated_cv" => {}
            other => {
                return Err(Error::InvalidConfig(format!("unknown split scheme {other:?}")));
            }
        }
        if self.split.scheme == "repeated_cv" && (self.split.folds < 2 || self.split.repeats < 1) {
            return Err(Error::InvalidConfig(
                "repeated_cv needs folds >= 2 and repeats >= 1".into(),
            ));
        }
        for axis in &self.space.axes {
            axis.to_axis()?;
        }
        if self.output.jobs == 0 {
            return Err(Error::InvalidConfig("jobs must be at least 1".into()));
        }
        self.train.to_train_config(self.seed)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
seed = 7
output_dir = "out"
models = ["ffnn"]

[[datasets]]
name = "toy"
path = "toy.csv"
format = "csv"
label = "y"
"#;

    #[test]
    fn minimal_config_parses_with_defaults() {
        let cfg = ExperimentConfig::from_toml(MINIMAL).unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.split.scheme, "three_way");
        assert_eq!(cfg.strategy.kind, "random");
        assert_eq!(cfg.sweep.points, 208);
        assert!(cfg.output.timing);
        assert_eq!(cfg.model_kinds().unwrap(), vec![ModelKind::Ffnn]);
    }

    #[test]
    fn missing_seed_is_rejected() {
        let text = MINIMAL.replace("seed = 7\n", "");
        assert!(ExperimentConfig::from_toml(&text).is_err());
    }

    #[test]
    fn empty_dataset_list_is_a_config_error() {
        let text = r#"
seed = 1
output_dir = "out"
models = ["ffnn"]
datasets = []
"#;
        let err = ExperimentConfig::from_toml(text).unwrap_err();
        assert!(matches!(err, Error::InvalidConfig(_)));
    }

    #[test]
    fn unknown_model_or_strategy_rejected() {
        let bad_model = MINIMAL.replace("[\"ffnn\"]", "[\"cnn\"]");
        assert!(ExperimentConfig::from_toml(&bad_model).is_err());
        let bad_strategy = format!("{MINIMAL}\n[strategy]\nkind = \"bayes\"\n");
        assert!(ExperimentConfig::from_toml(&bad_strategy).is_err());
    }

    #[test]
    fn label_index_takes_precedence() {
        let text = format!("{}label_index = 0\n", MINIMAL);
        let cfg = ExperimentConfig::from_toml(&text).unwrap();
        assert_eq!(cfg.datasets[0].label_spec().unwrap(), LabelSpec::Index(0));
    }

    #[test]
    fn axis_overrides_parse_both_domains() {
        let text = format!(
            "{MINIMAL}\n[[space.axes]]\nname = \"learning_rate\"\nvalues = [0.1, 0.2]\n\n[[space.axes]]\nname = \"momentum\"\nlo = 0.0\nhi = 0.9\n"
        );
        let cfg = ExperimentConfig::from_toml(&text).unwrap();
        assert_eq!(cfg.space.axes.len(), 2);
        assert!(matches!(
            cfg.space.axes[0].to_axis().unwrap().domain,
            ParamDomain::Discrete(_)
        ));
        assert!(matches!(
            cfg.space.axes[1].to_axis().unwrap().domain,
            ParamDomain::Continuous { .. }
        ));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = format!("{MINIMAL}\nwall_clock_seed = true\n");
        assert!(ExperimentConfig::from_toml(&text).is_err());
    }
}
