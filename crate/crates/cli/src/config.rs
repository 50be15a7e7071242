//! Experiment configuration: a single TOML document with strict schema
//! validation. Unknown keys are rejected everywhere so that a typo in a
//! sweep axis cannot silently change what gets measured.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use stochdepth::data::{holdout_split, load_image_csv, make_spirals, split_off, standardize};
use stochdepth::stochastic::DecayRule;
use stochdepth::{
    AugmentConfig, Dataset, DepthMode, Error, FitConfig, LrSchedule, NetworkSpec, Result, Split,
    StreamSet, SurvivalSchedule,
};

/// Root of the experiment TOML file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
    pub dataset: DatasetConfig,
    pub network: NetworkSpec,
    pub mode: ModeConfig,
    #[serde(default)]
    pub optimizer: OptimizerConfig,
    pub lr: LrSchedule,
    pub train: TrainParams,
    #[serde(default)]
    pub augment: AugmentConfig,
    #[serde(default)]
    pub sweep: Option<SweepGrid>,
}

/// Where the samples come from and how they are split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetConfig {
    /// Synthetic interleaved spiral arms (features = 2).
    Spirals {
        n_per_class: usize,
        classes: usize,
        noise_sigma: f64,
        val_fraction: f64,
        test_fraction: f64,
        #[serde(default = "default_true")]
        standardize: bool,
    },
    /// Headerless CSV of `label, pixels…` rows (see `load_image_csv`).
    ImageCsv {
        path: PathBuf,
        channels: usize,
        height: usize,
        width: usize,
        num_classes: usize,
        val_fraction: f64,
        test_fraction: f64,
        #[serde(default = "default_true")]
        standardize: bool,
    },
}

fn default_true() -> bool {
    true
}

impl DatasetConfig {
    pub fn num_classes(&self) -> usize {
        match self {
            DatasetConfig::Spirals { classes, .. } => *classes,
            DatasetConfig::ImageCsv { num_classes, .. } => *num_classes,
        }
    }

    /// Generates or loads the dataset, carves out test and val splits
    /// (in that order, both from the train pool), and standardizes with
    /// train-split statistics. Consumes only the data stream.
    pub fn build(&self, streams: &mut StreamSet) -> Result<Dataset> {
        let (ds, val_fraction, test_fraction, standardize_flag) = match self {
            DatasetConfig::Spirals {
                n_per_class,
                classes,
                noise_sigma,
                val_fraction,
                test_fraction,
                standardize,
            } => (
                make_spirals(*n_per_class, *classes, *noise_sigma, &mut streams.data)?,
                *val_fraction,
                *test_fraction,
                *standardize,
            ),
            DatasetConfig::ImageCsv {
                path,
                channels,
                height,
                width,
                num_classes,
                val_fraction,
                test_fraction,
                standardize,
            } => (
                load_image_csv(path, *channels, *height, *width, *num_classes)?,
                *val_fraction,
                *test_fraction,
                *standardize,
            ),
        };
        let ds = split_off(&ds, test_fraction, Split::Test, &mut streams.data)?;
        let ds = holdout_split(&ds, val_fraction, &mut streams.data)?;
        if standardize_flag {
            let (ds, _, _) = standardize(&ds)?;
            Ok(ds)
        } else {
            Ok(ds)
        }
    }
}

/// Depth mode selector as written in config files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeKind {
    Constant,
    Stochastic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModeConfig {
    pub kind: ModeKind,
    #[serde(default)]
    pub rule: Option<DecayRule>,
    #[serde(default)]
    pub p_l: Option<f64>,
}

impl ModeConfig {
    pub fn constant() -> Self {
        ModeConfig {
            kind: ModeKind::Constant,
            rule: None,
            p_l: None,
        }
    }

    pub fn stochastic(rule: DecayRule, p_l: f64) -> Self {
        ModeConfig {
            kind: ModeKind::Stochastic,
            rule: Some(rule),
            p_l: Some(p_l),
        }
    }

    /// Resolves to a concrete mode for a network with `depth` blocks.
    pub fn to_depth_mode(&self, depth: usize) -> Result<DepthMode> {
        match self.kind {
            ModeKind::Constant => {
                if self.rule.is_some() || self.p_l.is_some() {
                    return Err(Error::Config(
                        "constant mode does not take `rule` or `p_l`".to_string(),
                    ));
                }
                Ok(DepthMode::Constant)
            }
            ModeKind::Stochastic => {
                let rule = self.rule.ok_or_else(|| {
                    Error::Config("stochastic mode requires `rule`".to_string())
                })?;
                let p_l = self.p_l.ok_or_else(|| {
                    Error::Config("stochastic mode requires `p_l`".to_string())
                })?;
                Ok(DepthMode::Stochastic(SurvivalSchedule::new(
                    rule, p_l, depth,
                )?))
            }
        }
    }
}

/// SGD hyperparameters (defaults: momentum 0.9, weight decay 1e-4,
/// Nesterov on).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerConfig {
    pub momentum: f64,
    pub weight_decay: f64,
    pub nesterov: bool,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            momentum: 0.9,
            weight_decay: 1e-4,
            nesterov: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainParams {
    pub epochs: usize,
    pub batch_size: usize,
}

/// Axes of a sweep: every combination of rule × p_L × depth × seed runs
/// as one cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepGrid {
    pub p_l: Vec<f64>,
    pub rules: Vec<DecayRule>,
    #[serde(default)]
    pub depths: Option<Vec<usize>>,
    pub seeds: Vec<u64>,
}

impl SweepGrid {
    pub fn validate(&self) -> Result<()> {
        if self.p_l.is_empty() || self.rules.is_empty() || self.seeds.is_empty() {
            return Err(Error::Config(
                "sweep axes p_l, rules, and seeds must be non-empty".to_string(),
            ));
        }
        if let Some(depths) = &self.depths {
            if depths.is_empty() {
                return Err(Error::Config(
                    "sweep depths, when given, must be non-empty".to_string(),
                ));
            }
            if depths.contains(&0) {
                return Err(Error::Config("sweep depths must be positive".to_string()));
            }
        }
        for &p in &self.p_l {
            if !(p > 0.0 && p <= 1.0) {
                return Err(Error::Config(format!(
                    "sweep p_l values must lie in (0, 1], got {p}"
                )));
            }
        }
        Ok(())
    }
}

impl ExperimentConfig {
    /// Parses and validates a TOML config file.
    pub fn load(path: &Path) -> Result<Self> {
        let body = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let cfg: ExperimentConfig = toml::from_str(&body)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_toml_str(body: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            toml::from_str(body).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.network.validate()?;
        self.lr.validate()?;
        // Resolves schedule construction errors (p_l range etc.) early.
        let _ = self.mode.to_depth_mode(self.network.depth())?;
        if self.dataset.num_classes() != self.network.num_classes {
            return Err(Error::Config(format!(
                "dataset has {} classes but network outputs {}",
                self.dataset.num_classes(),
                self.network.num_classes
            )));
        }
        if self.train.epochs == 0 {
            return Err(Error::Config("train.epochs must be at least 1".to_string()));
        }
        if self.train.batch_size < 2 {
            return Err(Error::Config(
                "train.batch_size must be at least 2".to_string(),
            ));
        }
        if self.augment.is_enabled()
            && matches!(self.dataset, DatasetConfig::Spirals { .. })
        {
            return Err(Error::Config(
                "augmentation applies to image datasets only".to_string(),
            ));
        }
        if !(0.0..1.0).contains(&self.optimizer.momentum) {
            return Err(Error::Config(format!(
                "optimizer.momentum must lie in [0, 1), got {}",
                self.optimizer.momentum
            )));
        }
        if !(self.optimizer.weight_decay.is_finite() && self.optimizer.weight_decay >= 0.0) {
            return Err(Error::Config(format!(
                "optimizer.weight_decay must be non-negative, got {}",
                self.optimizer.weight_decay
            )));
        }
        if let Some(grid) = &self.sweep {
            grid.validate()?;
        }
        Ok(())
    }

    /// The per-run training settings implied by this config.
    pub fn fit_config(&self) -> Result<FitConfig> {
        Ok(FitConfig {
            epochs: self.train.epochs,
            batch_size: self.train.batch_size,
            mode: self.mode.to_depth_mode(self.network.depth())?,
            lr: self.lr.clone(),
            momentum: self.optimizer.momentum,
            weight_decay: self.optimizer.weight_decay,
            nesterov: self.optimizer.nesterov,
            augment: self.augment,
        })
    }
}

/// Returns a copy of `spec` with `depth` total blocks distributed evenly
/// across its groups (sweep depth axis).
pub fn spec_with_depth(spec: &NetworkSpec, depth: usize) -> Result<NetworkSpec> {
    let groups = spec.groups.len();
    if depth == 0 || depth % groups != 0 {
        return Err(Error::Config(format!(
            "sweep depth {depth} must be a positive multiple of the {groups} network group(s)"
        )));
    }
    let mut out = spec.clone();
    for g in &mut out.groups {
        g.blocks = depth / groups;
    }
    out.validate()?;
    Ok(out)
}
