//! Experiment configuration: a TOML file (or a shipped preset) plus
//! command-line overrides, resolved into one fully populated value.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use ncla_core::eval::{LogRegConfig, SplitSpec, ValidationRule, DEFAULT_REG_GRID};
use ncla_core::graph::Graph;
use ncla_core::pack::load_graph;
use ncla_core::sbm::{generate_sbm, SbmSpec};
use ncla_core::train::TrainConfig;
use serde::{Deserialize, Serialize};

pub const RESOLVED_CONFIG_FILE: &str = "resolved_config.toml";

pub const PRESETS: [(&str, &str); 6] = [
    ("cora", include_str!("../presets/cora.toml")),
    ("citeseer", include_str!("../presets/citeseer.toml")),
    ("pubmed", include_str!("../presets/pubmed.toml")),
    ("coauthor-cs", include_str!("../presets/coauthor-cs.toml")),
    ("amazon-photo", include_str!("../presets/amazon-photo.toml")),
    ("sbm", include_str!("../presets/sbm.toml")),
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dataset {
    /// Directory holding a graph pack.
    Pack(PathBuf),
    Sbm(SbmSpec),
}

impl Dataset {
    pub fn load(&self) -> Result<Graph> {
        match self {
            Dataset::Pack(dir) => load_graph(dir).with_context(|| format!("loading graph pack {}", dir.display())),
            Dataset::Sbm(spec) => Ok(generate_sbm(spec)?),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitSetting {
    pub labels_per_class: usize,
    #[serde(default = "no_validation")]
    pub validation: ValidationRule,
}

fn no_validation() -> ValidationRule {
    ValidationRule::None
}

impl SplitSetting {
    pub fn spec(&self, seed: u64) -> SplitSpec {
        SplitSpec {
            labels_per_class: self.labels_per_class,
            validation: self.validation,
            seed,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSettings {
    pub splits: Vec<SplitSetting>,
    pub n_splits: usize,
    /// First split seed; split k uses `seed + k`.
    pub seed: u64,
    pub reg_grid: Vec<f64>,
    pub default_lambda: f64,
    pub tolerance: f64,
    pub max_iter: usize,
}

impl Default for EvalSettings {
    fn default() -> Self {
        let lr = LogRegConfig::default();
        Self {
            splits: (1..=4)
                .map(|c| SplitSetting {
                    labels_per_class: c,
                    validation: ValidationRule::None,
                })
                .collect(),
            n_splits: 20,
            seed: 0,
            reg_grid: DEFAULT_REG_GRID.to_vec(),
            default_lambda: lr.default_lambda,
            tolerance: lr.tolerance,
            max_iter: lr.max_iter,
        }
    }
}

impl EvalSettings {
    pub fn logreg(&self) -> LogRegConfig {
        LogRegConfig {
            reg_grid: self.reg_grid.clone(),
            default_lambda: self.default_lambda,
            tolerance: self.tolerance,
            max_iter: self.max_iter,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.splits.is_empty() {
            bail!("eval.splits must not be empty");
        }
        if self.splits.iter().any(|s| s.labels_per_class == 0) {
            bail!("eval.splits: labels_per_class must be >= 1");
        }
        if self.n_splits == 0 {
            bail!("eval.n_splits must be >= 1");
        }
        if self.reg_grid.iter().any(|l| !(l.is_finite() && *l >= 0.0)) || !(self.default_lambda >= 0.0) {
            bail!("regularization strengths must be finite and >= 0");
        }
        if !(self.tolerance > 0.0) || self.max_iter == 0 {
            bail!("eval.tolerance must be > 0 and eval.max_iter >= 1");
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub output: PathBuf,
    pub dataset: Dataset,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub eval: EvalSettings,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    /// Reads a config file; relative paths inside it are taken relative to the file.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg = Self::from_toml(&text).with_context(|| format!("parsing config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new(""));
        if let Dataset::Pack(dir) = &mut cfg.dataset {
            if dir.is_relative() {
                *dir = base.join(&*dir);
            }
        }
        if cfg.output.is_relative() {
            cfg.output = base.join(&cfg.output);
        }
        Ok(cfg)
    }

    pub fn preset(name: &str) -> Result<Self> {
        match PRESETS.iter().find(|(n, _)| *n == name) {
            Some((_, text)) => Self::from_toml(text),
            None => bail!(
                "unknown preset {name:?}; available: {}",
                PRESETS.iter().map(|(n, _)| *n).collect::<Vec<_>>().join(", ")
            ),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        self.eval.validate()?;
        if let Dataset::Sbm(spec) = &self.dataset {
            spec.validate()?;
        }
        Ok(())
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string_pretty(self)?)
    }

    /// Writes the resolved configuration into `dir`.
    pub fn echo(&self, dir: &Path) -> Result<()> {
        write_text(&dir.join(RESOLVED_CONFIG_FILE), &self.to_toml()?)
    }
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}
