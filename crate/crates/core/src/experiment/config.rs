use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{Normalization, RatingScale};
use crate::error::{Error, Result};
use crate::training::{GridSpec, InitMode, TrainConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetRole {
    /// A single-hypernym dataset.
    PerHypernym,
    /// The pooled dataset whose best cell is transferred to test datasets.
    All,
    /// Scored with the `all` models as well as trained on its own.
    TransferTest,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetEntry {
    pub name: String,
    pub path: PathBuf,
    pub role: DatasetRole,
    /// Overrides the experiment-wide rating scale.
    #[serde(default)]
    pub scale: Option<RatingScale>,
    #[serde(default)]
    pub pos_filter: Option<String>,
    #[serde(default)]
    pub contextualized: bool,
    /// Whether to run the grid on this dataset.
    #[serde(default = "yes")]
    pub train: bool,
}

fn yes() -> bool {
    true
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("results")
}

/// Experiment description, read from a TOML document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub embeddings_path: PathBuf,
    /// Label for the embedding source in reports; defaults to the file stem.
    #[serde(default)]
    pub representation: Option<String>,
    pub dataset_paths: Vec<DatasetEntry>,
    #[serde(default)]
    pub grid: GridSpec,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub trace: bool,
    #[serde(default)]
    pub scale: RatingScale,
    #[serde(default)]
    pub normalization: Normalization,
    #[serde(default)]
    pub max_epochs: Option<usize>,
    #[serde(default)]
    pub init_mode: Option<InitMode>,
    #[serde(default)]
    pub early_stop_loss_gate: Option<f64>,
    #[serde(default)]
    pub early_stop_patience: Option<usize>,
    /// Write per-pair human/model score tables.
    #[serde(default)]
    pub dump_distribution: bool,
    /// Write `BᵀB` next to each persisted factor.
    #[serde(default)]
    pub export_gram: bool,
}

impl ExperimentConfig {
    /// Parses a config file; relative paths are resolved against its
    /// directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let mut cfg: Self =
            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.embeddings_path);
        fix(&mut self.output_dir);
        for d in &mut self.dataset_paths {
            fix(&mut d.path);
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dataset_paths.is_empty() {
            return Err(Error::Config("no datasets configured".into()));
        }
        self.grid.validate()?;
        let mut names = HashSet::new();
        for d in &self.dataset_paths {
            if d.name.is_empty() || d.name.contains(['/', '\\']) {
                return Err(Error::Config(format!("invalid dataset name `{}`", d.name)));
            }
            if !names.insert(d.name.as_str()) {
                return Err(Error::Config(format!("dataset name `{}` used twice", d.name)));
            }
        }
        let all = self.dataset_paths.iter().filter(|d| d.role == DatasetRole::All);
        let all_count = all.clone().count();
        if all_count > 1 {
            return Err(Error::Config("at most one dataset may have the `all` role".into()));
        }
        let has_transfer = self.dataset_paths.iter().any(|d| d.role == DatasetRole::TransferTest);
        if has_transfer && all_count == 0 {
            return Err(Error::Config(
                "transfer-test datasets need a dataset with the `all` role".into(),
            ));
        }
        if has_transfer && all.clone().any(|d| !d.train) {
            return Err(Error::Config(
                "the `all` dataset must be trained when transfer tests are configured".into(),
            ));
        }
        for &(lr, k) in &self.grid.cells() {
            self.train_config(lr, k).validate()?;
        }
        Ok(())
    }

    /// Training configuration for one grid cell.
    pub fn train_config(&self, learning_rate: f64, folds: usize) -> TrainConfig {
        let defaults = TrainConfig::default();
        TrainConfig {
            learning_rate,
            folds,
            seed: self.seed,
            max_epochs: self.max_epochs.unwrap_or(defaults.max_epochs),
            init_mode: self.init_mode.unwrap_or(defaults.init_mode),
            early_stop_loss_gate: self.early_stop_loss_gate.unwrap_or(defaults.early_stop_loss_gate),
            early_stop_patience: self.early_stop_patience.unwrap_or(defaults.early_stop_patience),
            ..defaults
        }
    }

    pub fn representation(&self) -> String {
        self.representation.clone().unwrap_or_else(|| {
            self.embeddings_path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default()
        })
    }
}
