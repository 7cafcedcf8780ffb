use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use trajmodes::evaluation::{CvStrategy, DEFAULT_FOLDS};
use trajmodes::features::DEFAULT_CHANNELS;
use trajmodes::forest::ClassifierConfig;
use trajmodes::kinematics::Channel;
use trajmodes::preprocess::NoisePolicy;
use trajmodes::selection::SelectionMethod;

use crate::UsageError;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataPaths {
    /// GeoLife root for `ingest`.
    pub raw: Option<PathBuf>,
    pub canonical: Option<PathBuf>,
    pub dataset: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CvConfig {
    pub strategy: CvStrategy,
    pub folds: usize,
    pub seed: u64,
}

impl Default for CvConfig {
    fn default() -> Self {
        Self {
            strategy: CvStrategy::Random,
            folds: DEFAULT_FOLDS,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelectionConfig {
    pub method: SelectionMethod,
    /// Wrapper search depth; all features when absent.
    pub max_k: Option<usize>,
    pub svg: bool,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        Self {
            method: SelectionMethod::Importance,
            max_k: None,
            svg: true,
        }
    }
}

/// Everything that determines a run. Loaded from TOML; command-line flags
/// override individual fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub data: DataPaths,
    /// `raw`, `dabiri`, `endo` or a JSON mapping file.
    pub label_scheme: String,
    pub channels: Vec<Channel>,
    pub noise: NoisePolicy,
    /// Feature subset file from `select`; every feature when absent.
    pub feature_subset: Option<PathBuf>,
    pub classifier: ClassifierConfig,
    pub cv: CvConfig,
    pub selection: SelectionConfig,
    /// Accuracy to test the fold scores against in `evaluate`.
    pub baseline: Option<f64>,
    pub out: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            data: DataPaths::default(),
            label_scheme: "raw".into(),
            channels: DEFAULT_CHANNELS.to_vec(),
            noise: NoisePolicy::Off,
            feature_subset: None,
            classifier: ClassifierConfig::default(),
            cv: CvConfig::default(),
            selection: SelectionConfig::default(),
            baseline: None,
            out: PathBuf::from("out"),
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| UsageError(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| UsageError(format!("invalid config {}: {e}", path.display())).into())
    }

    pub fn validate(&self) -> Result<()> {
        if self.channels.is_empty() {
            return Err(UsageError("channel set is empty".into()).into());
        }
        if self.cv.folds < 2 {
            return Err(UsageError(format!("cv.folds must be at least 2, got {}", self.cv.folds)).into());
        }
        if let Some(b) = self.baseline {
            if !(0.0..=1.0).contains(&b) {
                return Err(UsageError(format!("baseline must be an accuracy in [0, 1], got {b}")).into());
            }
        }
        Ok(())
    }
}

fn hash_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(hex::encode(Sha256::digest(bytes)))
}

/// SHA-256 over the canonical JSON of the configuration, the command name
/// and the contents of its input files. File locations are left out so a
/// run reproduces the same fingerprint in another directory.
pub fn fingerprint(config: &ExperimentConfig, command: &str, inputs: &[&Path]) -> Result<String> {
    let mut settings = config.clone();
    settings.data = DataPaths::default();
    settings.feature_subset = None;
    settings.out = PathBuf::new();
    let mut h = Sha256::new();
    h.update(command.as_bytes());
    h.update([0]);
    h.update(serde_json::to_vec(&settings)?);
    for input in inputs {
        h.update([0]);
        h.update(hash_file(input)?.as_bytes());
    }
    Ok(hex::encode(h.finalize()))
}
