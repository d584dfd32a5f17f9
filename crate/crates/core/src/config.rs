//! Experiment configuration file (TOML) and output-path resolution.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{AblationKind, ExperimentSpec};
use crate::oracle::GcnOracleConfig;
use crate::sampler::SamplerConfig;
use crate::synth::TreeCyclesConfig;
use crate::training::TrainConfig;

pub const CONFIG_SCHEMA_VERSION: u32 = 1;

/// Environment variable naming the root that relative output paths resolve
/// against.
pub const OUTPUT_ROOT_VAR: &str = "RSGG_OUTPUT_ROOT";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    #[serde(default)]
    pub dataset: DatasetBlock,
    #[serde(default)]
    pub oracle: OracleBlock,
    #[serde(default)]
    pub training: TrainConfig,
    #[serde(default)]
    pub sampler: SamplerConfig,
    #[serde(default)]
    pub evaluation: EvaluationBlock,
    #[serde(default)]
    pub ablation: AblationBlock,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetBlock {
    /// Dataset file, relative to the output directory unless absolute.
    pub path: PathBuf,
    /// Generator parameters used by `gen-data`.
    pub synth: TreeCyclesConfig,
}

impl Default for DatasetBlock {
    fn default() -> Self {
        Self {
            path: PathBuf::from("dataset.txt"),
            synth: TreeCyclesConfig::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OracleChoice {
    #[default]
    ExactCycle,
    TrainedGcn,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OracleBlock {
    pub kind: OracleChoice,
    pub gcn: GcnOracleConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvaluationBlock {
    pub folds: usize,
    pub fold_seed: u64,
    pub output_dir: PathBuf,
}

impl Default for EvaluationBlock {
    fn default() -> Self {
        Self {
            folds: 10,
            fold_seed: 0,
            output_dir: PathBuf::from("rsgg-out"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AblationBlock {
    pub kind: AblationKind,
    pub grid: Vec<usize>,
}

impl Default for AblationBlock {
    fn default() -> Self {
        Self {
            kind: AblationKind::CycleSize,
            grid: vec![3, 12, 28],
        }
    }
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            schema_version: CONFIG_SCHEMA_VERSION,
            dataset: DatasetBlock::default(),
            oracle: OracleBlock::default(),
            training: TrainConfig::default(),
            sampler: SamplerConfig::default(),
            evaluation: EvaluationBlock::default(),
            ablation: AblationBlock::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str, path: &Path) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: e
                .span()
                .map_or(0, |s| text[..s.start].lines().count().max(1)),
            msg: e.message().to_string(),
        })?;
        if cfg.schema_version != CONFIG_SCHEMA_VERSION {
            return Err(Error::SchemaVersion {
                found: cfg.schema_version.to_string(),
                expected: CONFIG_SCHEMA_VERSION.to_string(),
            });
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text, path)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration is always serializable")
    }

    pub fn validate(&self) -> Result<()> {
        self.dataset.synth.validate()?;
        self.training.validate()?;
        self.sampler.validate()?;
        if self.evaluation.folds < 2 {
            return Err(Error::Config("evaluation.folds must be at least 2".into()));
        }
        Ok(())
    }

    /// Replaces every seed with `seed`.
    pub fn override_seed(&mut self, seed: u64) {
        self.dataset.synth.seed = seed;
        self.oracle.gcn.seed = seed;
        self.training.seed = seed;
        self.sampler.seed = seed;
        self.evaluation.fold_seed = seed;
    }

    /// Output directory, resolved against the output root when relative.
    pub fn output_dir(&self) -> PathBuf {
        resolve_output(&self.evaluation.output_dir)
    }

    /// Dataset path, resolved against the output directory when relative.
    pub fn dataset_path(&self) -> PathBuf {
        if self.dataset.path.is_absolute() {
            self.dataset.path.clone()
        } else {
            self.output_dir().join(&self.dataset.path)
        }
    }

    pub fn experiment_spec(&self) -> ExperimentSpec {
        ExperimentSpec {
            data: self.dataset.synth.clone(),
            folds: self.evaluation.folds,
            fold_seed: self.evaluation.fold_seed,
            train: self.training.clone(),
            sampler: self.sampler.clone(),
        }
    }
}

/// Resolves `path` against `$RSGG_OUTPUT_ROOT` when it is relative and the
/// variable is set.
pub fn resolve_output(path: &Path) -> PathBuf {
    if path.is_absolute() {
        return path.to_path_buf();
    }
    match std::env::var_os(OUTPUT_ROOT_VAR) {
        Some(root) if !root.is_empty() => PathBuf::from(root).join(path),
        _ => path.to_path_buf(),
    }
}
