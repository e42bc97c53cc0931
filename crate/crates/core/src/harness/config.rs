//! Run configuration: one TOML file plus `section.key=value` overrides.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::classifier::{
    ClassifierBackend, ClassifierTrainConfig, CommandClassifier, MockClassifier, SelectionMetric,
};
use crate::corpus::{BenchmarkSchema, CorpusFormat};
use crate::dataset::FilterPolicy;
use crate::error::{Error, Result};
use crate::infill::{CommandBackend, DecodeConfig, MockBackend, Seq2SeqBackend, TrainConfig};
use crate::masker::Method;
use crate::metrics::{similarity_scorer, SimilarityScorer};
use crate::seed::sha256_hex;
use crate::spanner::{Annotator, AnnotatorRegistry, PrecomputedAnnotator, Unit};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub seed: u64,
    pub corpus: CorpusConfig,
    pub masking: MaskingConfig,
    pub infiller: InfillerConfig,
    pub dataset: FilterPolicy,
    pub classifier: ClassifierConfig,
    pub evaluation: EvaluationConfig,
    pub sweep: SweepConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusConfig {
    pub path: Option<PathBuf>,
    pub format: CorpusFormat,
    /// Keep only the first `limit` pairs.
    pub limit: Option<usize>,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        CorpusConfig {
            path: None,
            format: CorpusFormat::JsonlPairs,
            limit: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MaskingConfig {
    pub unit: Unit,
    pub annotator: String,
    /// JSONL of precomputed mentions; registers the `precomputed` annotator.
    pub annotations: Option<PathBuf>,
    pub method: Method,
    pub gamma_a: f64,
    pub gamma_s: f64,
    /// Negatives generated per generation-half pair.
    pub n_samples: u32,
}

impl Default for MaskingConfig {
    fn default() -> Self {
        MaskingConfig {
            unit: Unit::NpEnt,
            annotator: "rules".into(),
            annotations: None,
            method: Method::Mfma,
            gamma_a: 0.6,
            gamma_s: 0.8,
            n_samples: 1,
        }
    }
}

impl MaskingConfig {
    pub fn build_annotator(&self) -> Result<Arc<dyn Annotator>> {
        let mut registry = AnnotatorRegistry::default();
        if let Some(path) = &self.annotations {
            registry.register(Arc::new(PrecomputedAnnotator::load(path)?));
        }
        registry.get(&self.annotator)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InfillerConfig {
    /// `mock` or `command`.
    pub backend: String,
    pub command: Option<CommandBackend>,
    pub train: TrainConfig,
    pub decode: DecodeConfig,
}

impl Default for InfillerConfig {
    fn default() -> Self {
        InfillerConfig {
            backend: MockBackend::NAME.into(),
            command: None,
            train: TrainConfig::default(),
            decode: DecodeConfig::default(),
        }
    }
}

impl InfillerConfig {
    pub fn build(&self) -> Result<Box<dyn Seq2SeqBackend>> {
        match self.backend.as_str() {
            MockBackend::NAME => Ok(Box::new(MockBackend)),
            "command" => {
                let cmd = self.command.clone().ok_or_else(|| {
                    Error::Config("infiller backend 'command' needs [infiller.command]".into())
                })?;
                Ok(Box::new(cmd))
            }
            other => Err(Error::Unknown {
                kind: "infiller backend",
                value: other.into(),
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifierConfig {
    /// `mock` or `command`.
    pub backend: String,
    pub command: Option<CommandClassifier>,
    pub train: ClassifierTrainConfig,
    pub threshold: f64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        ClassifierConfig {
            backend: MockClassifier::NAME.into(),
            command: None,
            train: ClassifierTrainConfig::default(),
            threshold: crate::classifier::DEFAULT_THRESHOLD,
        }
    }
}

impl ClassifierConfig {
    pub fn build(&self) -> Result<Box<dyn ClassifierBackend>> {
        match self.backend.as_str() {
            MockClassifier::NAME => Ok(Box::new(MockClassifier::default())),
            "command" => {
                let cmd = self.command.clone().ok_or_else(|| {
                    Error::Config("classifier backend 'command' needs [classifier.command]".into())
                })?;
                Ok(Box::new(cmd))
            }
            other => Err(Error::Unknown {
                kind: "classifier backend",
                value: other.into(),
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchmarkSource {
    /// Report name; defaults to the schema id.
    pub name: Option<String>,
    pub path: PathBuf,
    pub schema: BenchmarkSchema,
}

impl BenchmarkSource {
    pub fn display_name(&self) -> String {
        self.name.clone().unwrap_or_else(|| self.schema.to_string())
    }
}

/// Pre-computed scores of an external metric on one benchmark.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaselineSource {
    pub name: String,
    /// Name of the benchmark the scores belong to.
    pub benchmark: String,
    pub path: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluationConfig {
    /// Binary-labeled set used for checkpoint selection and sweep scores.
    pub validation: Option<BenchmarkSource>,
    pub benchmarks: Vec<BenchmarkSource>,
    pub baselines: Vec<BaselineSource>,
    /// Similarity scorer for distance and diversity.
    pub similarity: String,
    pub embeddings: Option<PathBuf>,
    pub selection_metric: SelectionMetric,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        EvaluationConfig {
            validation: None,
            benchmarks: Vec::new(),
            baselines: Vec::new(),
            similarity: "token-f1".into(),
            embeddings: None,
            selection_metric: SelectionMetric::BalancedAccuracy,
        }
    }
}

impl EvaluationConfig {
    pub fn build_scorer(&self) -> Result<Box<dyn SimilarityScorer>> {
        similarity_scorer(&self.similarity, self.embeddings.as_deref())
    }
}

pub const DEFAULT_GRID: [f64; 5] = [0.2, 0.4, 0.6, 0.8, 1.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub gamma_a: Vec<f64>,
    pub gamma_s: Vec<f64>,
    /// Defaults to the masking unit.
    pub unit: Option<Unit>,
    pub method: Method,
    /// Samples per pair used for the diversity score.
    pub diversity_samples: u32,
    pub parallel: bool,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            gamma_a: DEFAULT_GRID.to_vec(),
            gamma_s: DEFAULT_GRID.to_vec(),
            unit: None,
            method: Method::Mfma,
            diversity_samples: 4,
            parallel: true,
        }
    }
}

fn check_ratio(name: &str, v: f64) -> Result<()> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(Error::Config(format!("{name} = {v} outside [0, 1]")))
    }
}

impl Config {
    pub fn validate(&self) -> Result<()> {
        check_ratio("masking.gamma_a", self.masking.gamma_a)?;
        check_ratio("masking.gamma_s", self.masking.gamma_s)?;
        check_ratio("classifier.threshold", self.classifier.threshold)?;
        check_ratio(
            "dataset.min_edit_distinctness",
            self.dataset.min_edit_distinctness,
        )?;
        if self.masking.n_samples == 0 {
            return Err(Error::Config("masking.n_samples must be at least 1".into()));
        }
        if self.classifier.train.epochs == 0 {
            return Err(Error::Config(
                "classifier.train.epochs must be at least 1".into(),
            ));
        }
        if self.sweep.gamma_a.is_empty() || self.sweep.gamma_s.is_empty() {
            return Err(Error::Config("sweep grid must not be empty".into()));
        }
        for &g in &self.sweep.gamma_a {
            check_ratio("sweep.gamma_a", g)?;
        }
        for &g in &self.sweep.gamma_s {
            check_ratio("sweep.gamma_s", g)?;
        }
        if self.sweep.diversity_samples < 2 {
            return Err(Error::Config(
                "sweep.diversity_samples must be at least 2".into(),
            ));
        }
        Ok(())
    }

    /// Parse TOML text, apply overrides and validate.
    pub fn from_toml_str(text: &str, overrides: &[String]) -> Result<Config> {
        let mut table: toml::Table =
            toml::from_str(text).map_err(|e| Error::Config(format!("config: {e}")))?;
        for item in overrides {
            apply_override(&mut table, item)?;
        }
        let config: Config = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    /// Load a config file; `None` starts from defaults. Relative paths are
    /// interpreted against the working directory.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Config> {
        let text = match path {
            Some(p) => fs::read_to_string(p).map_err(|e| Error::io(p, e))?,
            None => String::new(),
        };
        Self::from_toml_str(&text, overrides)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// SHA-256 over the canonical JSON of the fully resolved config.
    pub fn fingerprint(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        sha256_hex(&bytes)
    }
}

/// Apply one `section.key=value` override. The value is read as a TOML value
/// when it parses as one and as a bare string otherwise.
pub fn apply_override(table: &mut toml::Table, item: &str) -> Result<()> {
    let (key, raw) = item
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override '{item}' is not key=value")))?;
    let path: Vec<&str> = key.trim().split('.').collect();
    if path.iter().any(|p| p.is_empty()) {
        return Err(Error::Config(format!("bad override key '{key}'")));
    }
    let raw = raw.trim();
    let value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let (last, parents) = path.split_last().expect("non-empty path");
    let mut cur = table;
    for part in parents {
        let entry = cur
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("override '{key}': '{part}' is not a section")))?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}
