//! Binary factual-consistency classifier: input encoding, training through a
//! backend, checkpoint selection and scoring.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{read_jsonl, write_jsonl, BenchmarkRecord};
use crate::dataset::LabeledExample;
use crate::error::{Error, Result};
use crate::infill::{path_arg, run_command};
use crate::label::Label;
use crate::metrics::{balanced_accuracy, macro_f1};
use crate::seed::sha256_hex;
use crate::text::{content_words, whitespace_tokens};

/// Marker placed between summary and article.
pub const SEPARATOR: &str = "<sep>";

pub const DEFAULT_THRESHOLD: f64 = 0.5;

/// `"<summary> <sep> <article>"`, keeping at most `max_input_len` whitespace
/// tokens. Only the article tail is cut; the summary is always kept whole.
pub fn encode_pair(summary: &str, article: &str, max_input_len: usize) -> String {
    let summary_len = whitespace_tokens(summary).len();
    let budget = max_input_len.saturating_sub(summary_len + 1);
    let tokens = whitespace_tokens(article);
    let article = if tokens.len() <= budget {
        article
    } else if budget == 0 {
        ""
    } else {
        &article[..tokens[budget - 1].1]
    };
    format!("{summary} {SEPARATOR} {article}")
}

/// Inverse of [`encode_pair`] for texts without the separator literal.
pub fn decode_pair(encoded: &str) -> Option<(&str, &str)> {
    let marker = format!(" {SEPARATOR} ");
    let pos = encoded.find(&marker)?;
    Some((&encoded[..pos], &encoded[pos + marker.len()..]))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClassifierTrainConfig {
    pub epochs: u32,
    pub lr: f64,
    pub batch: u32,
}

impl Default for ClassifierTrainConfig {
    fn default() -> Self {
        ClassifierTrainConfig {
            epochs: 5,
            lr: 2e-5,
            batch: 96,
        }
    }
}

/// Probability of the consistent label, with the label it implies.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyScore {
    pub confidence: f64,
    pub label: Label,
}

impl ConsistencyScore {
    /// Consistent iff `confidence >= threshold`.
    pub fn new(confidence: f64, threshold: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&confidence) {
            return Err(Error::Backend(format!(
                "confidence {confidence} outside [0, 1]"
            )));
        }
        let label = if confidence >= threshold {
            Label::Consistent
        } else {
            Label::Inconsistent
        };
        Ok(ConsistencyScore { confidence, label })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HandleState {
    Weights(Vec<f64>),
    Path(PathBuf),
}

/// One trained checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierHandle {
    pub backend: String,
    /// 1-based epoch the checkpoint was taken after.
    pub checkpoint: u32,
    pub state: HandleState,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassifierInfo {
    pub name: String,
    pub max_input_len: u32,
}

pub trait ClassifierBackend: Send + Sync {
    fn info(&self) -> ClassifierInfo;

    /// Train on encoded inputs and return one handle per epoch, in order.
    fn train(
        &self,
        examples: &[(String, Label)],
        config: &ClassifierTrainConfig,
        work_dir: &Path,
    ) -> Result<Vec<ClassifierHandle>>;

    /// Confidence of the consistent label for each encoded input.
    fn score_batch(&self, handle: &ClassifierHandle, inputs: &[String]) -> Result<Vec<f64>>;
}

/// Lexical-overlap features of an encoded pair: summary unigram precision,
/// bigram precision and the share of capitalized or numeric summary words
/// that the article never mentions.
pub fn overlap_features(encoded: &str) -> [f64; 3] {
    let (summary, article) = decode_pair(encoded).unwrap_or((encoded, ""));
    let sw = content_words(summary);
    let aw = content_words(article);
    if sw.is_empty() {
        return [0.0, 0.0, 0.0];
    }
    let article_set: std::collections::HashSet<&str> = aw.iter().map(String::as_str).collect();
    let article_bigrams: std::collections::HashSet<(&str, &str)> = aw
        .windows(2)
        .map(|w| (w[0].as_str(), w[1].as_str()))
        .collect();
    let unigram = sw
        .iter()
        .filter(|w| article_set.contains(w.as_str()))
        .count() as f64
        / sw.len() as f64;
    let bigram = if sw.len() < 2 {
        unigram
    } else {
        sw.windows(2)
            .filter(|w| article_bigrams.contains(&(w[0].as_str(), w[1].as_str())))
            .count() as f64
            / (sw.len() - 1) as f64
    };
    let salient: Vec<String> = summary
        .split_whitespace()
        .filter(|w| w.starts_with(|c: char| c.is_uppercase() || c.is_ascii_digit()))
        .flat_map(content_words)
        .collect();
    let novel = if salient.is_empty() {
        0.0
    } else {
        salient
            .iter()
            .filter(|w| !article_set.contains(w.as_str()))
            .count() as f64
            / salient.len() as f64
    };
    [unigram, bigram, novel]
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Logistic regression over [`overlap_features`], fitted by L2-regularized
/// Newton (IRLS) steps from zero weights. One step per epoch; each step's
/// weights become a checkpoint. Learning rate and batch size are ignored.
#[derive(Debug, Clone, Copy)]
pub struct MockClassifier {
    pub l2: f64,
}

impl Default for MockClassifier {
    fn default() -> Self {
        MockClassifier { l2: 1.0 }
    }
}

impl MockClassifier {
    pub const NAME: &'static str = "mock";

    fn design(inputs: &[String]) -> Vec<[f64; 4]> {
        inputs
            .par_iter()
            .map(|t| {
                let [a, b, c] = overlap_features(t);
                [1.0, a, b, c]
            })
            .collect()
    }

    fn weights(handle: &ClassifierHandle) -> Result<&[f64]> {
        match &handle.state {
            HandleState::Weights(w) if handle.backend == Self::NAME && w.len() == 4 => Ok(w),
            _ => Err(Error::Backend(format!(
                "handle from backend '{}' cannot be scored by '{}'",
                handle.backend,
                Self::NAME
            ))),
        }
    }
}

impl ClassifierBackend for MockClassifier {
    fn info(&self) -> ClassifierInfo {
        ClassifierInfo {
            name: Self::NAME.into(),
            max_input_len: 512,
        }
    }

    fn train(
        &self,
        examples: &[(String, Label)],
        config: &ClassifierTrainConfig,
        _work_dir: &Path,
    ) -> Result<Vec<ClassifierHandle>> {
        let texts: Vec<String> = examples.iter().map(|(t, _)| t.clone()).collect();
        let x = Self::design(&texts);
        let y: Vec<f64> = examples
            .iter()
            .map(|(_, l)| if *l == Label::Consistent { 1.0 } else { 0.0 })
            .collect();
        let mut w = DVector::<f64>::zeros(4);
        let mut handles = Vec::with_capacity(config.epochs as usize);
        for epoch in 1..=config.epochs {
            let mut hessian = DMatrix::<f64>::identity(4, 4) * self.l2;
            let mut grad = -&w * self.l2;
            for (row, &yi) in x.iter().zip(&y) {
                let xi = DVector::from_column_slice(row);
                let p = sigmoid(xi.dot(&w));
                grad += &xi * (yi - p);
                hessian += &xi * xi.transpose() * (p * (1.0 - p));
            }
            let step = hessian
                .cholesky()
                .ok_or_else(|| Error::Backend("singular Hessian in mock classifier".into()))?
                .solve(&grad);
            w += step;
            handles.push(ClassifierHandle {
                backend: Self::NAME.into(),
                checkpoint: epoch,
                state: HandleState::Weights(w.iter().copied().collect()),
            });
        }
        Ok(handles)
    }

    fn score_batch(&self, handle: &ClassifierHandle, inputs: &[String]) -> Result<Vec<f64>> {
        let w = Self::weights(handle)?;
        Ok(Self::design(inputs)
            .iter()
            .map(|row| sigmoid(row.iter().zip(w).map(|(a, b)| a * b).sum()))
            .collect())
    }
}

/// Adapter for an external classifier program.
///
/// ```text
/// <program> <args...> train <examples.jsonl> <config.json> <out_dir>
/// <program> <args...> score <checkpoint_dir> <inputs.jsonl> <outputs.jsonl>
/// ```
///
/// Training examples are `{"text", "label"}` lines. After training the program
/// must leave one `checkpoint-<epoch>` directory per epoch in `out_dir`. Score
/// inputs are `{"id", "text"}` lines and outputs `{"id", "confidence"}` lines.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommandClassifier {
    pub name: String,
    pub program: String,
    #[serde(default)]
    pub args: Vec<String>,
    #[serde(default = "default_max_input_len")]
    pub max_input_len: u32,
}

fn default_max_input_len() -> u32 {
    512
}

#[derive(Serialize)]
struct TextLabel<'a> {
    text: &'a str,
    label: Label,
}

#[derive(Serialize)]
struct IdText<'a> {
    id: usize,
    text: &'a str,
}

#[derive(Deserialize)]
struct IdConfidence {
    id: usize,
    confidence: f64,
}

impl ClassifierBackend for CommandClassifier {
    fn info(&self) -> ClassifierInfo {
        ClassifierInfo {
            name: self.name.clone(),
            max_input_len: self.max_input_len,
        }
    }

    fn train(
        &self,
        examples: &[(String, Label)],
        config: &ClassifierTrainConfig,
        work_dir: &Path,
    ) -> Result<Vec<ClassifierHandle>> {
        fs::create_dir_all(work_dir).map_err(|e| Error::io(work_dir, e))?;
        let examples_path = work_dir.join("classifier_examples.jsonl");
        let config_path = work_dir.join("classifier_config.json");
        let rows: Vec<_> = examples
            .iter()
            .map(|(text, label)| TextLabel {
                text,
                label: *label,
            })
            .collect();
        write_jsonl(&examples_path, &rows)?;
        fs::write(&config_path, serde_json::to_vec_pretty(config)?)
            .map_err(|e| Error::io(&config_path, e))?;
        run_command(
            &self.program,
            &self.args,
            &[
                "train",
                path_arg(&examples_path)?,
                path_arg(&config_path)?,
                path_arg(work_dir)?,
            ],
        )?;
        let mut handles = Vec::new();
        for epoch in 1..=config.epochs {
            let dir = work_dir.join(format!("checkpoint-{epoch}"));
            if !dir.is_dir() {
                return Err(Error::Backend(format!("missing {}", dir.display())));
            }
            handles.push(ClassifierHandle {
                backend: self.name.clone(),
                checkpoint: epoch,
                state: HandleState::Path(dir),
            });
        }
        Ok(handles)
    }

    fn score_batch(&self, handle: &ClassifierHandle, inputs: &[String]) -> Result<Vec<f64>> {
        let HandleState::Path(dir) = &handle.state else {
            return Err(Error::Backend(format!(
                "'{}' needs a checkpoint directory handle",
                self.name
            )));
        };
        let work = tempfile::tempdir().map_err(|e| Error::io(std::env::temp_dir(), e))?;
        let inputs_path = work.path().join("inputs.jsonl");
        let outputs_path = work.path().join("outputs.jsonl");
        let rows: Vec<_> = inputs
            .iter()
            .enumerate()
            .map(|(id, text)| IdText { id, text })
            .collect();
        write_jsonl(&inputs_path, &rows)?;
        run_command(
            &self.program,
            &self.args,
            &[
                "score",
                path_arg(dir)?,
                path_arg(&inputs_path)?,
                path_arg(&outputs_path)?,
            ],
        )?;
        let outputs: Vec<IdConfidence> = read_jsonl(&outputs_path)?;
        let by_id: HashMap<usize, f64> =
            outputs.into_iter().map(|o| (o.id, o.confidence)).collect();
        (0..inputs.len())
            .map(|i| {
                by_id
                    .get(&i)
                    .copied()
                    .ok_or_else(|| Error::Backend(format!("no confidence for input {i}")))
            })
            .collect()
    }
}

/// Anything that assigns a consistency confidence to (summary, article) pairs.
pub trait ConsistencyModel: Send + Sync {
    fn name(&self) -> String;

    fn confidences(&self, pairs: &[(&str, &str)]) -> Result<Vec<f64>>;
}

/// A backend paired with one of its checkpoints.
pub struct BoundClassifier<'a> {
    pub backend: &'a dyn ClassifierBackend,
    pub handle: ClassifierHandle,
}

impl ConsistencyModel for BoundClassifier<'_> {
    fn name(&self) -> String {
        format!("{}@{}", self.backend.info().name, self.handle.checkpoint)
    }

    fn confidences(&self, pairs: &[(&str, &str)]) -> Result<Vec<f64>> {
        let max_len = self.backend.info().max_input_len as usize;
        let inputs: Vec<String> = pairs
            .iter()
            .map(|(s, a)| encode_pair(s, a, max_len))
            .collect();
        let out = self.backend.score_batch(&self.handle, &inputs)?;
        if out.len() != pairs.len() {
            return Err(Error::Backend(format!(
                "classifier returned {} scores for {} inputs",
                out.len(),
                pairs.len()
            )));
        }
        if let Some(bad) = out.iter().find(|c| !(0.0..=1.0).contains(*c)) {
            return Err(Error::Backend(format!("confidence {bad} outside [0, 1]")));
        }
        Ok(out)
    }
}

/// Train on a labeled dataset; returns one checkpoint per epoch.
pub fn train_classifier(
    backend: &dyn ClassifierBackend,
    dataset: &[LabeledExample],
    config: &ClassifierTrainConfig,
    work_dir: &Path,
) -> Result<Vec<ClassifierHandle>> {
    for label in Label::ALL {
        if !dataset.iter().any(|e| e.label == label) {
            return Err(Error::invalid(format!(
                "classifier dataset has no '{label}' examples"
            )));
        }
    }
    if config.epochs == 0 {
        return Err(Error::Config("classifier epochs must be at least 1".into()));
    }
    let max_len = backend.info().max_input_len as usize;
    let encoded: Vec<(String, Label)> = dataset
        .par_iter()
        .map(|e| (encode_pair(&e.summary, &e.article, max_len), e.label))
        .collect();
    let handles = backend.train(&encoded, config, work_dir)?;
    if handles.is_empty() {
        return Err(Error::Backend("training produced no checkpoints".into()));
    }
    Ok(handles)
}

pub fn score(
    model: &dyn ConsistencyModel,
    summary: &str,
    article: &str,
    threshold: f64,
) -> Result<ConsistencyScore> {
    let c = model.confidences(&[(summary, article)])?;
    ConsistencyScore::new(c[0], threshold)
}

/// Labels implied by thresholding confidences.
pub fn threshold_labels(confidences: &[f64], threshold: f64) -> Vec<Label> {
    confidences
        .iter()
        .map(|&c| {
            if c >= threshold {
                Label::Consistent
            } else {
                Label::Inconsistent
            }
        })
        .collect()
}

/// Score used to rank checkpoints on the validation set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionMetric {
    BalancedAccuracy,
    MacroF1,
}

impl SelectionMetric {
    pub fn as_str(self) -> &'static str {
        match self {
            SelectionMetric::BalancedAccuracy => "balanced_accuracy",
            SelectionMetric::MacroF1 => "macro_f1",
        }
    }
}

/// Validation score of a model on binary-labeled records.
pub fn validation_score(
    model: &dyn ConsistencyModel,
    records: &[BenchmarkRecord],
    threshold: f64,
    metric: SelectionMetric,
) -> Result<f64> {
    let truth: Vec<Label> = records
        .iter()
        .map(|r| {
            r.binary_label
                .ok_or_else(|| Error::invalid(format!("validation record '{}' has no label", r.id)))
        })
        .collect::<Result<_>>()?;
    let pairs: Vec<(&str, &str)> = records
        .iter()
        .map(|r| (r.summary.as_str(), r.article.as_str()))
        .collect();
    let predicted = threshold_labels(&model.confidences(&pairs)?, threshold);
    match metric {
        SelectionMetric::BalancedAccuracy => balanced_accuracy(&truth, &predicted),
        SelectionMetric::MacroF1 => macro_f1(&truth, &predicted),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub index: usize,
    pub handle: ClassifierHandle,
    /// Validation score of every checkpoint, in input order.
    pub scores: Vec<f64>,
}

/// Checkpoint with the highest validation balanced accuracy; the earliest wins ties.
pub fn select_model(
    backend: &dyn ClassifierBackend,
    checkpoints: &[ClassifierHandle],
    validation: &[BenchmarkRecord],
    threshold: f64,
) -> Result<Selection> {
    select_model_by(
        backend,
        checkpoints,
        validation,
        threshold,
        SelectionMetric::BalancedAccuracy,
    )
}

pub fn select_model_by(
    backend: &dyn ClassifierBackend,
    checkpoints: &[ClassifierHandle],
    validation: &[BenchmarkRecord],
    threshold: f64,
    metric: SelectionMetric,
) -> Result<Selection> {
    if checkpoints.is_empty() {
        return Err(Error::invalid("no checkpoints to select from"));
    }
    let scores: Vec<f64> = checkpoints
        .iter()
        .map(|h| {
            let model = BoundClassifier {
                backend,
                handle: h.clone(),
            };
            validation_score(&model, validation, threshold, metric)
        })
        .collect::<Result<_>>()?;
    let index = argmax_first(&scores);
    Ok(Selection {
        index,
        handle: checkpoints[index].clone(),
        scores,
    })
}

/// Index of the first maximum.
pub fn argmax_first(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncodingInfo {
    pub order: String,
    pub separator: String,
    pub truncation: String,
    pub max_input_len: u32,
}

impl EncodingInfo {
    pub fn for_backend(info: &ClassifierInfo) -> Self {
        EncodingInfo {
            order: "summary-first".into(),
            separator: SEPARATOR.into(),
            truncation: "article-tail".into(),
            max_input_len: info.max_input_len,
        }
    }
}

/// Written as `manifest.json` in a checkpoint directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub backend: String,
    pub dataset_sha256: String,
    pub dataset_size: usize,
    pub config: ClassifierTrainConfig,
    pub encoding: EncodingInfo,
    pub selection_metric: String,
    pub threshold: f64,
    pub checkpoints: Vec<ClassifierHandle>,
    pub validation_scores: Vec<f64>,
    pub selected: usize,
}

impl CheckpointManifest {
    pub const FILE: &'static str = "manifest.json";

    pub fn selected_handle(&self) -> Result<&ClassifierHandle> {
        self.checkpoints
            .get(self.selected)
            .ok_or_else(|| Error::invalid("manifest selects a missing checkpoint"))
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join(Self::FILE);
        let mut bytes = serde_json::to_vec_pretty(self)?;
        bytes.push(b'\n');
        fs::write(&path, bytes).map_err(|e| Error::io(&path, e))
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = if dir.is_dir() {
            dir.join(Self::FILE)
        } else {
            dir.to_path_buf()
        };
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// SHA-256 of the dataset's canonical JSONL serialization.
pub fn dataset_hash(dataset: &[LabeledExample]) -> Result<String> {
    let mut bytes = Vec::new();
    for ex in dataset {
        serde_json::to_writer(&mut bytes, ex)?;
        bytes.push(b'\n');
    }
    Ok(sha256_hex(&bytes))
}
