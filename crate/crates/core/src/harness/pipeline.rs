//! Stages of a full run, usable one at a time or chained by [`run_pipeline`].

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::binarize::binarize_all;
use super::config::{BenchmarkSource, Config};
use super::evaluate::{
    classification_scores, correlation_scores, evaluate_classification, evaluate_correlation,
    load_baseline_scores, save_predictions, EvaluationReport,
};
use crate::classifier::{
    dataset_hash, select_model_by, train_classifier, BoundClassifier, CheckpointManifest,
    ClassifierBackend, EncodingInfo,
};
use crate::corpus::{
    load_benchmark, load_pairs, split_half, BenchmarkRecord, CorpusSplit, DocumentPair,
};
use crate::dataset::{assemble, dataset_stats, save_dataset, DatasetStats, LabeledExample};
use crate::error::{Error, Result};
use crate::infill::{
    generate_negatives, make_training_examples, save_negatives, train_infiller, GeneratedSummary,
    GenerationSettings, ModelHandle, Seq2SeqBackend,
};
use crate::masker::{Masker, Method};
use crate::seed::stream_seed;
use crate::spanner::Unit;

pub fn load_corpus(config: &Config) -> Result<Vec<DocumentPair>> {
    let path = config
        .corpus
        .path
        .as_ref()
        .ok_or_else(|| Error::Config("corpus.path is not set".into()))?;
    let mut pairs = load_pairs(path, config.corpus.format)?;
    if let Some(limit) = config.corpus.limit {
        pairs.truncate(limit);
    }
    Ok(pairs)
}

/// Load a benchmark and apply its binarization rule.
pub fn load_binarized(source: &BenchmarkSource) -> Result<Vec<BenchmarkRecord>> {
    let records = load_benchmark(&source.path, source.schema)?;
    binarize_all(&records, source.schema)
}

pub fn load_validation(config: &Config) -> Result<Option<Vec<BenchmarkRecord>>> {
    config
        .evaluation
        .validation
        .as_ref()
        .map(load_binarized)
        .transpose()
}

pub fn make_split(config: &Config, pairs: &[DocumentPair]) -> Result<CorpusSplit> {
    split_half(pairs, stream_seed(config.seed, "split"))
}

pub fn build_masker(config: &Config, unit: Unit, global_seed: u64) -> Result<Masker> {
    Masker::new(config.masking.build_annotator()?, unit, global_seed)
}

/// Train the infiller when the backend and method allow it; `None` otherwise.
pub fn maybe_train_infiller(
    config: &Config,
    backend: &dyn Seq2SeqBackend,
    split: &CorpusSplit,
    settings: &GenerationSettings,
    masker: &Masker,
    out_dir: &Path,
) -> Result<Option<ModelHandle>> {
    let method = settings.method;
    if method == Method::Mf || !backend.info().supports_training {
        log::info!(
            "skipping infiller training (backend '{}', method '{method}')",
            backend.info().name
        );
        return Ok(None);
    }
    let examples =
        make_training_examples(split, method, settings.gamma_a, settings.gamma_s, masker)?;
    train_infiller(backend, &examples, &config.infiller.train, out_dir).map(Some)
}

/// Train a classifier, select a checkpoint and write its manifest to `out_dir`.
///
/// Without a validation set the last checkpoint is kept.
pub fn train_and_select(
    config: &Config,
    backend: &dyn ClassifierBackend,
    dataset: &[LabeledExample],
    validation: Option<&[BenchmarkRecord]>,
    out_dir: &Path,
) -> Result<CheckpointManifest> {
    let checkpoints = train_classifier(backend, dataset, &config.classifier.train, out_dir)?;
    let metric = config.evaluation.selection_metric;
    let (selected, validation_scores, selection_metric) = match validation {
        Some(records) => {
            let sel = select_model_by(
                backend,
                &checkpoints,
                records,
                config.classifier.threshold,
                metric,
            )?;
            (sel.index, sel.scores, metric.as_str().to_string())
        }
        None => (
            checkpoints.len() - 1,
            Vec::new(),
            "last-checkpoint".to_string(),
        ),
    };
    let manifest = CheckpointManifest {
        backend: backend.info().name,
        dataset_sha256: dataset_hash(dataset)?,
        dataset_size: dataset.len(),
        config: config.classifier.train.clone(),
        encoding: EncodingInfo::for_backend(&backend.info()),
        selection_metric,
        threshold: config.classifier.threshold,
        checkpoints,
        validation_scores,
        selected,
    };
    manifest.save(out_dir)?;
    Ok(manifest)
}

fn file_stem(name: &str) -> String {
    name.chars()
        .map(|c| {
            if c.is_alphanumeric() || c == '-' || c == '_' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

/// Evaluate the selected classifier and any configured baselines on every
/// benchmark. Classification reports cover all benchmarks; correlation
/// reports are added for benchmarks released with graded judgments.
pub fn evaluate_benchmarks(
    config: &Config,
    backend: &dyn ClassifierBackend,
    manifest: &CheckpointManifest,
    predictions_dir: Option<&Path>,
) -> Result<Vec<EvaluationReport>> {
    let fingerprint = config.fingerprint();
    let model = BoundClassifier {
        backend,
        handle: manifest.selected_handle()?.clone(),
    };
    let threshold = config.classifier.threshold;
    let mut reports = Vec::new();
    for source in &config.evaluation.benchmarks {
        let name = source.display_name();
        let records = load_binarized(source)?;
        let (report, predictions) =
            evaluate_classification(&model, &name, &records, threshold, &fingerprint)?;
        if let Some(dir) = predictions_dir {
            save_predictions(
                &dir.join(format!("{}.jsonl", file_stem(&name))),
                &predictions,
            )?;
        }
        reports.push(report);
        let graded =
            !source.schema.is_binary() && records.iter().all(|r| r.numeric_score.is_some());
        if graded {
            reports.push(evaluate_correlation(&model, &name, &records, &fingerprint)?);
        }
        for baseline in config
            .evaluation
            .baselines
            .iter()
            .filter(|b| b.benchmark == name)
        {
            let confidences = load_baseline_scores(&baseline.path, &records)?;
            let (scores, _) = classification_scores(&records, &confidences, threshold)?;
            reports.push(EvaluationReport {
                benchmark: name.clone(),
                model: baseline.name.clone(),
                n: records.len(),
                scores,
                config_fingerprint: fingerprint.clone(),
            });
            if graded {
                reports.push(EvaluationReport {
                    benchmark: name.clone(),
                    model: baseline.name.clone(),
                    n: records.len(),
                    scores: correlation_scores(&records, &confidences)?,
                    config_fingerprint: fingerprint.clone(),
                });
            }
        }
    }
    Ok(reports)
}

/// Everything a full run produced, as written to `report.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineSummary {
    pub config_fingerprint: String,
    pub train_half: usize,
    pub gen_half: usize,
    pub negatives: usize,
    pub dataset: DatasetStats,
    pub selected_checkpoint: u32,
    pub validation_scores: Vec<f64>,
    pub reports: Vec<EvaluationReport>,
}

/// Paths written by [`run_pipeline`], relative to its output directory.
pub struct RunLayout {
    pub root: PathBuf,
}

impl RunLayout {
    pub fn new(root: &Path) -> Self {
        RunLayout {
            root: root.to_path_buf(),
        }
    }
    pub fn split(&self) -> PathBuf {
        self.root.join("split.json")
    }
    pub fn negatives(&self) -> PathBuf {
        self.root.join("negatives.jsonl")
    }
    pub fn dataset(&self) -> PathBuf {
        self.root.join("dataset.jsonl")
    }
    pub fn infiller(&self) -> PathBuf {
        self.root.join("infiller")
    }
    pub fn classifier(&self) -> PathBuf {
        self.root.join("classifier")
    }
    pub fn predictions(&self) -> PathBuf {
        self.root.join("predictions")
    }
    pub fn report(&self) -> PathBuf {
        self.root.join("report.json")
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Split, mask, generate, assemble, train, select and evaluate.
pub fn run_pipeline(config: &Config, out_dir: &Path) -> Result<PipelineSummary> {
    config.validate()?;
    let layout = RunLayout::new(out_dir);
    let pairs = load_corpus(config)?;
    let split = make_split(config, &pairs)?;
    write_json(&layout.split(), &split)?;

    let masking = &config.masking;
    let masker = build_masker(config, masking.unit, config.seed)?;
    let infiller = config.infiller.build()?;
    let settings = GenerationSettings {
        method: masking.method,
        gamma_a: masking.gamma_a,
        gamma_s: masking.gamma_s,
        n_samples: masking.n_samples,
        decode: config.infiller.decode.clone(),
    };
    let handle = maybe_train_infiller(
        config,
        infiller.as_ref(),
        &split,
        &settings,
        &masker,
        &layout.infiller(),
    )?;
    let negatives = generate_negatives(
        infiller.as_ref(),
        handle.as_ref(),
        &split,
        &settings,
        &masker,
    )?;
    save_negatives(&layout.negatives(), &negatives)?;

    let dataset = assemble(
        &split,
        &negatives,
        &config.dataset,
        stream_seed(config.seed, "dataset"),
    )?;
    save_dataset(&layout.dataset(), &dataset)?;

    let classifier = config.classifier.build()?;
    let validation = load_validation(config)?;
    let manifest = train_and_select(
        config,
        classifier.as_ref(),
        &dataset,
        validation.as_deref(),
        &layout.classifier(),
    )?;
    let reports = evaluate_benchmarks(
        config,
        classifier.as_ref(),
        &manifest,
        Some(&layout.predictions()),
    )?;

    let summary = PipelineSummary {
        config_fingerprint: config.fingerprint(),
        train_half: split.train_half.len(),
        gen_half: split.gen_half.len(),
        negatives: negatives.len(),
        dataset: dataset_stats(&dataset)?,
        selected_checkpoint: manifest.selected_handle()?.checkpoint,
        validation_scores: manifest.validation_scores.clone(),
        reports,
    };
    write_json(&layout.report(), &summary)?;
    Ok(summary)
}

/// Negatives grouped by pair id.
pub fn group_by_pair(
    negatives: &[GeneratedSummary],
) -> std::collections::BTreeMap<&str, Vec<&GeneratedSummary>> {
    let mut out: std::collections::BTreeMap<&str, Vec<&GeneratedSummary>> = Default::default();
    for n in negatives {
        out.entry(n.pair_id.as_str()).or_default().push(n);
    }
    out
}
