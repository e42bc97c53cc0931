use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::classifier::{threshold_labels, ConsistencyModel};
use crate::corpus::{read_jsonl, write_jsonl, BenchmarkRecord};
use crate::error::{Error, Result};
use crate::label::Label;
use crate::metrics::{balanced_accuracy, correlation_significance, macro_f1, pearson, spearman};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum ReportScores {
    Classification {
        macro_f1: f64,
        balanced_accuracy: f64,
    },
    Correlation {
        pearson: f64,
        pearson_p: f64,
        spearman: f64,
        spearman_p: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub benchmark: String,
    pub model: String,
    pub n: usize,
    #[serde(flatten)]
    pub scores: ReportScores,
    pub config_fingerprint: String,
}

/// One line of a predictions file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub id: String,
    pub confidence: f64,
    pub label: Label,
}

pub fn model_confidences(
    model: &dyn ConsistencyModel,
    records: &[BenchmarkRecord],
) -> Result<Vec<f64>> {
    let pairs: Vec<(&str, &str)> = records
        .iter()
        .map(|r| (r.summary.as_str(), r.article.as_str()))
        .collect();
    model.confidences(&pairs)
}

fn check_aligned(records: &[BenchmarkRecord], confidences: &[f64]) -> Result<()> {
    if records.len() != confidences.len() {
        return Err(Error::invalid(format!(
            "{} confidences for {} records",
            confidences.len(),
            records.len()
        )));
    }
    Ok(())
}

/// Macro-F1 and balanced accuracy of thresholded confidences.
pub fn classification_scores(
    records: &[BenchmarkRecord],
    confidences: &[f64],
    threshold: f64,
) -> Result<(ReportScores, Vec<Prediction>)> {
    check_aligned(records, confidences)?;
    let truth: Vec<Label> = records
        .iter()
        .map(|r| {
            r.binary_label
                .ok_or_else(|| Error::invalid(format!("record '{}' is not binarized", r.id)))
        })
        .collect::<Result<_>>()?;
    let predicted = threshold_labels(confidences, threshold);
    let scores = ReportScores::Classification {
        macro_f1: macro_f1(&truth, &predicted)?,
        balanced_accuracy: balanced_accuracy(&truth, &predicted)?,
    };
    let predictions = records
        .iter()
        .zip(confidences)
        .zip(predicted)
        .map(|((r, &confidence), label)| Prediction {
            id: r.id.clone(),
            confidence,
            label,
        })
        .collect();
    Ok((scores, predictions))
}

/// Pearson and Spearman between confidences and human scores, with t-test p-values.
pub fn correlation_scores(
    records: &[BenchmarkRecord],
    confidences: &[f64],
) -> Result<ReportScores> {
    check_aligned(records, confidences)?;
    if records.len() < 3 {
        return Err(Error::invalid("correlation needs at least 3 records"));
    }
    let human: Vec<f64> = records
        .iter()
        .map(|r| {
            r.numeric_score
                .ok_or_else(|| Error::invalid(format!("record '{}' has no numeric score", r.id)))
        })
        .collect::<Result<_>>()?;
    let n = records.len();
    let r = pearson(confidences, &human)?;
    let rho = spearman(confidences, &human)?;
    Ok(ReportScores::Correlation {
        pearson: r,
        pearson_p: correlation_significance(r, n)?,
        spearman: rho,
        spearman_p: correlation_significance(rho, n)?,
    })
}

pub fn evaluate_classification(
    model: &dyn ConsistencyModel,
    benchmark: &str,
    records: &[BenchmarkRecord],
    threshold: f64,
    fingerprint: &str,
) -> Result<(EvaluationReport, Vec<Prediction>)> {
    if let Some(r) = records.iter().find(|r| r.binary_label.is_none()) {
        return Err(Error::invalid(format!(
            "record '{}' is not binarized",
            r.id
        )));
    }
    let confidences = model_confidences(model, records)?;
    let (scores, predictions) = classification_scores(records, &confidences, threshold)?;
    Ok((
        EvaluationReport {
            benchmark: benchmark.into(),
            model: model.name(),
            n: records.len(),
            scores,
            config_fingerprint: fingerprint.into(),
        },
        predictions,
    ))
}

pub fn evaluate_correlation(
    model: &dyn ConsistencyModel,
    benchmark: &str,
    records: &[BenchmarkRecord],
    fingerprint: &str,
) -> Result<EvaluationReport> {
    if records.len() < 3 {
        return Err(Error::invalid("correlation needs at least 3 records"));
    }
    let confidences = model_confidences(model, records)?;
    Ok(EvaluationReport {
        benchmark: benchmark.into(),
        model: model.name(),
        n: records.len(),
        scores: correlation_scores(records, &confidences)?,
        config_fingerprint: fingerprint.into(),
    })
}

pub fn save_predictions(path: &Path, predictions: &[Prediction]) -> Result<()> {
    write_jsonl(path, predictions)
}

#[derive(Deserialize)]
struct BaselineLine {
    id: String,
    #[serde(alias = "score")]
    confidence: f64,
}

/// Pre-computed scores of an external metric, `{"id", "confidence"}` per line,
/// aligned to `records` by id.
pub fn load_baseline_scores(path: &Path, records: &[BenchmarkRecord]) -> Result<Vec<f64>> {
    let lines: Vec<BaselineLine> = read_jsonl(path)?;
    let by_id: HashMap<String, f64> = lines.into_iter().map(|l| (l.id, l.confidence)).collect();
    records
        .iter()
        .map(|r| {
            by_id.get(&r.id).copied().ok_or_else(|| {
                Error::invalid(format!(
                    "{}: no score for record '{}'",
                    path.display(),
                    r.id
                ))
            })
        })
        .collect()
}
