//! Scalar metrics: classification scores, correlation with significance,
//! quadratic fits and similarity-based distance/diversity.

mod correlation;
mod regression;
mod similarity;

pub use correlation::{correlation_significance, fractional_ranks, pearson, spearman};
pub use regression::{fit_quadratic, QuadraticFit};
pub use similarity::{
    distance_from_reference, diversity, similarity_scorer, GreedyEmbeddingScorer, SimilarityScorer,
    TokenF1Scorer,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::label::Label;

/// One-vs-rest confusion counts for a single class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

impl ConfusionCounts {
    pub fn for_class(class: Label, y_true: &[Label], y_pred: &[Label]) -> Self {
        let mut c = ConfusionCounts::default();
        for (&t, &p) in y_true.iter().zip(y_pred) {
            match (t == class, p == class) {
                (true, true) => c.tp += 1,
                (false, true) => c.fp += 1,
                (false, false) => c.tn += 1,
                (true, false) => c.fn_ += 1,
            }
        }
        c
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }

    /// F1 of the positive class; 0 when the class never occurs in either labeling.
    pub fn f1(&self) -> f64 {
        let denom = 2 * self.tp + self.fp + self.fn_;
        if denom == 0 {
            0.0
        } else {
            2.0 * self.tp as f64 / denom as f64
        }
    }

    pub fn recall(&self) -> Option<f64> {
        let support = self.tp + self.fn_;
        (support > 0).then(|| self.tp as f64 / support as f64)
    }
}

fn check_lengths(y_true: &[Label], y_pred: &[Label]) -> Result<()> {
    if y_true.len() != y_pred.len() {
        return Err(Error::invalid(format!(
            "label length mismatch: {} true vs {} predicted",
            y_true.len(),
            y_pred.len()
        )));
    }
    if y_true.is_empty() {
        return Err(Error::invalid("no labels to score"));
    }
    Ok(())
}

/// Unweighted mean of the per-class F1 over both labels.
pub fn macro_f1(y_true: &[Label], y_pred: &[Label]) -> Result<f64> {
    check_lengths(y_true, y_pred)?;
    let sum: f64 = Label::ALL
        .iter()
        .map(|&c| ConfusionCounts::for_class(c, y_true, y_pred).f1())
        .sum();
    Ok(sum / Label::ALL.len() as f64)
}

/// Mean per-class recall. Both classes must occur in `y_true`.
pub fn balanced_accuracy(y_true: &[Label], y_pred: &[Label]) -> Result<f64> {
    check_lengths(y_true, y_pred)?;
    let mut sum = 0.0;
    for class in Label::ALL {
        sum += ConfusionCounts::for_class(class, y_true, y_pred)
            .recall()
            .ok_or_else(|| Error::Undefined(format!("class '{class}' absent from true labels")))?;
    }
    Ok(sum / Label::ALL.len() as f64)
}

/// `{metric_name, value, n, p_value?}` line of a metric report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub metric_name: String,
    pub value: f64,
    pub n: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub p_value: Option<f64>,
}
