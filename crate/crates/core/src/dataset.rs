//! Classifier training-set assembly.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{read_jsonl, write_jsonl, CorpusSplit};
use crate::error::{Error, Result};
use crate::infill::GeneratedSummary;
use crate::label::Label;
use crate::masker::Method;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Origin {
    Reference,
    Mfma,
    Msm,
    Mf,
}

impl From<Method> for Origin {
    fn from(method: Method) -> Self {
        match method {
            Method::Mfma => Origin::Mfma,
            Method::Msm => Origin::Msm,
            Method::Mf => Origin::Mf,
        }
    }
}

impl fmt::Display for Origin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Origin::Reference => "reference",
            Origin::Mfma => "mfma",
            Origin::Msm => "msm",
            Origin::Mf => "mf",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledExample {
    pub pair_id: String,
    pub article: String,
    pub summary: String,
    pub label: Label,
    pub origin: Origin,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FilterPolicy {
    /// Negatives whose normalized edit distance to their reference is below
    /// this value are treated as copies and dropped. 0 disables the filter.
    pub min_edit_distinctness: f64,
    pub drop_empty: bool,
}

impl Default for FilterPolicy {
    fn default() -> Self {
        FilterPolicy {
            min_edit_distinctness: 0.0,
            drop_empty: true,
        }
    }
}

impl FilterPolicy {
    fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.min_edit_distinctness) {
            return Err(Error::Config(format!(
                "min_edit_distinctness {} outside [0, 1]",
                self.min_edit_distinctness
            )));
        }
        Ok(())
    }
}

/// Character-level Levenshtein distance divided by the longer length.
pub fn normalized_edit_distance(a: &str, b: &str) -> f64 {
    1.0 - strsim::normalized_levenshtein(a, b)
}

/// Merge reference summaries of the training half (consistent) with surviving
/// negatives generated from the generation half (inconsistent), then shuffle
/// with `seed`.
pub fn assemble(
    split: &CorpusSplit,
    negatives: &[GeneratedSummary],
    policy: &FilterPolicy,
    seed: u64,
) -> Result<Vec<LabeledExample>> {
    policy.validate()?;
    let gen_pairs: HashMap<&str, _> = split.gen_half.iter().map(|p| (p.id.as_str(), p)).collect();
    let train_ids: std::collections::HashSet<&str> =
        split.train_half.iter().map(|p| p.id.as_str()).collect();

    let mut out: Vec<LabeledExample> = split
        .train_half
        .iter()
        .map(|p| LabeledExample {
            pair_id: p.id.clone(),
            article: p.article.clone(),
            summary: p.summary.clone(),
            label: Label::Consistent,
            origin: Origin::Reference,
        })
        .collect();

    let mut dropped = 0usize;
    for neg in negatives {
        let Some(pair) = gen_pairs.get(neg.pair_id.as_str()) else {
            let which = if train_ids.contains(neg.pair_id.as_str()) {
                "the infiller-training half"
            } else {
                "no known pair"
            };
            return Err(Error::invalid(format!(
                "negative for pair '{}' refers to {which}",
                neg.pair_id
            )));
        };
        if policy.drop_empty && neg.text.trim().is_empty() {
            dropped += 1;
            continue;
        }
        if policy.min_edit_distinctness > 0.0
            && normalized_edit_distance(&neg.text, &pair.summary) < policy.min_edit_distinctness
        {
            dropped += 1;
            continue;
        }
        out.push(LabeledExample {
            pair_id: neg.pair_id.clone(),
            article: pair.article.clone(),
            summary: neg.text.clone(),
            label: Label::Inconsistent,
            origin: neg.method.into(),
        });
    }
    if dropped > 0 {
        log::info!("filter policy dropped {dropped} negatives");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    out.shuffle(&mut rng);
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LengthPercentiles {
    pub p10: usize,
    pub p50: usize,
    pub p90: usize,
    pub max: usize,
}

impl LengthPercentiles {
    /// Nearest-rank percentiles of whitespace token counts.
    fn of(mut lengths: Vec<usize>) -> Self {
        lengths.sort_unstable();
        let rank = |p: f64| {
            let idx = ((p / 100.0) * lengths.len() as f64).ceil() as usize;
            lengths[idx.clamp(1, lengths.len()) - 1]
        };
        LengthPercentiles {
            p10: rank(10.0),
            p50: rank(50.0),
            p90: rank(90.0),
            max: *lengths.last().unwrap_or(&0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub total: usize,
    pub per_label: BTreeMap<Label, usize>,
    pub per_origin: BTreeMap<Origin, usize>,
    /// Fraction of examples labeled consistent.
    pub consistent_ratio: f64,
    pub summary_tokens: LengthPercentiles,
    pub article_tokens: LengthPercentiles,
}

pub fn dataset_stats(examples: &[LabeledExample]) -> Result<DatasetStats> {
    if examples.is_empty() {
        return Err(Error::invalid("cannot summarize an empty dataset"));
    }
    let mut per_label: BTreeMap<Label, usize> = Label::ALL.iter().map(|&l| (l, 0)).collect();
    let mut per_origin = BTreeMap::new();
    for ex in examples {
        *per_label.entry(ex.label).or_default() += 1;
        *per_origin.entry(ex.origin).or_default() += 1;
    }
    let words = |s: &str| s.split_whitespace().count();
    Ok(DatasetStats {
        total: examples.len(),
        consistent_ratio: per_label[&Label::Consistent] as f64 / examples.len() as f64,
        per_label,
        per_origin,
        summary_tokens: LengthPercentiles::of(examples.iter().map(|e| words(&e.summary)).collect()),
        article_tokens: LengthPercentiles::of(examples.iter().map(|e| words(&e.article)).collect()),
    })
}

pub fn save_dataset(path: &Path, examples: &[LabeledExample]) -> Result<()> {
    write_jsonl(path, examples)
}

pub fn load_dataset(path: &Path) -> Result<Vec<LabeledExample>> {
    read_jsonl(path)
}
