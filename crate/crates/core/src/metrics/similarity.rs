//! Pluggable text similarity and the distance/diversity analyses built on it.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::seed::stable_hash;
use crate::text::content_words;

/// Symmetric similarity with `sim(a, a)` equal to [`SimilarityScorer::maximum`].
pub trait SimilarityScorer: Send + Sync {
    fn name(&self) -> &str;

    fn similarity(&self, a: &str, b: &str) -> f64;

    fn maximum(&self) -> f64 {
        1.0
    }
}

/// Dice/F1 overlap of lower-cased word sets: `2|A ∩ B| / (|A| + |B|)`.
#[derive(Debug, Default, Clone, Copy)]
pub struct TokenF1Scorer;

impl SimilarityScorer for TokenF1Scorer {
    fn name(&self) -> &str {
        "token-f1"
    }

    fn similarity(&self, a: &str, b: &str) -> f64 {
        let sa: HashSet<String> = content_words(a).into_iter().collect();
        let sb: HashSet<String> = content_words(b).into_iter().collect();
        if sa.is_empty() && sb.is_empty() {
            return 1.0;
        }
        let common = sa.intersection(&sb).count();
        2.0 * common as f64 / (sa.len() + sb.len()) as f64
    }
}

/// Greedy-matching F1 over word embeddings, in the style of BERTScore.
///
/// Each word of one text is matched with its most similar word (cosine) in the
/// other; precision and recall average those maxima and the score is their
/// harmonic mean. Words missing from the table get a fixed pseudo-random unit
/// vector derived from the word, so identical OOV words still match exactly.
#[derive(Debug, Clone)]
pub struct GreedyEmbeddingScorer {
    dim: usize,
    table: HashMap<String, Vec<f64>>,
}

impl GreedyEmbeddingScorer {
    pub fn new(dim: usize, table: HashMap<String, Vec<f64>>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("embedding dimension must be positive"));
        }
        let mut normed = HashMap::with_capacity(table.len());
        for (word, v) in table {
            if v.len() != dim {
                return Err(Error::invalid(format!(
                    "embedding for '{word}' has {} dims, expected {dim}",
                    v.len()
                )));
            }
            normed.insert(word.to_lowercase(), unit(v));
        }
        Ok(GreedyEmbeddingScorer { dim, table: normed })
    }

    /// Load a GloVe/word2vec-style text file: `word v1 v2 ... vd` per line.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut table = HashMap::new();
        let mut dim = None;
        for (i, line) in text.lines().enumerate() {
            let mut parts = line.split_whitespace();
            let Some(word) = parts.next() else { continue };
            let v = parts
                .map(str::parse::<f64>)
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::Parse {
                    source_name: path.display().to_string(),
                    line: i + 1,
                    message: e.to_string(),
                })?;
            // word2vec text files start with a "<count> <dim>" header.
            if i == 0 && v.len() == 1 && word.parse::<usize>().is_ok() {
                continue;
            }
            dim.get_or_insert(v.len());
            table.insert(word.to_string(), v);
        }
        let dim =
            dim.ok_or_else(|| Error::invalid(format!("{}: no embeddings", path.display())))?;
        Self::new(dim, table)
    }

    fn embed(&self, word: &str) -> Vec<f64> {
        if let Some(v) = self.table.get(word) {
            return v.clone();
        }
        let v = (0..self.dim)
            .map(|i| {
                let h = stable_hash(&[word.as_bytes(), &(i as u64).to_le_bytes()]);
                (h as f64 / u64::MAX as f64) * 2.0 - 1.0
            })
            .collect();
        unit(v)
    }
}

fn unit(v: Vec<f64>) -> Vec<f64> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 {
        v
    } else {
        v.into_iter().map(|x| x / norm).collect()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl SimilarityScorer for GreedyEmbeddingScorer {
    fn name(&self) -> &str {
        "embedding-greedy"
    }

    fn similarity(&self, a: &str, b: &str) -> f64 {
        let ea: Vec<_> = content_words(a).iter().map(|w| self.embed(w)).collect();
        let eb: Vec<_> = content_words(b).iter().map(|w| self.embed(w)).collect();
        if ea.is_empty() || eb.is_empty() {
            return if ea.is_empty() && eb.is_empty() {
                1.0
            } else {
                0.0
            };
        }
        let best = |from: &[Vec<f64>], to: &[Vec<f64>]| {
            from.iter()
                .map(|u| to.iter().map(|v| dot(u, v)).fold(f64::MIN, f64::max))
                .sum::<f64>()
                / from.len() as f64
        };
        let precision = best(&eb, &ea);
        let recall = best(&ea, &eb);
        if precision + recall <= 0.0 {
            0.0
        } else {
            (2.0 * precision * recall / (precision + recall)).min(1.0)
        }
    }
}

/// Scorer by name: `token-f1`, or `embedding-greedy` with an embeddings file.
pub fn similarity_scorer(
    name: &str,
    embeddings: Option<&Path>,
) -> Result<Box<dyn SimilarityScorer>> {
    match name {
        "token-f1" => Ok(Box::new(TokenF1Scorer)),
        "embedding-greedy" => {
            let path = embeddings.ok_or_else(|| {
                Error::Config("scorer 'embedding-greedy' needs an embeddings file".into())
            })?;
            Ok(Box::new(GreedyEmbeddingScorer::load(path)?))
        }
        _ => Err(Error::Unknown {
            kind: "similarity scorer",
            value: name.to_string(),
        }),
    }
}

/// Similarity of a negative to the reference it was generated from. Lower
/// values mean the negative moved farther from the reference.
pub fn distance_from_reference(
    scorer: &dyn SimilarityScorer,
    reference: &str,
    negative: &str,
) -> Result<f64> {
    if reference.trim().is_empty() || negative.trim().is_empty() {
        return Err(Error::invalid("distance needs two non-empty texts"));
    }
    Ok(scorer.similarity(reference, negative))
}

/// Negated mean similarity over all unordered pairs of samples.
pub fn diversity<S: AsRef<str>>(samples: &[S], scorer: &dyn SimilarityScorer) -> Result<f64> {
    if samples.len() < 2 {
        return Err(Error::invalid("diversity needs at least 2 samples"));
    }
    let mut total = 0.0;
    let mut pairs = 0usize;
    for i in 0..samples.len() {
        for j in i + 1..samples.len() {
            total += scorer.similarity(samples[i].as_ref(), samples[j].as_ref());
            pairs += 1;
        }
    }
    Ok(-(total / pairs as f64))
}
