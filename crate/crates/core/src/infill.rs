//! Sequence-to-sequence backends and negative-summary generation.
//!
//! A backend fills masked inputs produced by [`crate::masker`]. Training is
//! optional: the mock backend and zero-shot denoisers only generate. Sample
//! diversity comes from mask placement; decoding itself is deterministic.

use std::path::{Path, PathBuf};
use std::process::Command;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{read_jsonl, write_jsonl, CorpusSplit};
use crate::error::{Error, Result};
use crate::masker::{Masker, Method, ARTICLE_PREFIX, SUMMARY_PREFIX};
use crate::seed::{pair_seed, stable_hash};
use crate::spanner::{sentence_ranges, Unit};
use crate::text::normalize_whitespace;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Seq2SeqExample {
    pub pair_id: String,
    pub input: String,
    /// The unmasked reference summary.
    pub target: String,
}

/// Infiller fine-tuning hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: u32,
    pub batch: u32,
    pub max_in: u32,
    pub max_tgt: u32,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 5,
            batch: 48,
            max_in: 1024,
            max_tgt: 140,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DecodeConfig {
    pub beam_size: u32,
    pub max_tgt: u32,
}

impl Default for DecodeConfig {
    fn default() -> Self {
        DecodeConfig {
            beam_size: 4,
            max_tgt: 140,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackendInfo {
    pub name: String,
    pub supports_training: bool,
    pub max_input_len: u32,
    pub max_target_len: u32,
}

/// Reference to a trained infiller, as written by the backend.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelHandle {
    pub backend: String,
    pub path: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationRequest {
    pub id: String,
    pub input: String,
    pub method: Method,
    pub seed: u64,
}

pub trait Seq2SeqBackend: Send + Sync {
    fn info(&self) -> BackendInfo;

    fn train(
        &self,
        _examples: &[Seq2SeqExample],
        _config: &TrainConfig,
        _out_dir: &Path,
    ) -> Result<ModelHandle> {
        Err(Error::Capability(
            "backend does not support training".into(),
        ))
    }

    /// One output per request, in request order. Each output may depend only on
    /// its own request, the handle and the decode config.
    fn generate(
        &self,
        handle: Option<&ModelHandle>,
        requests: &[GenerationRequest],
        decode: &DecodeConfig,
    ) -> Result<Vec<String>>;
}

fn is_sentinel_word(word: &str) -> bool {
    word.contains("<mask_")
}

fn vocabulary(segment: &str) -> Vec<&str> {
    let mut seen = std::collections::HashSet::new();
    segment
        .split_whitespace()
        .filter(|w| !is_sentinel_word(w))
        .map(|w| w.trim_matches(|c: char| !c.is_alphanumeric()))
        .filter(|w| !w.is_empty() && seen.insert(*w))
        .collect()
}

/// Deterministic stand-in for a trained infiller.
///
/// Every `<mask_i>` is replaced by a word from the input's article segment
/// (the text after `" Article: "`), or from the whole input when there is no
/// such segment. The word is `vocab[stable_hash([seed, i]) % vocab.len()]`,
/// with the vocabulary in first-appearance order, deduplicated, sentinels
/// excluded and edge punctuation trimmed.
pub fn mock_fill(input: &str, seed: u64) -> String {
    if !input.contains("<mask_") {
        return input.to_string();
    }
    let segment = input
        .find(ARTICLE_PREFIX)
        .map(|pos| &input[pos + ARTICLE_PREFIX.len()..])
        .unwrap_or(input);
    let mut vocab = vocabulary(segment);
    if vocab.is_empty() {
        vocab = vocabulary(input);
    }
    let mut out = String::with_capacity(input.len());
    let mut rest = input;
    while let Some(pos) = rest.find("<mask_") {
        out.push_str(&rest[..pos]);
        let after = &rest[pos + "<mask_".len()..];
        let digits = after.bytes().take_while(u8::is_ascii_digit).count();
        match (digits > 0, after[digits..].starts_with('>')) {
            (true, true) => {
                let index: u64 = after[..digits].parse().unwrap_or(0);
                if !vocab.is_empty() {
                    let h = stable_hash(&[&seed.to_le_bytes(), &index.to_le_bytes()]);
                    out.push_str(vocab[(h % vocab.len() as u64) as usize]);
                }
                rest = &after[digits + 1..];
            }
            _ => {
                out.push_str("<mask_");
                rest = after;
            }
        }
    }
    out.push_str(rest);
    normalize_whitespace(&out)
}

fn truncate_words(text: &str, max_words: u32) -> String {
    text.split_whitespace()
        .take(max_words as usize)
        .collect::<Vec<_>>()
        .join(" ")
}

/// Generation-only backend built on [`mock_fill`].
///
/// For `mfma` it returns the filled summary segment, for `mf` the filled
/// summary, and for `msm` the first sentence of the filled article.
#[derive(Debug, Default, Clone, Copy)]
pub struct MockBackend;

impl MockBackend {
    pub const NAME: &'static str = "mock";

    fn generate_one(request: &GenerationRequest, decode: &DecodeConfig) -> String {
        let filled = mock_fill(&request.input, request.seed);
        let text = match request.method {
            Method::Mfma => {
                let body = filled
                    .strip_prefix(SUMMARY_PREFIX.trim_end())
                    .unwrap_or(&filled);
                match body.find(ARTICLE_PREFIX.trim()) {
                    Some(pos) => body[..pos].to_string(),
                    None => body.to_string(),
                }
            }
            Method::Mf => filled,
            Method::Msm => sentence_ranges(&filled)
                .first()
                .map(|&(s, e)| filled[s..e].to_string())
                .unwrap_or_default(),
        };
        truncate_words(&text, decode.max_tgt)
    }
}

impl Seq2SeqBackend for MockBackend {
    fn info(&self) -> BackendInfo {
        BackendInfo {
            name: Self::NAME.into(),
            supports_training: false,
            max_input_len: u32::MAX,
            max_target_len: u32::MAX,
        }
    }

    fn generate(
        &self,
        _handle: Option<&ModelHandle>,
        requests: &[GenerationRequest],
        decode: &DecodeConfig,
    ) -> Result<Vec<String>> {
        Ok(requests
            .par_iter()
            .map(|r| Self::generate_one(r, decode))
            .collect())
    }
}

/// Adapter for an external program that owns a real encoder-decoder model.
///
/// The program is invoked as
///
/// ```text
/// <program> <args...> train <examples.jsonl> <train_config.json> <out_dir>
/// <program> <args...> generate <model_dir | -> <requests.jsonl> <decode.json> <outputs.jsonl>
/// ```
///
/// Examples are [`Seq2SeqExample`] lines, requests are [`GenerationRequest`]
/// lines and outputs are `{"id", "text"}` lines. Sentinels are passed as
/// `<mask_i>`; translating them to model-native mask tokens is the program's job.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommandBackend {
    pub name: String,
    pub program: String,
    #[serde(default)]
    pub args: Vec<String>,
    #[serde(default)]
    pub supports_training: bool,
    #[serde(default = "default_max_in")]
    pub max_input_len: u32,
    #[serde(default = "default_max_tgt")]
    pub max_target_len: u32,
}

fn default_max_in() -> u32 {
    1024
}

fn default_max_tgt() -> u32 {
    140
}

pub(crate) fn run_command(program: &str, args: &[String], extra: &[&str]) -> Result<()> {
    let output = Command::new(program)
        .args(args)
        .args(extra)
        .output()
        .map_err(|e| Error::Backend(format!("cannot run '{program}': {e}")))?;
    if !output.status.success() {
        return Err(Error::Backend(format!(
            "'{program} {}' failed ({}): {}",
            extra.first().unwrap_or(&""),
            output.status,
            String::from_utf8_lossy(&output.stderr).trim()
        )));
    }
    Ok(())
}

pub(crate) fn path_arg(path: &Path) -> Result<&str> {
    path.to_str()
        .ok_or_else(|| Error::invalid(format!("non UTF-8 path {}", path.display())))
}

#[derive(Deserialize)]
struct CommandOutput {
    id: String,
    text: String,
}

impl Seq2SeqBackend for CommandBackend {
    fn info(&self) -> BackendInfo {
        BackendInfo {
            name: self.name.clone(),
            supports_training: self.supports_training,
            max_input_len: self.max_input_len,
            max_target_len: self.max_target_len,
        }
    }

    fn train(
        &self,
        examples: &[Seq2SeqExample],
        config: &TrainConfig,
        out_dir: &Path,
    ) -> Result<ModelHandle> {
        if !self.supports_training {
            return Err(Error::Capability(
                "backend does not support training".into(),
            ));
        }
        std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
        let examples_path = out_dir.join("train_examples.jsonl");
        let config_path = out_dir.join("train_config.json");
        write_jsonl(&examples_path, examples)?;
        std::fs::write(&config_path, serde_json::to_vec_pretty(config)?)
            .map_err(|e| Error::io(&config_path, e))?;
        run_command(
            &self.program,
            &self.args,
            &[
                "train",
                path_arg(&examples_path)?,
                path_arg(&config_path)?,
                path_arg(out_dir)?,
            ],
        )?;
        Ok(ModelHandle {
            backend: self.name.clone(),
            path: out_dir.to_path_buf(),
        })
    }

    fn generate(
        &self,
        handle: Option<&ModelHandle>,
        requests: &[GenerationRequest],
        decode: &DecodeConfig,
    ) -> Result<Vec<String>> {
        let work = tempfile::tempdir().map_err(|e| Error::io(std::env::temp_dir(), e))?;
        let requests_path = work.path().join("requests.jsonl");
        let decode_path = work.path().join("decode.json");
        let outputs_path = work.path().join("outputs.jsonl");
        write_jsonl(&requests_path, requests)?;
        std::fs::write(&decode_path, serde_json::to_vec(decode)?)
            .map_err(|e| Error::io(&decode_path, e))?;
        let model = match handle {
            Some(h) => path_arg(&h.path)?.to_string(),
            None => "-".to_string(),
        };
        run_command(
            &self.program,
            &self.args,
            &[
                "generate",
                &model,
                path_arg(&requests_path)?,
                path_arg(&decode_path)?,
                path_arg(&outputs_path)?,
            ],
        )?;
        let outputs: Vec<CommandOutput> = read_jsonl(&outputs_path)?;
        let mut by_id: std::collections::HashMap<String, String> =
            outputs.into_iter().map(|o| (o.id, o.text)).collect();
        Ok(requests
            .iter()
            .map(|r| by_id.remove(&r.id).unwrap_or_default())
            .collect())
    }
}

/// A synthesized negative summary with everything needed to regenerate its masks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratedSummary {
    pub pair_id: String,
    pub text: String,
    pub method: Method,
    pub gamma_a: Option<f64>,
    pub gamma_s: Option<f64>,
    pub unit: Unit,
    pub sample_index: u32,
    /// Global seed the mask placements were derived from.
    pub seed: u64,
}

/// One reconstruction example per pair of the training half (sample index 0).
pub fn make_training_examples(
    split: &CorpusSplit,
    method: Method,
    gamma_a: f64,
    gamma_s: f64,
    masker: &Masker,
) -> Result<Vec<Seq2SeqExample>> {
    if method == Method::Mf {
        return Err(Error::invalid(
            "method 'mf' uses a pre-trained denoiser zero-shot and has no training examples",
        ));
    }
    split
        .train_half
        .par_iter()
        .map(|pair| {
            let prepared = masker.prepare(pair)?;
            let input = masker.model_input(&prepared, method, gamma_a, gamma_s, 0)?;
            Ok(Seq2SeqExample {
                pair_id: pair.id.clone(),
                input: input.text,
                target: pair.summary.clone(),
            })
        })
        .collect()
}

pub fn train_infiller(
    backend: &dyn Seq2SeqBackend,
    examples: &[Seq2SeqExample],
    config: &TrainConfig,
    out_dir: &Path,
) -> Result<ModelHandle> {
    if !backend.info().supports_training {
        return Err(Error::Capability(
            "backend does not support training".into(),
        ));
    }
    if examples.is_empty() {
        return Err(Error::invalid("no training examples"));
    }
    backend.train(examples, config, out_dir)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenerationSettings {
    pub method: Method,
    pub gamma_a: f64,
    pub gamma_s: f64,
    pub n_samples: u32,
    pub decode: DecodeConfig,
}

/// Generate `n_samples` negatives for every pair of the generation half.
///
/// Each sample uses its own mask placement. Empty generations are dropped
/// with a warning rather than retried.
pub fn generate_negatives(
    backend: &dyn Seq2SeqBackend,
    handle: Option<&ModelHandle>,
    split: &CorpusSplit,
    settings: &GenerationSettings,
    masker: &Masker,
) -> Result<Vec<GeneratedSummary>> {
    let method = settings.method;
    if settings.n_samples == 0 {
        return Err(Error::invalid("n_samples must be at least 1"));
    }
    if method == Method::Mf && handle.is_some() {
        return Err(Error::invalid(
            "method 'mf' generates zero-shot and takes no trained handle",
        ));
    }
    let per_pair: Vec<Vec<(GenerationRequest, u32, String)>> = split
        .gen_half
        .par_iter()
        .map(|pair| {
            let prepared = masker.prepare(pair)?;
            (0..settings.n_samples)
                .map(|sample| {
                    let input = masker.model_input(
                        &prepared,
                        method,
                        settings.gamma_a,
                        settings.gamma_s,
                        sample,
                    )?;
                    if input
                        .masked_summary
                        .as_ref()
                        .is_some_and(|m| m.is_unperturbed())
                    {
                        log::warn!(
                            "pair {}: summary has no masked span (sample {sample})",
                            pair.id
                        );
                    }
                    let request = GenerationRequest {
                        id: format!("{}#{sample}", pair.id),
                        input: input.text,
                        method,
                        seed: pair_seed(masker.global_seed(), &pair.id, "generate", sample),
                    };
                    Ok((request, sample, pair.id.clone()))
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    let flat: Vec<_> = per_pair.into_iter().flatten().collect();
    let requests: Vec<GenerationRequest> = flat.iter().map(|(r, _, _)| r.clone()).collect();
    let outputs = backend.generate(handle, &requests, &settings.decode)?;
    if outputs.len() != requests.len() {
        return Err(Error::Backend(format!(
            "backend returned {} outputs for {} requests",
            outputs.len(),
            requests.len()
        )));
    }
    let mut negatives = Vec::with_capacity(outputs.len());
    for ((request, sample, pair_id), text) in flat.into_iter().zip(outputs) {
        let text = normalize_whitespace(&text);
        if text.is_empty() {
            log::warn!("dropping empty generation for {}", request.id);
            continue;
        }
        negatives.push(GeneratedSummary {
            pair_id,
            text,
            method,
            gamma_a: method.uses_article().then_some(settings.gamma_a),
            gamma_s: method.uses_summary().then_some(settings.gamma_s),
            unit: masker.unit(),
            sample_index: sample,
            seed: masker.global_seed(),
        });
    }
    Ok(negatives)
}

pub fn save_negatives(path: &Path, negatives: &[GeneratedSummary]) -> Result<()> {
    write_jsonl(path, negatives)
}

pub fn load_negatives(path: &Path) -> Result<Vec<GeneratedSummary>> {
    read_jsonl(path)
}

pub fn save_examples(path: &Path, examples: &[Seq2SeqExample]) -> Result<()> {
    write_jsonl(path, examples)
}
