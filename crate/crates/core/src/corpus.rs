//! Article/summary corpora, human-judgment benchmarks and the seeded half split.

use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::label::Label;
use crate::text::normalize_whitespace;

/// Number of training pairs in the CNN/DM export used for the published runs.
pub const CNNDM_TRAIN_SIZE: usize = 287_113;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DocumentPair {
    pub id: String,
    pub article: String,
    pub summary: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CorpusFormat {
    /// One JSON object per line: `{id?, article, summary}`.
    #[serde(rename = "jsonl-pairs")]
    JsonlPairs,
    /// A directory of CNN/DM `.story` files (or a single one).
    #[serde(rename = "cnndm-stories")]
    CnndmStories,
}

impl CorpusFormat {
    pub fn as_str(self) -> &'static str {
        match self {
            CorpusFormat::JsonlPairs => "jsonl-pairs",
            CorpusFormat::CnndmStories => "cnndm-stories",
        }
    }
}

impl FromStr for CorpusFormat {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "jsonl-pairs" => Ok(CorpusFormat::JsonlPairs),
            "cnndm-stories" => Ok(CorpusFormat::CnndmStories),
            _ => Err(Error::Unknown {
                kind: "corpus format",
                value: s.to_string(),
            }),
        }
    }
}

#[derive(Deserialize)]
struct RawPair {
    id: Option<String>,
    article: Option<String>,
    summary: Option<String>,
}

fn source_name(path: &Path) -> String {
    path.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

fn read_lines(path: &Path) -> Result<Vec<String>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    BufReader::new(file)
        .lines()
        .collect::<std::io::Result<Vec<_>>>()
        .map_err(|e| Error::io(path, e))
}

pub fn load_pairs(path: &Path, format: CorpusFormat) -> Result<Vec<DocumentPair>> {
    let pairs = match format {
        CorpusFormat::JsonlPairs => parse_pairs_jsonl(&read_lines(path)?, &source_name(path))?,
        CorpusFormat::CnndmStories => load_stories(path)?,
    };
    if pairs.is_empty() {
        return Err(Error::invalid(format!("{}: empty corpus", path.display())));
    }
    Ok(pairs)
}

/// Parse JSONL pair records. Blank lines are skipped; missing ids become `<source>:<line>`.
pub fn parse_pairs_jsonl(lines: &[String], source: &str) -> Result<Vec<DocumentPair>> {
    let mut pairs = Vec::new();
    let mut seen = HashSet::new();
    for (idx, line) in lines.iter().enumerate() {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |message: String| Error::Parse {
            source_name: source.to_string(),
            line: line_no,
            message,
        };
        let raw: RawPair =
            serde_json::from_str(line).map_err(|e| parse_err(format!("malformed record ({e})")))?;
        let article = normalize_whitespace(raw.article.as_deref().unwrap_or(""));
        let summary = normalize_whitespace(raw.summary.as_deref().unwrap_or(""));
        if article.is_empty() {
            return Err(parse_err("empty article".into()));
        }
        if summary.is_empty() {
            return Err(parse_err("empty summary".into()));
        }
        let id = match raw.id {
            Some(id) if !id.trim().is_empty() => id,
            Some(_) => return Err(parse_err("empty id".into())),
            None => format!("{source}:{line_no}"),
        };
        if !seen.insert(id.clone()) {
            return Err(parse_err(format!("duplicate id '{id}'")));
        }
        pairs.push(DocumentPair {
            id,
            article,
            summary,
        });
    }
    if pairs.is_empty() {
        return Err(Error::invalid(format!("{source}: empty file")));
    }
    Ok(pairs)
}

pub fn save_pairs(path: &Path, pairs: &[DocumentPair]) -> Result<()> {
    write_jsonl(path, pairs)
}

pub(crate) fn write_jsonl<T: Serialize>(path: &Path, records: &[T]) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let mut out = std::io::BufWriter::new(fs::File::create(path).map_err(|e| Error::io(path, e))?);
    for record in records {
        serde_json::to_writer(&mut out, record)?;
        out.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

pub(crate) fn read_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let name = source_name(path);
    read_lines(path)?
        .iter()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::Parse {
                source_name: name.clone(),
                line: i + 1,
                message: format!("malformed record ({e})"),
            })
        })
        .collect()
}

fn load_stories(path: &Path) -> Result<Vec<DocumentPair>> {
    let mut files = if path.is_dir() {
        fs::read_dir(path)
            .map_err(|e| Error::io(path, e))?
            .filter_map(|entry| entry.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|ext| ext == "story"))
            .collect::<Vec<_>>()
    } else {
        vec![path.to_path_buf()]
    };
    files.sort();
    files
        .iter()
        .map(|file| {
            let text = fs::read_to_string(file).map_err(|e| Error::io(file, e))?;
            let id = file
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default();
            parse_story(&id, &text).map_err(|message| Error::Parse {
                source_name: source_name(file),
                line: 1,
                message,
            })
        })
        .collect()
}

/// Split a CNN/DM story into article text and `@highlight` sentences.
fn parse_story(id: &str, text: &str) -> std::result::Result<DocumentPair, String> {
    let mut article = Vec::new();
    let mut highlights = Vec::new();
    let mut next_is_highlight = false;
    for line in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
        if line == "@highlight" {
            next_is_highlight = true;
        } else if next_is_highlight {
            let ends_with_punct = line.ends_with(['.', '!', '?', '"', '\'']);
            highlights.push(if ends_with_punct {
                line.to_string()
            } else {
                format!("{line} .")
            });
            next_is_highlight = false;
        } else {
            article.push(line);
        }
    }
    let article = normalize_whitespace(&article.join(" "));
    let summary = normalize_whitespace(&highlights.join(" "));
    if article.is_empty() {
        return Err("empty article".into());
    }
    if summary.is_empty() {
        return Err("empty summary".into());
    }
    Ok(DocumentPair {
        id: id.to_string(),
        article,
        summary,
    })
}

/// Disjoint halves of a corpus: one trains the infiller, the other is used for generation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusSplit {
    pub train_half: Vec<DocumentPair>,
    pub gen_half: Vec<DocumentPair>,
    pub seed: u64,
}

/// Seeded half split. The result depends only on the set of ids and the seed:
/// pairs are sorted by id, shuffled with ChaCha8 and cut at `ceil(n / 2)`.
pub fn split_half(pairs: &[DocumentPair], seed: u64) -> Result<CorpusSplit> {
    if pairs.len() < 2 {
        return Err(Error::invalid(format!(
            "split needs at least 2 pairs, got {}",
            pairs.len()
        )));
    }
    let mut sorted: Vec<DocumentPair> = pairs.to_vec();
    sorted.sort_by(|a, b| a.id.cmp(&b.id));
    if let Some(w) = sorted.windows(2).find(|w| w[0].id == w[1].id) {
        return Err(Error::invalid(format!("duplicate pair id '{}'", w[0].id)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sorted.shuffle(&mut rng);
    let gen_half = sorted.split_off(pairs.len().div_ceil(2));
    Ok(CorpusSplit {
        train_half: sorted,
        gen_half,
        seed,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BenchmarkSchema {
    #[serde(rename = "factcc-test")]
    FactccTest,
    #[serde(rename = "xsumhall")]
    XsumHall,
    #[serde(rename = "summeval")]
    SummEval,
    #[serde(rename = "qags-cnndm")]
    QagsCnndm,
    #[serde(rename = "qags-xsum")]
    QagsXsum,
    #[serde(rename = "frank-cnndm")]
    FrankCnndm,
    #[serde(rename = "frank-xsum")]
    FrankXsum,
}

impl BenchmarkSchema {
    pub const ALL: [BenchmarkSchema; 7] = [
        BenchmarkSchema::FactccTest,
        BenchmarkSchema::XsumHall,
        BenchmarkSchema::SummEval,
        BenchmarkSchema::QagsCnndm,
        BenchmarkSchema::QagsXsum,
        BenchmarkSchema::FrankCnndm,
        BenchmarkSchema::FrankXsum,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            BenchmarkSchema::FactccTest => "factcc-test",
            BenchmarkSchema::XsumHall => "xsumhall",
            BenchmarkSchema::SummEval => "summeval",
            BenchmarkSchema::QagsCnndm => "qags-cnndm",
            BenchmarkSchema::QagsXsum => "qags-xsum",
            BenchmarkSchema::FrankCnndm => "frank-cnndm",
            BenchmarkSchema::FrankXsum => "frank-xsum",
        }
    }

    /// Benchmarks distributed with a binary label per summary.
    pub fn is_binary(self) -> bool {
        matches!(
            self,
            BenchmarkSchema::FactccTest | BenchmarkSchema::XsumHall
        )
    }

    pub fn is_likert(self) -> bool {
        self == BenchmarkSchema::SummEval
    }

    /// Size of the published release, when known. Used to sanity-check full exports.
    pub fn published_record_count(self) -> Option<usize> {
        match self {
            BenchmarkSchema::FactccTest => Some(513),
            BenchmarkSchema::SummEval => Some(1600),
            BenchmarkSchema::QagsCnndm => Some(235),
            BenchmarkSchema::QagsXsum => Some(239),
            BenchmarkSchema::FrankCnndm => Some(1250),
            BenchmarkSchema::FrankXsum => Some(996),
            // "2K" summaries; the exact filtered count depends on the release.
            BenchmarkSchema::XsumHall => None,
        }
    }
}

impl fmt::Display for BenchmarkSchema {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BenchmarkSchema {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        BenchmarkSchema::ALL
            .into_iter()
            .find(|b| b.as_str() == s)
            .ok_or_else(|| Error::Unknown {
                kind: "benchmark schema",
                value: s.to_string(),
            })
    }
}

/// Per-annotator human judgments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Judgments {
    /// Likert scores in 1..=5.
    Likert(Vec<u8>),
    /// One consistent/inconsistent flag per annotator.
    Flags(Vec<Label>),
}

impl Judgments {
    pub fn len(&self) -> usize {
        match self {
            Judgments::Likert(v) => v.len(),
            Judgments::Flags(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Mean Likert score, or the fraction of annotators flagging the summary consistent.
    pub fn mean_score(&self) -> Option<f64> {
        if self.is_empty() {
            return None;
        }
        let total: f64 = match self {
            Judgments::Likert(v) => v.iter().map(|&s| f64::from(s)).sum(),
            Judgments::Flags(v) => v.iter().filter(|&&l| l == Label::Consistent).count() as f64,
        };
        Some(total / self.len() as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkRecord {
    pub id: String,
    pub article: String,
    pub summary: String,
    pub judgments: Judgments,
    pub binary_label: Option<Label>,
    pub numeric_score: Option<f64>,
}

#[derive(Deserialize)]
struct RawBenchmark {
    id: Option<String>,
    article: Option<String>,
    summary: Option<String>,
    #[serde(default)]
    judgments: Option<Vec<serde_json::Value>>,
    label: Option<serde_json::Value>,
    score: Option<f64>,
}

/// Load a benchmark file. Labels are set only for benchmarks released as binary;
/// the others wait for a binarization rule. When `score` is absent the numeric
/// score falls back to the judgments' mean.
pub fn load_benchmark(path: &Path, schema: BenchmarkSchema) -> Result<Vec<BenchmarkRecord>> {
    let records = parse_benchmark_jsonl(&read_lines(path)?, &source_name(path), schema)?;
    if records.is_empty() {
        return Err(Error::invalid(format!(
            "{}: empty benchmark",
            path.display()
        )));
    }
    Ok(records)
}

pub fn parse_benchmark_jsonl(
    lines: &[String],
    source: &str,
    schema: BenchmarkSchema,
) -> Result<Vec<BenchmarkRecord>> {
    let mut out = Vec::new();
    for (idx, line) in lines.iter().enumerate() {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let err = |message: String| Error::Parse {
            source_name: source.to_string(),
            line: line_no,
            message,
        };
        let raw: RawBenchmark =
            serde_json::from_str(line).map_err(|e| err(format!("malformed record ({e})")))?;
        let article = normalize_whitespace(raw.article.as_deref().unwrap_or(""));
        let summary = normalize_whitespace(raw.summary.as_deref().unwrap_or(""));
        if article.is_empty() || summary.is_empty() {
            return Err(err("empty article or summary".into()));
        }
        let id = raw.id.unwrap_or_else(|| format!("{source}:{line_no}"));
        let raw_judgments = raw.judgments.unwrap_or_default();

        let (judgments, binary_label) = if schema.is_binary() {
            let label = raw
                .label
                .as_ref()
                .and_then(Label::from_json)
                .ok_or_else(|| err("missing or unreadable label".into()))?;
            let flags = if raw_judgments.is_empty() {
                vec![label]
            } else {
                parse_flags(&raw_judgments).map_err(err)?
            };
            (Judgments::Flags(flags), Some(label))
        } else {
            if raw_judgments.is_empty() {
                return Err(err("missing annotator judgments".into()));
            }
            let judgments = if schema.is_likert() {
                Judgments::Likert(parse_likert(&raw_judgments).map_err(err)?)
            } else {
                Judgments::Flags(parse_flags(&raw_judgments).map_err(err)?)
            };
            (judgments, None)
        };
        let numeric_score = raw.score.or_else(|| judgments.mean_score());
        out.push(BenchmarkRecord {
            id,
            article,
            summary,
            judgments,
            binary_label,
            numeric_score,
        });
    }
    Ok(out)
}

fn parse_likert(values: &[serde_json::Value]) -> std::result::Result<Vec<u8>, String> {
    values
        .iter()
        .map(|v| {
            v.as_u64()
                .filter(|s| (1..=5).contains(s))
                .map(|s| s as u8)
                .ok_or_else(|| format!("judgment {v} is not a Likert score in 1..=5"))
        })
        .collect()
}

fn parse_flags(values: &[serde_json::Value]) -> std::result::Result<Vec<Label>, String> {
    values
        .iter()
        .map(|v| Label::from_json(v).ok_or_else(|| format!("judgment {v} is not a binary flag")))
        .collect()
}
