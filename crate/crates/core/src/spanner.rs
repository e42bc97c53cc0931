//! Maskable span extraction.
//!
//! Spans are byte ranges into the source text, always on `char` boundaries.
//! Extraction goes through an [`Annotator`], which reports raw mentions for a
//! unit; [`extract_spans`] validates them, sorts them and merges overlaps so
//! callers always receive a sorted, non-overlapping list.

use std::collections::HashMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use unicode_segmentation::UnicodeSegmentation;

use crate::error::{Error, Result};
use crate::text::whitespace_tokens;

/// Linguistic unit a span was extracted at.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Unit {
    #[serde(rename = "np_ent")]
    NpEnt,
    #[serde(rename = "token")]
    Token,
    #[serde(rename = "sentence")]
    Sentence,
}

impl Unit {
    pub const ALL: [Unit; 3] = [Unit::NpEnt, Unit::Token, Unit::Sentence];

    pub fn as_str(self) -> &'static str {
        match self {
            Unit::NpEnt => "np_ent",
            Unit::Token => "token",
            Unit::Sentence => "sentence",
        }
    }
}

impl fmt::Display for Unit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Unit {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Unit::ALL
            .into_iter()
            .find(|u| u.as_str() == s)
            .ok_or_else(|| Error::Unknown {
                kind: "unit",
                value: s.to_string(),
            })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
    pub unit: Unit,
    pub surface: String,
}

impl Span {
    /// Build a span over `text[start..end]`, checking bounds and char boundaries.
    pub fn new(text: &str, start: usize, end: usize, unit: Unit) -> Result<Span> {
        if start >= end || end > text.len() {
            return Err(Error::invalid(format!(
                "span {start}..{end} out of bounds for text of length {}",
                text.len()
            )));
        }
        let surface = text
            .get(start..end)
            .ok_or_else(|| Error::invalid(format!("span {start}..{end} splits a character")))?;
        Ok(Span {
            start,
            end,
            unit,
            surface: surface.to_string(),
        })
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.start == self.end
    }

    fn overlaps(&self, other: &Span) -> bool {
        self.start < other.end && other.start < self.end
    }
}

/// Source of raw mentions for one or more units.
///
/// Implementations must be deterministic for a fixed input text. Extraction is
/// called from worker threads, so annotators are `Send + Sync`; wrappers around
/// non-reentrant models should hold one instance per worker.
pub trait Annotator: Send + Sync {
    fn name(&self) -> &str;

    fn supports(&self, unit: Unit) -> bool;

    /// Raw `(start, end)` byte ranges; may overlap and may be unsorted.
    fn mentions(&self, text: &str, unit: Unit) -> Result<Vec<(usize, usize)>>;
}

pub fn extract_spans(text: &str, unit: Unit, annotator: &dyn Annotator) -> Result<Vec<Span>> {
    if !annotator.supports(unit) {
        return Err(Error::Capability(format!(
            "annotator '{}' does not support unit '{unit}'",
            annotator.name()
        )));
    }
    if text.trim().is_empty() {
        return Err(Error::invalid("cannot extract spans from empty text"));
    }
    let mut spans = annotator
        .mentions(text, unit)?
        .into_iter()
        .filter(|(s, e)| s < e)
        .map(|(s, e)| {
            Span::new(text, s, e, unit).map_err(|err| {
                Error::Backend(format!("annotator '{}' produced {err}", annotator.name()))
            })
        })
        .collect::<Result<Vec<_>>>()?;
    spans.sort_by_key(|s| (s.start, s.end));
    merge_overlaps(&spans)
}

/// Merge spans whose character ranges overlap. Touching spans stay separate.
pub fn merge_overlaps(spans: &[Span]) -> Result<Vec<Span>> {
    if spans.windows(2).any(|w| w[0].start > w[1].start) {
        return Err(Error::invalid("spans must be sorted by start offset"));
    }
    let mut out: Vec<Span> = Vec::with_capacity(spans.len());
    for span in spans {
        match out.last_mut() {
            Some(last) if last.overlaps(span) => {
                if span.end > last.end {
                    let tail = &span.surface[last.end - span.start..];
                    last.surface.push_str(tail);
                    last.end = span.end;
                }
            }
            _ => out.push(span.clone()),
        }
    }
    Ok(out)
}

/// Sentence ranges with surrounding whitespace trimmed.
pub fn sentence_ranges(text: &str) -> Vec<(usize, usize)> {
    text.split_sentence_bound_indices()
        .filter_map(|(offset, sentence)| {
            let lead = sentence.len() - sentence.trim_start().len();
            let trimmed = sentence.trim();
            (!trimmed.is_empty()).then(|| (offset + lead, offset + lead + trimmed.len()))
        })
        .collect()
}

/// Rule-based fallback annotator.
///
/// Entities are runs of capitalized or numeric words; noun chunks start at a
/// determiner or possessive pronoun and extend over content words until a
/// function word or clause punctuation. Tokens are whitespace-delimited and
/// sentences follow Unicode sentence boundaries.
#[derive(Debug, Default, Clone, Copy)]
pub struct RuleAnnotator;

impl RuleAnnotator {
    pub const NAME: &'static str = "rules";
}

const DETERMINERS: &[&str] = &[
    "the", "a", "an", "this", "that", "these", "those", "his", "her", "its", "their", "our", "my",
    "your", "some", "any", "each", "every", "no", "another", "several", "many",
];

const FUNCTION_WORDS: &[&str] = &[
    // prepositions
    "of", "in", "on", "at", "to", "for", "with", "by", "from", "about", "as", "into", "over",
    "after", "before", "under", "between", "through", "during", "until", "against", "among",
    "around", "without", "within", "than", "since", "across", "near", "per", "via",
    // conjunctions
    "and", "or", "but", "nor", "so", "yet", "if", "because", "while", "although", "when", "where",
    "whether", // auxiliaries and reporting verbs
    "is", "are", "was", "were", "be", "been", "being", "has", "have", "had", "do", "does", "did",
    "will", "would", "can", "could", "should", "may", "might", "must", "shall", "said", "says",
    "say", "told", "tells", // pronouns and relatives
    "he", "she", "it", "they", "we", "i", "you", "him", "them", "us", "who", "whom", "which",
    "what", "whose", // adverbs
    "not", "also", "very", "just", "only", "now", "then", "there", "here", "still", "even", "too",
    "again",
];

/// Common verbs that end a noun chunk; regular past tenses are caught by suffix.
const CHUNK_VERBS: &[&str] = &[
    "won", "beat", "lost", "rose", "fell", "became", "become", "made", "make", "took", "take",
    "gave", "give", "went", "go", "came", "come", "left", "leave", "met", "meet", "found", "find",
    "got", "get", "began", "begin", "saw", "see", "held", "hold", "led", "lead", "ran", "run",
    "set", "put", "kept", "keep", "brought", "bring", "thought", "think", "plans", "expects",
    "remains", "remain", "includes", "include", "insists", "wants", "needs", "seems",
];

#[derive(Debug)]
struct Word<'a> {
    start: usize,
    end: usize,
    core: &'a str,
    lower: String,
    /// Clause punctuation or a possessive directly after the core.
    closes: bool,
    /// Punctuation directly before the core (opening quote, bracket...).
    opens: bool,
    /// The word finishes a sentence.
    sentence_final: bool,
    possessive: bool,
}

impl Word<'_> {
    fn is_capitalized(&self) -> bool {
        self.core.chars().next().is_some_and(char::is_uppercase)
    }

    fn has_digit(&self) -> bool {
        self.core.chars().any(|c| c.is_ascii_digit())
    }

    fn is_function_word(&self) -> bool {
        FUNCTION_WORDS.contains(&self.lower.as_str()) || DETERMINERS.contains(&self.lower.as_str())
    }
}

fn words(text: &str) -> Vec<Word<'_>> {
    let mut out: Vec<Word<'_>> = Vec::new();
    // A free-standing punctuation token ("--", " .") closes the word before it
    // and opens the one after it.
    let mut pending_open = false;
    for (s, e) in whitespace_tokens(text) {
        let raw = &text[s..e];
        let lead = raw.len() - raw.trim_start_matches(|c: char| !c.is_alphanumeric()).len();
        let trimmed = raw.trim_matches(|c: char| !c.is_alphanumeric());
        if trimmed.is_empty() {
            if let Some(prev) = out.last_mut() {
                prev.closes = true;
                prev.sentence_final |= raw.contains(['.', '!', '?']);
            }
            pending_open = true;
            continue;
        }
        let mut core_len = trimmed.len();
        let mut possessive = false;
        for suffix in ["'s", "\u{2019}s"] {
            if trimmed.len() > suffix.len() && trimmed.ends_with(suffix) {
                core_len -= suffix.len();
                possessive = true;
                break;
            }
        }
        let start = s + lead;
        let end = start + core_len;
        let after = &text[start + trimmed.len()..e];
        let core = &text[start..end];
        out.push(Word {
            start,
            end,
            core,
            lower: core.to_lowercase(),
            closes: possessive || !after.is_empty(),
            opens: lead > 0 || pending_open,
            sentence_final: after.contains(['.', '!', '?']),
            possessive,
        });
        pending_open = false;
    }
    out
}

fn entity_mentions(words: &[Word<'_>]) -> Vec<(usize, usize)> {
    let mid_sentence_caps: std::collections::HashSet<&str> = words
        .iter()
        .enumerate()
        .filter(|(i, w)| *i > 0 && !words[i - 1].sentence_final && w.is_capitalized())
        .map(|(_, w)| w.core)
        .collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < words.len() {
        let is_entity_word = |w: &Word<'_>| w.is_capitalized() || w.has_digit();
        if !is_entity_word(&words[i]) {
            i += 1;
            continue;
        }
        let begin = i;
        let mut end = i;
        while !words[end].closes && end + 1 < words.len() {
            let next = &words[end + 1];
            if next.opens || !is_entity_word(next) {
                break;
            }
            end += 1;
        }
        // Sentence-initial function words ("The", "He") are capitalized but not names.
        let mut first = begin;
        while first <= end
            && words[first].is_function_word()
            && (first == 0 || words[first - 1].sentence_final)
        {
            first += 1;
        }
        // A lone capitalized word opening a sentence is only a name if the
        // text also capitalizes it mid-sentence.
        let lone_initial = first == end
            && (first == 0 || words[first - 1].sentence_final)
            && !words[first].has_digit()
            && !words[first].possessive
            && !mid_sentence_caps.contains(words[first].core);
        if first <= end && !lone_initial {
            out.push((words[first].start, words[end].end));
        }
        i = end + 1;
    }
    out
}

fn noun_chunks(words: &[Word<'_>]) -> Vec<(usize, usize)> {
    const MAX_CHUNK: usize = 6;
    let mut out = Vec::new();
    for (i, det) in words.iter().enumerate() {
        if det.closes || !DETERMINERS.contains(&det.lower.as_str()) {
            continue;
        }
        let mut last = None;
        let mut j = i + 1;
        while j < words.len() && j - i <= MAX_CHUNK {
            let w = &words[j];
            if w.opens {
                break;
            }
            let coordination = (w.lower == "and" || w.lower == "&")
                && words[j - 1].is_capitalized()
                && !words[j - 1].closes
                && words.get(j + 1).is_some_and(Word::is_capitalized);
            if w.is_function_word() && !coordination {
                break;
            }
            let verb_like = CHUNK_VERBS.contains(&w.lower.as_str())
                || (w.lower.len() > 3 && w.lower.ends_with("ed") && !w.is_capitalized());
            if verb_like && last.is_some() {
                break;
            }
            if !coordination {
                last = Some(j);
            }
            if w.closes {
                break;
            }
            j += 1;
        }
        if let Some(last) = last {
            out.push((det.start, words[last].end));
        }
    }
    out
}

impl Annotator for RuleAnnotator {
    fn name(&self) -> &str {
        Self::NAME
    }

    fn supports(&self, _unit: Unit) -> bool {
        true
    }

    fn mentions(&self, text: &str, unit: Unit) -> Result<Vec<(usize, usize)>> {
        Ok(match unit {
            Unit::Token => whitespace_tokens(text),
            Unit::Sentence => sentence_ranges(text),
            Unit::NpEnt => {
                let words = words(text);
                let mut mentions = entity_mentions(&words);
                mentions.extend(noun_chunks(&words));
                mentions
            }
        })
    }
}

/// Annotator backed by mentions computed offline by an external tagger.
///
/// The file is JSONL, one `{"text": ..., "spans": [[start, end], ...]}` record
/// per text, with offsets counted in Unicode scalar values (the convention of
/// Python string indices). Texts are matched exactly.
#[derive(Debug, Default, Clone)]
pub struct PrecomputedAnnotator {
    by_text: HashMap<String, Vec<(usize, usize)>>,
}

#[derive(Deserialize)]
struct PrecomputedRecord {
    text: String,
    spans: Vec<(usize, usize)>,
}

impl PrecomputedAnnotator {
    pub const NAME: &'static str = "precomputed";

    pub fn load(path: &Path) -> Result<Self> {
        let records: Vec<PrecomputedRecord> = crate::corpus::read_jsonl(path)?;
        let mut by_text = HashMap::with_capacity(records.len());
        for rec in records {
            let byte_spans = char_to_byte_spans(&rec.text, &rec.spans).ok_or_else(|| {
                Error::invalid(format!(
                    "{}: span offsets out of range for text {:?}",
                    path.display(),
                    rec.text.chars().take(40).collect::<String>()
                ))
            })?;
            by_text.insert(crate::text::normalize_whitespace(&rec.text), byte_spans);
        }
        Ok(PrecomputedAnnotator { by_text })
    }

    pub fn insert(&mut self, text: &str, byte_spans: Vec<(usize, usize)>) {
        self.by_text.insert(text.to_string(), byte_spans);
    }
}

fn char_to_byte_spans(text: &str, spans: &[(usize, usize)]) -> Option<Vec<(usize, usize)>> {
    let mut offsets: Vec<usize> = text.char_indices().map(|(b, _)| b).collect();
    offsets.push(text.len());
    spans
        .iter()
        .map(|&(s, e)| Some((*offsets.get(s)?, *offsets.get(e)?)))
        .collect()
}

impl Annotator for PrecomputedAnnotator {
    fn name(&self) -> &str {
        Self::NAME
    }

    fn supports(&self, unit: Unit) -> bool {
        unit == Unit::NpEnt
    }

    fn mentions(&self, text: &str, _unit: Unit) -> Result<Vec<(usize, usize)>> {
        self.by_text.get(text).cloned().ok_or_else(|| {
            Error::invalid(format!(
                "no precomputed annotation for text {:?}",
                text.chars().take(40).collect::<String>()
            ))
        })
    }
}

/// Annotators by name.
#[derive(Clone)]
pub struct AnnotatorRegistry {
    entries: HashMap<String, Arc<dyn Annotator>>,
}

impl Default for AnnotatorRegistry {
    fn default() -> Self {
        let mut registry = AnnotatorRegistry {
            entries: HashMap::new(),
        };
        registry.register(Arc::new(RuleAnnotator));
        registry
    }
}

impl AnnotatorRegistry {
    pub fn register(&mut self, annotator: Arc<dyn Annotator>) {
        self.entries.insert(annotator.name().to_string(), annotator);
    }

    pub fn get(&self, name: &str) -> Result<Arc<dyn Annotator>> {
        self.entries
            .get(name)
            .cloned()
            .ok_or_else(|| Error::Unknown {
                kind: "annotator",
                value: name.to_string(),
            })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn surfaces(text: &str, unit: Unit) -> Vec<String> {
        extract_spans(text, unit, &RuleAnnotator)
            .unwrap()
            .into_iter()
            .map(|s| s.surface)
            .collect()
    }

    fn span(start: usize, end: usize) -> Span {
        let text = "x".repeat(64);
        Span::new(&text, start, end, Unit::NpEnt).unwrap()
    }

    #[test]
    fn tokens_are_whitespace_words() {
        let spans = extract_spans("a b c", Unit::Token, &RuleAnnotator).unwrap();
        let ranges: Vec<_> = spans.iter().map(|s| (s.start, s.end)).collect();
        assert_eq!(ranges, vec![(0, 1), (2, 3), (4, 5)]);
    }

    #[test]
    fn sentences_partition_text() {
        let text = "Leeds won. Hull lost!  Fans were upset?";
        let spans = surfaces(text, Unit::Sentence);
        assert_eq!(spans, vec!["Leeds won.", "Hull lost!", "Fans were upset?"]);
    }

    #[test]
    fn np_ent_on_example_article() {
        let text = "Guus Hiddink, the Russia and Chelsea coach, has had much to smile about in his 22-year managerial career.";
        let found = surfaces(text, Unit::NpEnt);
        assert!(found.contains(&"Guus Hiddink".to_string()), "{found:?}");
        assert!(
            found.contains(&"the Russia and Chelsea coach".to_string()),
            "{found:?}"
        );
        assert!(
            found.contains(&"his 22-year managerial career".to_string()),
            "{found:?}"
        );
    }

    #[test]
    fn np_ent_skips_sentence_initial_function_words() {
        let found = surfaces(
            "The storm moved north. He said Andrea was weak.",
            Unit::NpEnt,
        );
        assert!(found.contains(&"The storm".to_string()), "{found:?}");
        assert!(found.contains(&"Andrea".to_string()), "{found:?}");
        assert!(!found.iter().any(|s| s == "He"), "{found:?}");
    }

    #[test]
    fn possessives_end_entities() {
        let found = surfaces("Hiddink's resume includes Valencia.", Unit::NpEnt);
        assert_eq!(found, vec!["Hiddink", "Valencia"]);
    }

    #[test]
    fn no_spans_in_lowercase_function_text() {
        assert!(surfaces("and then it was over", Unit::NpEnt).is_empty());
    }

    #[test]
    fn merge_forced_and_disjoint() {
        let merged = merge_overlaps(&[span(0, 5), span(3, 8)]).unwrap();
        assert_eq!((merged[0].start, merged[0].end), (0, 8));
        assert_eq!(merged.len(), 1);
        assert_eq!(merged[0].surface.len(), 8);

        let kept = merge_overlaps(&[span(0, 2), span(4, 6)]).unwrap();
        assert_eq!(kept.len(), 2);

        let nested = merge_overlaps(&[span(0, 10), span(2, 4)]).unwrap();
        assert_eq!((nested[0].start, nested[0].end), (0, 10));

        assert!(merge_overlaps(&[span(4, 6), span(0, 2)]).is_err());
    }

    #[test]
    fn unsupported_unit_is_capability_error() {
        let ann = PrecomputedAnnotator::default();
        let err = extract_spans("a b", Unit::Token, &ann).unwrap_err();
        assert!(matches!(err, Error::Capability(_)));
    }

    #[test]
    fn precomputed_uses_char_offsets() {
        let text = "Zürich won";
        let spans = char_to_byte_spans(text, &[(0, 6), (7, 10)]).unwrap();
        assert_eq!(&text[spans[0].0..spans[0].1], "Zürich");
        assert_eq!(&text[spans[1].0..spans[1].1], "won");
        assert!(char_to_byte_spans(text, &[(0, 11)]).is_none());
    }

    #[test]
    fn registry_lookup() {
        let reg = AnnotatorRegistry::default();
        assert_eq!(reg.get("rules").unwrap().name(), "rules");
        assert!(reg.get("spacy").is_err());
    }
}
