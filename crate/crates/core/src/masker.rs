//! Mask selection, sentinel substitution and model-input serialization.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::DocumentPair;
use crate::error::{Error, Result};
use crate::seed::pair_seed;
use crate::spanner::{extract_spans, Annotator, Span, Unit};

pub const SUMMARY_PREFIX: &str = "Summary: ";
pub const ARTICLE_PREFIX: &str = " Article: ";

/// Negative-summary generation method.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// Fill a masked summary conditioned on a masked article.
    Mfma,
    /// Summarize a masked article.
    Msm,
    /// Fill a masked summary with no article context.
    Mf,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Mfma, Method::Msm, Method::Mf];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Mfma => "mfma",
            Method::Msm => "msm",
            Method::Mf => "mf",
        }
    }

    pub fn uses_article(self) -> bool {
        matches!(self, Method::Mfma | Method::Msm)
    }

    pub fn uses_summary(self) -> bool {
        matches!(self, Method::Mfma | Method::Mf)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::Unknown {
                kind: "method",
                value: s.to_string(),
            })
    }
}

/// Which side of a pair is being masked; part of the seed derivation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Article,
    Summary,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::Article => "article",
            Role::Summary => "summary",
        }
    }
}

pub fn sentinel(index: usize) -> String {
    format!("<mask_{index}>")
}

/// Number of spans masked at ratio `gamma`: zero for `gamma == 0` or no spans,
/// otherwise `max(1, round_half_up(gamma * n))`.
///
/// The product is nudged by 1e-9 before flooring so that decimal ratios such as
/// 0.7 * 5 round up as they would in exact arithmetic.
pub fn mask_count(n_spans: usize, gamma: f64) -> usize {
    if gamma <= 0.0 || n_spans == 0 {
        return 0;
    }
    let rounded = (gamma * n_spans as f64 + 0.5 + 1e-9).floor() as usize;
    rounded.clamp(1, n_spans)
}

fn check_gamma(gamma: f64) -> Result<()> {
    if gamma.is_finite() && (0.0..=1.0).contains(&gamma) {
        Ok(())
    } else {
        Err(Error::invalid(format!("mask ratio {gamma} outside [0, 1]")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskPlan {
    pub all_spans: Vec<Span>,
    pub masked_spans: Vec<Span>,
    pub gamma: f64,
    pub rng_seed: u64,
}

/// Uniform seeded sample of `mask_count(spans.len(), gamma)` spans without replacement.
///
/// Sampling is a partial Fisher-Yates shuffle of span indices driven by
/// ChaCha8 seeded with `seed`; the chosen spans are returned in text order.
pub fn select_masks(spans: &[Span], gamma: f64, seed: u64) -> Result<MaskPlan> {
    check_gamma(gamma)?;
    if spans.windows(2).any(|w| w[0].end > w[1].start) {
        return Err(Error::invalid("spans must be sorted and non-overlapping"));
    }
    let n = spans.len();
    let k = mask_count(n, gamma);
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in 0..k {
        let j = rng.random_range(i..n);
        order.swap(i, j);
    }
    let mut chosen = order[..k].to_vec();
    chosen.sort_unstable();
    Ok(MaskPlan {
        all_spans: spans.to_vec(),
        masked_spans: chosen.into_iter().map(|i| spans[i].clone()).collect(),
        gamma,
        rng_seed: seed,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskedText {
    pub text: String,
    pub plan: MaskPlan,
    pub sentinel_count: usize,
}

impl MaskedText {
    /// True when nothing was masked, typically because the text had no spans.
    pub fn is_unperturbed(&self) -> bool {
        self.sentinel_count == 0
    }
}

/// Replace each masked span with `<mask_i>`, numbered left to right.
pub fn apply_masks(text: &str, plan: &MaskPlan) -> Result<MaskedText> {
    let mut out = String::with_capacity(text.len());
    let mut cursor = 0;
    for (i, span) in plan.masked_spans.iter().enumerate() {
        if span.start < cursor || text.get(span.start..span.end) != Some(span.surface.as_str()) {
            return Err(Error::invalid(format!(
                "mask plan does not match text at {}..{} ({:?})",
                span.start, span.end, span.surface
            )));
        }
        out.push_str(&text[cursor..span.start]);
        out.push_str(&sentinel(i));
        cursor = span.end;
    }
    out.push_str(&text[cursor..]);
    Ok(MaskedText {
        text: out,
        plan: plan.clone(),
        sentinel_count: plan.masked_spans.len(),
    })
}

/// Invert [`apply_masks`] using the plan's offsets, so sentinel-like literals in
/// the original text are not confused with real sentinels.
pub fn unmask(masked: &str, plan: &MaskPlan) -> Result<String> {
    let mut out = String::with_capacity(masked.len());
    let mut src_cursor = 0;
    let mut cursor = 0;
    for (i, span) in plan.masked_spans.iter().enumerate() {
        let gap = span
            .start
            .checked_sub(src_cursor)
            .ok_or_else(|| Error::invalid("mask plan spans out of order"))?;
        let token = sentinel(i);
        let kept = masked
            .get(cursor..cursor + gap)
            .ok_or_else(|| Error::invalid("masked text shorter than plan"))?;
        if masked.get(cursor + gap..cursor + gap + token.len()) != Some(token.as_str()) {
            return Err(Error::invalid(format!("expected {token} in masked text")));
        }
        out.push_str(kept);
        out.push_str(&span.surface);
        cursor += gap + token.len();
        src_cursor = span.end;
    }
    out.push_str(&masked[cursor..]);
    Ok(out)
}

/// Serialize the model input for `method`.
///
/// * `mfma`: `"Summary: " + S + " Article: " + A`
/// * `msm`: the masked article alone
/// * `mf`: the masked summary alone
///
/// Parts the method does not use are ignored.
pub fn build_input(
    method: Method,
    masked_summary: Option<&MaskedText>,
    masked_article: Option<&MaskedText>,
) -> Result<String> {
    fn need<'a>(part: Option<&'a MaskedText>, method: Method, what: &str) -> Result<&'a str> {
        part.map(|m| m.text.as_str())
            .ok_or_else(|| Error::invalid(format!("method '{method}' requires a masked {what}")))
    }
    Ok(match method {
        Method::Mfma => {
            let summary = need(masked_summary, method, "summary")?;
            let article = need(masked_article, method, "article")?;
            format!("{SUMMARY_PREFIX}{summary}{ARTICLE_PREFIX}{article}")
        }
        Method::Msm => need(masked_article, method, "article")?.to_string(),
        Method::Mf => need(masked_summary, method, "summary")?.to_string(),
    })
}

/// Spans of both sides of a pair, extracted once and reused across ratios and samples.
#[derive(Debug, Clone)]
pub struct PreparedPair {
    pub pair: DocumentPair,
    pub article_spans: Vec<Span>,
    pub summary_spans: Vec<Span>,
}

/// A model input together with the masked texts it was built from.
#[derive(Debug, Clone)]
pub struct ModelInput {
    pub text: String,
    pub masked_summary: Option<MaskedText>,
    pub masked_article: Option<MaskedText>,
}

/// Masking configuration bound to an annotator and the global seed.
///
/// Each mask placement is seeded by `pair_seed(global_seed, pair_id, role,
/// sample_index)`, so the placement for a given sample is independent of the
/// method and of which other pairs are processed.
#[derive(Clone)]
pub struct Masker {
    annotator: Arc<dyn Annotator>,
    unit: Unit,
    global_seed: u64,
}

impl fmt::Debug for Masker {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Masker")
            .field("annotator", &self.annotator.name())
            .field("unit", &self.unit)
            .field("global_seed", &self.global_seed)
            .finish()
    }
}

impl Masker {
    pub fn new(annotator: Arc<dyn Annotator>, unit: Unit, global_seed: u64) -> Result<Self> {
        if !annotator.supports(unit) {
            return Err(Error::Capability(format!(
                "annotator '{}' does not support unit '{unit}'",
                annotator.name()
            )));
        }
        Ok(Masker {
            annotator,
            unit,
            global_seed,
        })
    }

    pub fn unit(&self) -> Unit {
        self.unit
    }

    pub fn global_seed(&self) -> u64 {
        self.global_seed
    }

    pub fn prepare(&self, pair: &DocumentPair) -> Result<PreparedPair> {
        Ok(PreparedPair {
            pair: pair.clone(),
            article_spans: extract_spans(&pair.article, self.unit, self.annotator.as_ref())?,
            summary_spans: extract_spans(&pair.summary, self.unit, self.annotator.as_ref())?,
        })
    }

    pub fn plan(
        &self,
        spans: &[Span],
        pair_id: &str,
        role: Role,
        sample_index: u32,
        gamma: f64,
    ) -> Result<MaskPlan> {
        let seed = pair_seed(self.global_seed, pair_id, role.as_str(), sample_index);
        select_masks(spans, gamma, seed)
    }

    pub fn mask(
        &self,
        prepared: &PreparedPair,
        role: Role,
        sample_index: u32,
        gamma: f64,
    ) -> Result<MaskedText> {
        let (text, spans) = match role {
            Role::Article => (&prepared.pair.article, &prepared.article_spans),
            Role::Summary => (&prepared.pair.summary, &prepared.summary_spans),
        };
        let plan = self.plan(spans, &prepared.pair.id, role, sample_index, gamma)?;
        apply_masks(text, &plan)
    }

    /// Build the model input for one pair and sample. Gammas for parts the
    /// method does not use are ignored.
    pub fn model_input(
        &self,
        prepared: &PreparedPair,
        method: Method,
        gamma_a: f64,
        gamma_s: f64,
        sample_index: u32,
    ) -> Result<ModelInput> {
        let masked_article = method
            .uses_article()
            .then(|| self.mask(prepared, Role::Article, sample_index, gamma_a))
            .transpose()?;
        let masked_summary = method
            .uses_summary()
            .then(|| self.mask(prepared, Role::Summary, sample_index, gamma_s))
            .transpose()?;
        let text = build_input(method, masked_summary.as_ref(), masked_article.as_ref())?;
        Ok(ModelInput {
            text,
            masked_summary,
            masked_article,
        })
    }
}
