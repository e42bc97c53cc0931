use serde::{Deserialize, Serialize};

use crate::corpus::{BenchmarkRecord, BenchmarkSchema, Judgments};
use crate::error::{Error, Result};
use crate::label::Label;

/// How a benchmark's human judgments become one binary label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum BinarizationRule {
    /// Released with binary labels; records pass through unchanged.
    Passthrough,
    /// Inconsistent iff any annotator scored below `cutoff`.
    LikertBelowCutoff { cutoff: u8 },
    /// Inconsistent iff any annotator flagged the summary inconsistent.
    AnyInconsistent,
}

impl BinarizationRule {
    pub fn describe(&self) -> String {
        match self {
            BinarizationRule::Passthrough => "released binary labels".into(),
            BinarizationRule::LikertBelowCutoff { cutoff } => {
                format!("inconsistent if any judgment < {cutoff}")
            }
            BinarizationRule::AnyInconsistent => "inconsistent if any annotator flags it".into(),
        }
    }
}

pub fn rule_for(schema: BenchmarkSchema) -> BinarizationRule {
    match schema {
        BenchmarkSchema::FactccTest | BenchmarkSchema::XsumHall => BinarizationRule::Passthrough,
        BenchmarkSchema::SummEval => BinarizationRule::LikertBelowCutoff { cutoff: 5 },
        BenchmarkSchema::QagsCnndm
        | BenchmarkSchema::QagsXsum
        | BenchmarkSchema::FrankCnndm
        | BenchmarkSchema::FrankXsum => BinarizationRule::AnyInconsistent,
    }
}

pub fn binarize(record: &BenchmarkRecord, rule: BinarizationRule) -> Result<BenchmarkRecord> {
    let mismatch = || {
        Error::invalid(format!(
            "record '{}': rule '{}' does not apply to its judgments",
            record.id,
            rule.describe()
        ))
    };
    let label = match (rule, &record.judgments) {
        (BinarizationRule::Passthrough, _) => record.binary_label.ok_or_else(mismatch)?,
        (_, j) if j.is_empty() => return Err(mismatch()),
        (BinarizationRule::LikertBelowCutoff { cutoff }, Judgments::Likert(v)) => {
            if v.iter().any(|&s| s < cutoff) {
                Label::Inconsistent
            } else {
                Label::Consistent
            }
        }
        (BinarizationRule::AnyInconsistent, Judgments::Flags(v)) => {
            if v.contains(&Label::Inconsistent) {
                Label::Inconsistent
            } else {
                Label::Consistent
            }
        }
        _ => return Err(mismatch()),
    };
    Ok(BenchmarkRecord {
        binary_label: Some(label),
        ..record.clone()
    })
}

pub fn binarize_all(
    records: &[BenchmarkRecord],
    schema: BenchmarkSchema,
) -> Result<Vec<BenchmarkRecord>> {
    let rule = rule_for(schema);
    records.iter().map(|r| binarize(r, rule)).collect()
}
