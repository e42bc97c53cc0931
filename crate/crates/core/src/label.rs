use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

/// Binary factual-consistency label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Consistent,
    Inconsistent,
}

impl Label {
    pub const ALL: [Label; 2] = [Label::Consistent, Label::Inconsistent];

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Consistent => "consistent",
            Label::Inconsistent => "inconsistent",
        }
    }

    pub fn flipped(self) -> Label {
        match self {
            Label::Consistent => Label::Inconsistent,
            Label::Inconsistent => Label::Consistent,
        }
    }

    /// Lenient parse used for benchmark files, which spell labels in many ways.
    pub(crate) fn from_json(value: &serde_json::Value) -> Option<Label> {
        match value {
            serde_json::Value::String(s) => s.parse().ok(),
            serde_json::Value::Bool(true) => Some(Label::Consistent),
            serde_json::Value::Bool(false) => Some(Label::Inconsistent),
            serde_json::Value::Number(n) => match n.as_i64() {
                Some(1) => Some(Label::Consistent),
                Some(0) => Some(Label::Inconsistent),
                _ => None,
            },
            _ => None,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Label {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "consistent" | "correct" | "c" | "yes" | "faithful" => Ok(Label::Consistent),
            "inconsistent" | "incorrect" | "i" | "no" | "unfaithful" => Ok(Label::Inconsistent),
            _ => Err(Error::Unknown {
                kind: "label",
                value: s.to_string(),
            }),
        }
    }
}
