//! Deterministic inputs for the criterion benches.

use factmask::{DocumentPair, Label};

const NAMES: &[&str] = &[
    "Hiddink",
    "Chelsea",
    "Leeds",
    "Silverline",
    "Marta Ruiz",
    "Port Talbot",
];
const FILLER: &[&str] = &[
    "said", "the", "club", "would", "open", "a", "new", "plant", "after", "talks", "with",
];

/// Small LCG so fixtures do not depend on the RNG crate's stream.
fn lcg(state: &mut u64) -> usize {
    *state = state
        .wrapping_mul(6_364_136_223_846_793_005)
        .wrapping_add(1_442_695_040_888_963_407);
    (*state >> 33) as usize
}

/// News-like text with `sentences` sentences mixing names, numbers and filler.
pub fn synthetic_text(sentences: usize, seed: u64) -> String {
    let mut state = seed;
    let mut out = Vec::new();
    for _ in 0..sentences {
        let mut words = vec![NAMES[lcg(&mut state) % NAMES.len()].to_string()];
        for _ in 0..12 {
            match lcg(&mut state) % 6 {
                0 => words.push(NAMES[lcg(&mut state) % NAMES.len()].to_string()),
                1 => words.push(format!("{}", lcg(&mut state) % 500)),
                _ => words.push(FILLER[lcg(&mut state) % FILLER.len()].to_string()),
            }
        }
        out.push(format!("{}.", words.join(" ")));
    }
    out.join(" ")
}

pub fn synthetic_pair(id: usize, sentences: usize) -> DocumentPair {
    let article = synthetic_text(sentences, id as u64);
    let summary = synthetic_text(2, id as u64 + 7);
    DocumentPair {
        id: format!("bench-{id:04}"),
        article,
        summary,
    }
}

pub fn synthetic_labels(n: usize, seed: u64) -> Vec<Label> {
    let mut state = seed;
    (0..n)
        .map(|_| {
            if lcg(&mut state).is_multiple_of(2) {
                Label::Consistent
            } else {
                Label::Inconsistent
            }
        })
        .collect()
}

pub fn synthetic_scores(n: usize, seed: u64) -> Vec<f64> {
    let mut state = seed;
    (0..n)
        .map(|_| (lcg(&mut state) % 10_000) as f64 / 10_000.0)
        .collect()
}
