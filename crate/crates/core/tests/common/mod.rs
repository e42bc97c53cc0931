#![allow(dead_code)]

use std::path::PathBuf;

use factmask::harness::config::BenchmarkSource;
use factmask::{BenchmarkSchema, Config};

pub fn data_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data")
}

/// Mock-backend config over the bundled toy files.
pub fn toy_config(n_samples: u32) -> Config {
    let mut c = Config {
        seed: 13,
        ..Config::default()
    };
    c.corpus.path = Some(data_dir().join("toy_corpus.jsonl"));
    c.masking.n_samples = n_samples;
    c.evaluation.validation = Some(BenchmarkSource {
        name: Some("toy-validation".into()),
        path: data_dir().join("toy_validation.jsonl"),
        schema: BenchmarkSchema::FactccTest,
    });
    c.evaluation.benchmarks = vec![BenchmarkSource {
        name: Some("toy-benchmark".into()),
        path: data_dir().join("toy_benchmark.jsonl"),
        schema: BenchmarkSchema::QagsCnndm,
    }];
    c
}

pub const GOLDEN_SEED: u64 = 20_22;
pub const GOLDEN_GAMMA_A: f64 = 0.6;
pub const GOLDEN_GAMMA_S: f64 = 0.8;

pub fn golden_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests")
        .join("golden")
}

/// Model inputs of every method for the golden pairs, one JSON object per line.
pub fn render_golden_inputs() -> String {
    use std::sync::Arc;

    use factmask::corpus::{load_pairs, CorpusFormat};
    use factmask::{Masker, Method, RuleAnnotator, Unit};

    let pairs = load_pairs(&golden_dir().join("pairs.jsonl"), CorpusFormat::JsonlPairs).unwrap();
    let masker = Masker::new(Arc::new(RuleAnnotator), Unit::NpEnt, GOLDEN_SEED).unwrap();
    let mut out = String::new();
    for pair in &pairs {
        let prepared = masker.prepare(pair).unwrap();
        for method in Method::ALL {
            let input = masker
                .model_input(&prepared, method, GOLDEN_GAMMA_A, GOLDEN_GAMMA_S, 0)
                .unwrap();
            let line = serde_json::json!({
                "pair_id": pair.id,
                "method": method,
                "input": input.text,
            });
            out.push_str(&line.to_string());
            out.push('\n');
        }
    }
    out
}

/// Compare against the checked-in golden file; rewrite it when
/// `FACTMASK_BLESS=1` is set.
pub fn check_goldens() -> Result<(), String> {
    let path = golden_dir().join("model_inputs.jsonl");
    let rendered = render_golden_inputs();
    if std::env::var("FACTMASK_BLESS").as_deref() == Ok("1") {
        std::fs::write(&path, &rendered).map_err(|e| e.to_string())?;
    }
    let expected =
        std::fs::read_to_string(&path).map_err(|e| format!("{}: {e}", path.display()))?;
    if expected == rendered {
        Ok(())
    } else {
        let line = expected
            .lines()
            .zip(rendered.lines())
            .position(|(a, b)| a != b)
            .map(|i| i + 1)
            .unwrap_or(expected.lines().count().min(rendered.lines().count()) + 1);
        Err(format!("golden mismatch at line {line}"))
    }
}

pub mod oracles;
pub mod suites;
