//! Checks shared by the acceptance report and the regular integration tests.
//! Each suite returns a short detail line on success and the first failure
//! otherwise.

use std::collections::HashSet;
use std::fs;
use std::path::Path;
use std::sync::Arc;

use factmask::corpus::{load_pairs, split_half, CorpusFormat, DocumentPair};
use factmask::harness::pipeline::{load_validation, make_split, run_pipeline};
use factmask::harness::sweep::{run_sweep, SweepGrid};
use factmask::harness::{binarize, fit_analysis, rule_for, SweepRow, XField};
use factmask::infill::{
    generate_negatives, make_training_examples, DecodeConfig, GenerationSettings,
};
use factmask::masker::{apply_masks, select_masks, unmask};
use factmask::metrics::{
    balanced_accuracy, correlation_significance, diversity, fit_quadratic, macro_f1, pearson,
    spearman, SimilarityScorer, TokenF1Scorer,
};
use factmask::{
    BenchmarkRecord, BenchmarkSchema, Judgments, Label, Masker, Method, MockBackend, Origin,
    RuleAnnotator, Span, Unit,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::oracles;

pub type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol || (a.is_nan() && b.is_nan())
}

const WORDS: &[&str] = &[
    "storm", "Leeds", "café", "Zürich", "north", "42", "the", "<mask_0>", "coach", "naïve", "Hull",
    "season", "東京", "rate", "mph", "½", "end",
];

/// One randomized masking case: text, sorted disjoint spans, ratio in whole
/// percent and a seed.
pub struct MaskCase {
    pub text: String,
    pub spans: Vec<Span>,
    pub percent: u32,
    pub seed: u64,
}

pub fn mask_case(index: u64) -> MaskCase {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0000 + index);
    let n_words = rng.random_range(0..40);
    let words: Vec<&str> = (0..n_words)
        .map(|_| WORDS[rng.random_range(0..WORDS.len())])
        .collect();
    let text = words.join(" ");
    let tokens = factmask::text::whitespace_tokens(&text);
    let mut spans = Vec::new();
    let mut i = 0;
    while i < tokens.len() {
        if rng.random_bool(0.5) {
            let len = rng.random_range(1..=3).min(tokens.len() - i);
            let (s, e) = (tokens[i].0, tokens[i + len - 1].1);
            spans.push(Span::new(&text, s, e, Unit::NpEnt).unwrap());
            i += len + 1;
        } else {
            i += 1;
        }
    }
    MaskCase {
        text,
        spans,
        percent: rng.random_range(0..=100),
        seed: rng.random(),
    }
}

fn masked_output(case: &MaskCase) -> Result<String, String> {
    let gamma = case.percent as f64 / 100.0;
    let plan = select_masks(&case.spans, gamma, case.seed).map_err(|e| e.to_string())?;
    let masked = apply_masks(&case.text, &plan).map_err(|e| e.to_string())?;
    Ok(masked.text)
}

/// Mask-count rule, sampler, nesting in gamma and unmask identity over
/// `cases` random inputs, then byte-identical replay sequentially and on a
/// 4-thread pool.
pub fn masking_suite(cases: u64) -> Outcome {
    for index in 0..cases {
        let case = mask_case(index);
        let n = case.spans.len();
        let gamma = case.percent as f64 / 100.0;
        let plan = select_masks(&case.spans, gamma, case.seed).map_err(|e| e.to_string())?;
        let k = oracles::mask_count_percent(n, case.percent);
        ensure!(
            plan.masked_spans.len() == k,
            "case {index}: {} masked, expected {k}",
            plan.masked_spans.len()
        );
        let expected: Vec<Span> = oracles::sample_indices(n, k, case.seed)
            .into_iter()
            .map(|i| case.spans[i].clone())
            .collect();
        ensure!(
            plan.masked_spans == expected,
            "case {index}: sampler disagrees with oracle"
        );

        let mut rng = ChaCha8Rng::seed_from_u64(case.seed);
        let higher = rng.random_range(case.percent..=100);
        let bigger = select_masks(&case.spans, higher as f64 / 100.0, case.seed)
            .map_err(|e| e.to_string())?;
        ensure!(
            bigger.masked_spans.len() >= plan.masked_spans.len(),
            "case {index}: count not monotone"
        );
        ensure!(
            plan.masked_spans
                .iter()
                .all(|s| bigger.masked_spans.contains(s)),
            "case {index}: masks at {}% not nested in {higher}%",
            case.percent
        );
        let masked = apply_masks(&case.text, &plan).map_err(|e| e.to_string())?;
        let restored = unmask(&masked.text, &plan).map_err(|e| e.to_string())?;
        ensure!(
            restored == case.text,
            "case {index}: unmask(apply_masks) != identity"
        );
        if case.percent == 100 {
            ensure!(k == n, "case {index}: gamma 1 must mask all spans");
        }
    }

    let run = |i: u64| masked_output(&mask_case(i));
    let first: Vec<String> = (0..cases).map(run).collect::<Result<_, _>>()?;
    let second: Vec<String> = (0..cases).map(run).collect::<Result<_, _>>()?;
    ensure!(first == second, "sequential replay differs");
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(4)
        .build()
        .map_err(|e| e.to_string())?;
    let parallel: Vec<String> = pool.install(|| {
        (0..cases)
            .into_par_iter()
            .map(run)
            .collect::<Result<_, _>>()
    })?;
    ensure!(first == parallel, "4-way parallel run differs");
    Ok(format!("{cases} cases"))
}

/// Metric implementations against brute-force oracles on `cases` random
/// inputs, plus the analytic anchors.
pub fn metrics_suite(cases: u64) -> Outcome {
    const COUNT_TOL: f64 = 1e-12;
    const TOL: f64 = 1e-9;
    const COEF_TOL: f64 = 1e-8;
    let scorer = TokenF1Scorer;
    let mut rng = ChaCha8Rng::seed_from_u64(0x000e_71c5);
    for case in 0..cases {
        let n = rng.random_range(1..=12);
        let truth = oracles::random_labels(&mut rng, n);
        let pred = oracles::random_labels(&mut rng, n);
        let f1 = macro_f1(&truth, &pred).map_err(|e| e.to_string())?;
        ensure!(
            close(f1, oracles::macro_f1(&truth, &pred), COUNT_TOL),
            "case {case}: macro-F1"
        );
        let both = truth.contains(&Label::Consistent) && truth.contains(&Label::Inconsistent);
        match balanced_accuracy(&truth, &pred) {
            Ok(ba) => ensure!(
                both && close(ba, oracles::balanced_accuracy(&truth, &pred), COUNT_TOL),
                "case {case}: balanced accuracy"
            ),
            Err(_) => ensure!(!both, "case {case}: BA failed with both classes present"),
        }

        let m = rng.random_range(3..=20);
        let x = oracles::random_vec(&mut rng, m, false);
        let y = oracles::random_vec(&mut rng, m, false);
        let r = pearson(&x, &y).map_err(|e| e.to_string())?;
        ensure!(
            close(r, oracles::pearson(&x, &y), TOL),
            "case {case}: pearson"
        );

        let xt = oracles::random_vec(&mut rng, m, true);
        let yt = oracles::random_vec(&mut rng, m, true);
        let constant = |v: &[f64]| v.iter().all(|a| *a == v[0]);
        match spearman(&xt, &yt) {
            Ok(rho) => ensure!(
                close(rho, oracles::spearman(&xt, &yt), TOL),
                "case {case}: spearman"
            ),
            Err(_) => ensure!(
                constant(&xt) || constant(&yt),
                "case {case}: spearman failed"
            ),
        }

        let rr = rng.random_range(-0.999..0.999);
        let nn = rng.random_range(3..=60);
        let p = correlation_significance(rr, nn).map_err(|e| e.to_string())?;
        let po = oracles::correlation_p(rr, nn);
        ensure!(
            close(p, po, TOL),
            "case {case}: p({rr}, {nn}) = {p}, oracle {po}"
        );

        let q = rng.random_range(3..=12);
        let mut qx: Vec<f64> = Vec::new();
        while qx.len() < q {
            let v = (rng.random_range(0..1000) as f64) / 1000.0;
            if !qx.contains(&v) {
                qx.push(v);
            }
        }
        let qy: Vec<f64> = (0..q).map(|_| rng.random_range(0.0..1.0)).collect();
        let fit = fit_quadratic(&qx, &qy).map_err(|e| e.to_string())?;
        let (a, b, c, r2) = oracles::quadratic(&qx, &qy);
        ensure!(
            close(fit.a, a, COEF_TOL) && close(fit.b, b, COEF_TOL) && close(fit.c, c, COEF_TOL),
            "case {case}: quadratic coefficients {:?} vs ({a}, {b}, {c})",
            (fit.a, fit.b, fit.c)
        );
        ensure!(
            close(fit.r_squared, r2, TOL),
            "case {case}: R2 {} vs {r2}",
            fit.r_squared
        );

        let texts: Vec<String> = (0..4)
            .map(|_| {
                (0..rng.random_range(1..8))
                    .map(|_| WORDS[rng.random_range(0..WORDS.len())])
                    .collect::<Vec<_>>()
                    .join(" ")
            })
            .collect();
        let refs: Vec<&str> = texts.iter().map(String::as_str).collect();
        ensure!(
            close(
                scorer.similarity(refs[0], refs[1]),
                oracles::token_f1(refs[0], refs[1]),
                TOL
            ),
            "case {case}: token F1"
        );
        let d = diversity(&refs, &scorer).map_err(|e| e.to_string())?;
        ensure!(
            close(d, oracles::diversity(&refs, oracles::token_f1), TOL),
            "case {case}: diversity"
        );
    }

    ensure!(
        correlation_significance(0.0, 17).ok() == Some(1.0),
        "anchor: r = 0 must give p = 1"
    );
    let px = [0.1, 0.3, 0.5, 0.7, 0.9];
    let py: Vec<f64> = px.iter().map(|x| 2.0 * x * x - x + 0.25).collect();
    let fit = fit_quadratic(&px, &py).map_err(|e| e.to_string())?;
    ensure!(
        close(fit.r_squared, 1.0, TOL),
        "anchor: parabola R2 = {}",
        fit.r_squared
    );
    let same = ["a storm", "a storm", "a storm", "a storm"];
    ensure!(
        diversity(&same, &scorer).ok() == Some(-1.0),
        "anchor: identical samples"
    );
    Ok(format!("{cases} cases + anchors"))
}

fn likert_record(scores: Vec<u8>) -> BenchmarkRecord {
    BenchmarkRecord {
        id: "r".into(),
        article: "a".into(),
        summary: "s".into(),
        judgments: Judgments::Likert(scores),
        binary_label: None,
        numeric_score: None,
    }
}

/// Exhaustive checks of the Likert and any-flag rules.
pub fn binarization_suite() -> Outcome {
    let mut checked = 0;
    let summeval = rule_for(BenchmarkSchema::SummEval);
    for a in 1..=5u8 {
        for b in 1..=5u8 {
            for c in 1..=5u8 {
                let out =
                    binarize(&likert_record(vec![a, b, c]), summeval).map_err(|e| e.to_string())?;
                let expected = if a.min(b).min(c) < 5 {
                    Label::Inconsistent
                } else {
                    Label::Consistent
                };
                ensure!(
                    out.binary_label == Some(expected),
                    "summeval {:?}",
                    [a, b, c]
                );
                checked += 1;
            }
        }
    }
    let flags = [Label::Consistent, Label::Inconsistent];
    for schema in [
        BenchmarkSchema::QagsCnndm,
        BenchmarkSchema::QagsXsum,
        BenchmarkSchema::FrankCnndm,
        BenchmarkSchema::FrankXsum,
    ] {
        for &a in &flags {
            for &b in &flags {
                for &c in &flags {
                    let mut rec = likert_record(vec![]);
                    rec.judgments = Judgments::Flags(vec![a, b, c]);
                    let out = binarize(&rec, rule_for(schema)).map_err(|e| e.to_string())?;
                    let any_bad = [a, b, c].contains(&Label::Inconsistent);
                    let expected = if any_bad {
                        Label::Inconsistent
                    } else {
                        Label::Consistent
                    };
                    ensure!(
                        out.binary_label == Some(expected),
                        "{schema} {:?}",
                        [a, b, c]
                    );
                    checked += 1;
                }
            }
        }
    }
    ensure!(
        binarize(
            &likert_record(vec![5, 5]),
            rule_for(BenchmarkSchema::QagsCnndm)
        )
        .is_err(),
        "rule/schema mismatch must fail"
    );
    Ok(format!("{checked} judgment vectors"))
}

fn read_dir_bytes(root: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(root).unwrap().display().to_string();
                out.push((rel, fs::read(&path).unwrap()));
            }
        }
    }
    out.sort();
    out
}

/// Full mock pipeline on the toy corpus, run twice.
pub fn end_to_end_suite() -> Outcome {
    let config = super::toy_config(4);
    let dir_a = tempfile::tempdir().map_err(|e| e.to_string())?;
    let dir_b = tempfile::tempdir().map_err(|e| e.to_string())?;
    let summary = run_pipeline(&config, dir_a.path()).map_err(|e| e.to_string())?;
    run_pipeline(&config, dir_b.path()).map_err(|e| e.to_string())?;

    ensure!(
        summary.train_half == 25 && summary.gen_half == 25,
        "split is not 25/25"
    );
    ensure!(
        summary.negatives == 100,
        "{} negatives, expected 100",
        summary.negatives
    );
    let positives = summary.dataset.per_label[&Label::Consistent];
    let negatives = summary.dataset.per_label[&Label::Inconsistent];
    ensure!(positives == 25, "{positives} positives");
    ensure!(negatives <= 100, "{negatives} negatives");

    let dataset = factmask::dataset::load_dataset(&dir_a.path().join("dataset.jsonl"))
        .map_err(|e| e.to_string())?;
    let split: factmask::CorpusSplit = serde_json::from_slice(
        &fs::read(dir_a.path().join("split.json")).map_err(|e| e.to_string())?,
    )
    .map_err(|e| e.to_string())?;
    let gen_articles: HashSet<&str> = split.gen_half.iter().map(|p| p.article.as_str()).collect();
    let train_articles: HashSet<&str> = split
        .train_half
        .iter()
        .map(|p| p.article.as_str())
        .collect();
    for ex in &dataset {
        ensure!(
            (ex.label == Label::Consistent) == (ex.origin == Origin::Reference),
            "label/origin mismatch for {}",
            ex.pair_id
        );
        match ex.label {
            Label::Consistent => ensure!(
                !gen_articles.contains(ex.article.as_str()),
                "gen-half article labeled consistent"
            ),
            Label::Inconsistent => ensure!(
                !train_articles.contains(ex.article.as_str()),
                "train-half article labeled inconsistent"
            ),
        }
    }
    confusion_matches_report(dir_a.path(), &summary)?;
    ensure!(
        read_dir_bytes(dir_a.path()) == read_dir_bytes(dir_b.path()),
        "rerun outputs differ"
    );
    Ok(format!("25/25 split, {negatives} negatives kept"))
}

/// Recount the confusion matrix from the written predictions.
fn confusion_matches_report(
    dir: &Path,
    summary: &factmask::harness::PipelineSummary,
) -> Result<(), String> {
    use factmask::harness::ReportScores;
    let config = super::toy_config(4);
    let source = &config.evaluation.benchmarks[0];
    let records = factmask::harness::pipeline::load_binarized(source).map_err(|e| e.to_string())?;
    let text = fs::read_to_string(dir.join("predictions").join("toy-benchmark.jsonl"))
        .map_err(|e| e.to_string())?;
    let predictions: Vec<serde_json::Value> = text
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    ensure!(predictions.len() == records.len(), "prediction count");
    let mut truth = Vec::new();
    let mut pred = Vec::new();
    for (rec, p) in records.iter().zip(&predictions) {
        ensure!(p["id"] == rec.id.as_str(), "prediction order");
        let confidence = p["confidence"].as_f64().unwrap();
        truth.push(rec.binary_label.unwrap());
        pred.push(if confidence >= 0.5 {
            Label::Consistent
        } else {
            Label::Inconsistent
        });
    }
    let report = summary
        .reports
        .iter()
        .find(|r| matches!(r.scores, ReportScores::Classification { .. }))
        .ok_or("no classification report")?;
    let ReportScores::Classification {
        macro_f1,
        balanced_accuracy,
    } = report.scores
    else {
        unreachable!()
    };
    ensure!(
        close(macro_f1, oracles::macro_f1(&truth, &pred), 1e-12),
        "report macro-F1 disagrees with recount"
    );
    ensure!(
        close(
            balanced_accuracy,
            oracles::balanced_accuracy(&truth, &pred),
            1e-12
        ),
        "report BA disagrees with recount"
    );
    Ok(())
}

/// Default-grid sweep on the toy corpus, replayed, plus the synthetic fit.
pub fn sweep_suite() -> Outcome {
    let config = super::toy_config(1);
    let pairs = factmask::harness::pipeline::load_corpus(&config).map_err(|e| e.to_string())?;
    let split = make_split(&config, &pairs).map_err(|e| e.to_string())?;
    let validation = load_validation(&config)
        .map_err(|e| e.to_string())?
        .ok_or("no validation set")?;
    let grid = SweepGrid::from_config(&config);
    let work_a = tempfile::tempdir().map_err(|e| e.to_string())?;
    let work_b = tempfile::tempdir().map_err(|e| e.to_string())?;
    let first =
        run_sweep(&config, &grid, &split, &validation, work_a.path()).map_err(|e| e.to_string())?;
    let second =
        run_sweep(&config, &grid, &split, &validation, work_b.path()).map_err(|e| e.to_string())?;
    ensure!(first.rows.len() == 25, "{} rows", first.rows.len());
    let failed = first.rows.iter().filter(|r| r.failed()).count();
    ensure!(
        failed == 0,
        "{failed} rows failed: {:?}",
        first.rows.iter().find_map(|r| r.error.clone())
    );
    let bytes_a = serde_json::to_vec_pretty(&first).map_err(|e| e.to_string())?;
    let bytes_b = serde_json::to_vec_pretty(&second).map_err(|e| e.to_string())?;
    ensure!(bytes_a == bytes_b, "sweep replay differs");

    let synthetic: Vec<SweepRow> = (0..9)
        .map(|i| {
            let x = 0.5 + 0.05 * i as f64;
            SweepRow {
                gamma_a: 0.2,
                gamma_s: 0.2,
                ba: Some(0.85 - 3.0 * (x - 0.8) * (x - 0.8)),
                distance: Some(x),
                diversity: Some(-x),
                negatives: 1,
                error: None,
            }
        })
        .collect();
    for field in [XField::Distance, XField::Diversity] {
        let fit = fit_analysis(&synthetic, field).map_err(|e| e.to_string())?;
        ensure!(
            close(fit.r_squared, 1.0, 1e-9),
            "synthetic {field:?} R2 = {}",
            fit.r_squared
        );
    }
    Ok("25 rows, replay identical".into())
}

fn toy_pairs() -> Vec<DocumentPair> {
    load_pairs(
        &super::data_dir().join("toy_corpus.jsonl"),
        CorpusFormat::JsonlPairs,
    )
    .unwrap()
}

/// Pair ids used to train the infiller never receive generated negatives.
pub fn hygiene_suite(splits: u64) -> Outcome {
    let pairs = toy_pairs();
    let masker = Masker::new(Arc::new(RuleAnnotator), Unit::NpEnt, 5).map_err(|e| e.to_string())?;
    let settings = GenerationSettings {
        method: Method::Mfma,
        gamma_a: 0.6,
        gamma_s: 0.8,
        n_samples: 1,
        decode: DecodeConfig::default(),
    };
    for s in 0..splits {
        let split = split_half(&pairs, 1_000 + s).map_err(|e| e.to_string())?;
        let examples = make_training_examples(&split, Method::Mfma, 0.6, 0.8, &masker)
            .map_err(|e| e.to_string())?;
        let negatives = generate_negatives(&MockBackend, None, &split, &settings, &masker)
            .map_err(|e| e.to_string())?;
        let train_ids: HashSet<&str> = examples.iter().map(|e| e.pair_id.as_str()).collect();
        let overlap = negatives
            .iter()
            .filter(|n| train_ids.contains(n.pair_id.as_str()))
            .count();
        ensure!(overlap == 0, "split {s}: {overlap} overlapping pair ids");
        ensure!(
            train_ids.len() == split.train_half.len(),
            "split {s}: missing training examples"
        );
    }
    Ok(format!("{splits} splits, 0 overlaps"))
}
