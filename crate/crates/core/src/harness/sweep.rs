//! Masking-ratio sweeps and the quadratic analyses over their rows.

use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::Config;
use super::pipeline::{group_by_pair, maybe_train_infiller, train_and_select, write_json};
use crate::corpus::{BenchmarkRecord, CorpusSplit};
use crate::dataset::assemble;
use crate::error::{Error, Result};
use crate::infill::{generate_negatives, GenerationSettings};
use crate::masker::{Masker, Method};
use crate::metrics::{
    distance_from_reference, diversity, fit_quadratic, QuadraticFit, SimilarityScorer,
};
use crate::seed::stream_seed;
use crate::spanner::{Annotator, Unit};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepGrid {
    pub gamma_a: Vec<f64>,
    pub gamma_s: Vec<f64>,
    pub unit: Unit,
    pub method: Method,
}

impl SweepGrid {
    pub fn from_config(config: &Config) -> Self {
        SweepGrid {
            gamma_a: config.sweep.gamma_a.clone(),
            gamma_s: config.sweep.gamma_s.clone(),
            unit: config.sweep.unit.unwrap_or(config.masking.unit),
            method: config.sweep.method,
        }
    }

    /// Grid points, `gamma_a`-major.
    pub fn points(&self) -> Vec<(f64, f64)> {
        self.gamma_a
            .iter()
            .flat_map(|&a| self.gamma_s.iter().map(move |&s| (a, s)))
            .collect()
    }
}

/// One grid point. Scores are absent when the row failed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub gamma_a: f64,
    pub gamma_s: f64,
    /// Validation score of the selected checkpoint.
    pub ba: Option<f64>,
    /// Mean similarity of training negatives to their references.
    pub distance: Option<f64>,
    /// Mean per-pair diversity of the generated samples.
    pub diversity: Option<f64>,
    pub negatives: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub error: Option<String>,
}

impl SweepRow {
    pub fn failed(&self) -> bool {
        self.error.is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub config_fingerprint: String,
    pub grid: SweepGrid,
    pub rows: Vec<SweepRow>,
}

fn row_tag(gamma_a: f64, gamma_s: f64) -> String {
    format!("{gamma_a:.4}-{gamma_s:.4}")
}

struct RowContext<'a> {
    config: &'a Config,
    grid: &'a SweepGrid,
    split: &'a CorpusSplit,
    validation: &'a [BenchmarkRecord],
    annotator: Arc<dyn Annotator>,
    scorer: &'a dyn SimilarityScorer,
    work_dir: &'a Path,
}

struct RowScores {
    ba: f64,
    distance: f64,
    diversity: f64,
    negatives: usize,
}

fn run_row(ctx: &RowContext<'_>, gamma_a: f64, gamma_s: f64) -> Result<RowScores> {
    let config = ctx.config;
    let tag = row_tag(gamma_a, gamma_s);
    let row_seed = stream_seed(config.seed, &format!("sweep/{tag}"));
    let row_dir = ctx.work_dir.join(&tag);
    let masker = Masker::new(ctx.annotator.clone(), ctx.grid.unit, row_seed)?;
    let infiller = config.infiller.build()?;
    let train_samples = config.masking.n_samples;
    let settings = GenerationSettings {
        method: ctx.grid.method,
        gamma_a,
        gamma_s,
        n_samples: train_samples.max(config.sweep.diversity_samples),
        decode: config.infiller.decode.clone(),
    };
    let handle = maybe_train_infiller(
        config,
        infiller.as_ref(),
        ctx.split,
        &settings,
        &masker,
        &row_dir.join("infiller"),
    )?;
    let negatives = generate_negatives(
        infiller.as_ref(),
        handle.as_ref(),
        ctx.split,
        &settings,
        &masker,
    )?;

    let references: std::collections::HashMap<&str, &str> = ctx
        .split
        .gen_half
        .iter()
        .map(|p| (p.id.as_str(), p.summary.as_str()))
        .collect();
    let training: Vec<_> = negatives
        .iter()
        .filter(|n| n.sample_index < train_samples)
        .cloned()
        .collect();
    if training.is_empty() {
        return Err(Error::invalid("row produced no negatives"));
    }
    let mut dist_sum = 0.0;
    for n in &training {
        dist_sum += distance_from_reference(ctx.scorer, references[n.pair_id.as_str()], &n.text)?;
    }
    let distance = dist_sum / training.len() as f64;

    let per_pair: Vec<f64> = group_by_pair(&negatives)
        .values()
        .filter(|g| g.len() >= 2)
        .map(|g| {
            let texts: Vec<&str> = g.iter().map(|n| n.text.as_str()).collect();
            diversity(&texts, ctx.scorer)
        })
        .collect::<Result<_>>()?;
    if per_pair.is_empty() {
        return Err(Error::invalid("no pair kept two samples for diversity"));
    }
    let diversity = per_pair.iter().sum::<f64>() / per_pair.len() as f64;

    let dataset = assemble(
        ctx.split,
        &training,
        &config.dataset,
        stream_seed(row_seed, "dataset"),
    )?;
    let classifier = config.classifier.build()?;
    let manifest = train_and_select(
        config,
        classifier.as_ref(),
        &dataset,
        Some(ctx.validation),
        &row_dir.join("classifier"),
    )?;
    Ok(RowScores {
        ba: manifest.validation_scores[manifest.selected],
        distance,
        diversity,
        negatives: training.len(),
    })
}

/// Run the full pipeline at every grid point. Rows share the corpus split;
/// masking, generation and dataset seeds are derived from the row's ratios.
/// A failing row is reported with its error and does not stop the sweep.
pub fn run_sweep(
    config: &Config,
    grid: &SweepGrid,
    split: &CorpusSplit,
    validation: &[BenchmarkRecord],
    work_dir: &Path,
) -> Result<SweepReport> {
    config.validate()?;
    if grid.gamma_a.is_empty() || grid.gamma_s.is_empty() {
        return Err(Error::Config("sweep grid must not be empty".into()));
    }
    if validation.is_empty() {
        return Err(Error::Config("sweep needs a validation set".into()));
    }
    let scorer = config.evaluation.build_scorer()?;
    let ctx = RowContext {
        config,
        grid,
        split,
        validation,
        annotator: config.masking.build_annotator()?,
        scorer: scorer.as_ref(),
        work_dir,
    };
    let run = |&(a, s): &(f64, f64)| match run_row(&ctx, a, s) {
        Ok(r) => SweepRow {
            gamma_a: a,
            gamma_s: s,
            ba: Some(r.ba),
            distance: Some(r.distance),
            diversity: Some(r.diversity),
            negatives: r.negatives,
            error: None,
        },
        Err(e) => {
            log::warn!("sweep row ({a}, {s}) failed: {e}");
            SweepRow {
                gamma_a: a,
                gamma_s: s,
                ba: None,
                distance: None,
                diversity: None,
                negatives: 0,
                error: Some(e.to_string()),
            }
        }
    };
    let points = grid.points();
    let rows: Vec<SweepRow> = if config.sweep.parallel {
        points.par_iter().map(run).collect()
    } else {
        points.iter().map(run).collect()
    };
    Ok(SweepReport {
        config_fingerprint: config.fingerprint(),
        grid: grid.clone(),
        rows,
    })
}

pub fn save_sweep(path: &Path, report: &SweepReport) -> Result<()> {
    write_json(path, report)
}

pub fn load_sweep(path: &Path) -> Result<SweepReport> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum XField {
    Distance,
    Diversity,
}

impl std::str::FromStr for XField {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "distance" => Ok(XField::Distance),
            "diversity" => Ok(XField::Diversity),
            _ => Err(Error::Unknown {
                kind: "analysis field",
                value: s.into(),
            }),
        }
    }
}

/// `(x, ba)` points of the successful rows.
pub fn analysis_points(rows: &[SweepRow], field: XField) -> Vec<(f64, f64)> {
    rows.iter()
        .filter_map(|r| {
            let x = match field {
                XField::Distance => r.distance,
                XField::Diversity => r.diversity,
            }?;
            Some((x, r.ba?))
        })
        .collect()
}

/// Quadratic fit of validation score against distance or diversity.
pub fn fit_analysis(rows: &[SweepRow], field: XField) -> Result<QuadraticFit> {
    let points = analysis_points(rows, field);
    if points.len() < 3 {
        return Err(Error::invalid(format!(
            "analysis needs at least 3 complete rows, got {}",
            points.len()
        )));
    }
    let (x, y): (Vec<f64>, Vec<f64>) = points.into_iter().unzip();
    fit_quadratic(&x, &y)
}
