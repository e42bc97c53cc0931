use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use factmask::classifier::CheckpointManifest;
use factmask::corpus::CorpusSplit;
use factmask::dataset::{assemble, dataset_stats, load_dataset, save_dataset};
use factmask::harness::pipeline::{
    build_masker, evaluate_benchmarks, load_corpus, load_validation, make_split,
    maybe_train_infiller, run_pipeline, train_and_select, write_json, RunLayout,
};
use factmask::harness::sweep::{load_sweep, save_sweep, SweepGrid};
use factmask::harness::{
    emit_report_plots, emit_sweep_plots, fit_analysis, run_sweep, EvaluationReport, XField,
};
use factmask::infill::{
    generate_negatives, load_negatives, save_negatives, GenerationSettings, ModelHandle,
};
use factmask::seed::stream_seed;
use factmask::{Config, Method};
use serde::de::DeserializeOwned;
use serde_json::json;

use super::{Command, GlobalArgs};

const HANDLE_FILE: &str = "handle.json";
const EVALUATION_FILE: &str = "evaluation.json";
const SWEEP_FILE: &str = "sweep.json";
const ANALYSIS_FILE: &str = "analysis.json";
const PREVIEW_FILE: &str = "mask_preview.jsonl";

struct Ctx {
    config: Config,
    layout: RunLayout,
}

impl Ctx {
    fn out(&self) -> &Path {
        &self.layout.root
    }

    /// Record what a verb read and wrote under `manifests/<verb>.json`.
    fn manifest(
        &self,
        verb: &str,
        inputs: &[PathBuf],
        outputs: &[PathBuf],
        details: serde_json::Value,
    ) -> Result<()> {
        let show = |p: &[PathBuf]| {
            p.iter()
                .map(|p| p.display().to_string())
                .collect::<Vec<_>>()
        };
        let value = json!({
            "verb": verb,
            "version": env!("CARGO_PKG_VERSION"),
            "seed": self.config.seed,
            "config_fingerprint": self.config.fingerprint(),
            "config": self.config,
            "inputs": show(inputs),
            "outputs": show(outputs),
            "details": details,
        });
        write_json(
            &self.out().join("manifests").join(format!("{verb}.json")),
            &value,
        )?;
        Ok(())
    }

    fn split(&self) -> Result<CorpusSplit> {
        read_json(&self.layout.split()).context("run `split` first")
    }
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text)
        .map_err(factmask::Error::from)
        .with_context(|| format!("parsing {}", path.display()))
}

fn load_config(global: &GlobalArgs) -> Result<Config> {
    let mut overrides = global.overrides.clone();
    if let Some(seed) = global.seed {
        overrides.push(format!("seed={seed}"));
    }
    Ok(Config::load(global.config.as_deref(), &overrides)?)
}

pub fn dispatch(global: &GlobalArgs, command: &Command) -> Result<()> {
    let config = load_config(global)?;
    fs::create_dir_all(&global.out)
        .with_context(|| format!("creating {}", global.out.display()))?;
    let ctx = Ctx {
        config,
        layout: RunLayout::new(&global.out),
    };
    match command {
        Command::Split => split(&ctx),
        Command::MaskPreview {
            pair,
            limit,
            method,
        } => mask_preview(&ctx, pair.as_deref(), *limit, method.as_deref()),
        Command::TrainInfiller => train_infiller(&ctx),
        Command::Generate => generate(&ctx),
        Command::BuildDataset { purge_generated } => build_dataset(&ctx, *purge_generated),
        Command::TrainClassifier => train_classifier(&ctx),
        Command::Evaluate => evaluate(&ctx),
        Command::Sweep => sweep(&ctx),
        Command::Analyze { field } => analyze(&ctx, field.as_deref()),
        Command::Plot => plot(&ctx),
        Command::Run { purge_generated } => run(&ctx, *purge_generated),
    }
}

fn corpus_path(config: &Config) -> Vec<PathBuf> {
    config.corpus.path.iter().cloned().collect()
}

fn split(ctx: &Ctx) -> Result<()> {
    let pairs = load_corpus(&ctx.config)?;
    let split = make_split(&ctx.config, &pairs)?;
    write_json(&ctx.layout.split(), &split)?;
    println!(
        "split {} pairs: {} infiller-training, {} generation",
        pairs.len(),
        split.train_half.len(),
        split.gen_half.len()
    );
    ctx.manifest(
        "split",
        &corpus_path(&ctx.config),
        &[ctx.layout.split()],
        json!({
            "split_seed": stream_seed(ctx.config.seed, "split"),
            "train_half": split.train_half.len(),
            "gen_half": split.gen_half.len(),
        }),
    )
}

fn mask_preview(ctx: &Ctx, pair: Option<&str>, limit: usize, method: Option<&str>) -> Result<()> {
    let config = &ctx.config;
    let methods: Vec<Method> = match method {
        Some(m) => vec![m.parse()?],
        None => Method::ALL.to_vec(),
    };
    let pairs = load_corpus(config)?;
    let selected: Vec<_> = match pair {
        Some(id) => {
            let found: Vec<_> = pairs.iter().filter(|p| p.id == id).collect();
            if found.is_empty() {
                return Err(
                    factmask::Error::InvalidInput(format!("no pair with id '{id}'")).into(),
                );
            }
            found
        }
        None => pairs.iter().take(limit).collect(),
    };
    let masker = build_masker(config, config.masking.unit, config.seed)?;
    let mut lines = String::new();
    for p in selected {
        let prepared = masker.prepare(p)?;
        for &m in &methods {
            let input = masker.model_input(
                &prepared,
                m,
                config.masking.gamma_a,
                config.masking.gamma_s,
                0,
            )?;
            let line = json!({
                "pair_id": p.id,
                "method": m,
                "article_spans": prepared.article_spans.len(),
                "summary_spans": prepared.summary_spans.len(),
                "input": input.text,
            });
            println!("{line}");
            lines.push_str(&line.to_string());
            lines.push('\n');
        }
    }
    let path = ctx.out().join(PREVIEW_FILE);
    fs::write(&path, lines).with_context(|| format!("writing {}", path.display()))?;
    ctx.manifest(
        "mask-preview",
        &corpus_path(config),
        &[path],
        json!({ "methods": methods }),
    )
}

fn train_infiller(ctx: &Ctx) -> Result<()> {
    let config = &ctx.config;
    let split = ctx.split()?;
    let backend = config.infiller.build()?;
    let masker = build_masker(config, config.masking.unit, config.seed)?;
    let dir = ctx.layout.infiller();
    let handle = maybe_train_infiller(
        config,
        backend.as_ref(),
        &split,
        &settings(config),
        &masker,
        &dir,
    )?;
    let handle_path = dir.join(HANDLE_FILE);
    write_json(&handle_path, &handle)?;
    match &handle {
        Some(h) => println!("infiller trained: {}", h.path.display()),
        None => println!(
            "backend '{}' generates without training",
            backend.info().name
        ),
    }
    ctx.manifest(
        "train-infiller",
        &[ctx.layout.split()],
        &[handle_path],
        json!({ "backend": backend.info(), "trained": handle.is_some() }),
    )
}

fn load_handle(ctx: &Ctx) -> Result<Option<ModelHandle>> {
    let path = ctx.layout.infiller().join(HANDLE_FILE);
    if path.exists() {
        read_json(&path)
    } else {
        Ok(None)
    }
}

fn settings(config: &Config) -> GenerationSettings {
    GenerationSettings {
        method: config.masking.method,
        gamma_a: config.masking.gamma_a,
        gamma_s: config.masking.gamma_s,
        n_samples: config.masking.n_samples,
        decode: config.infiller.decode.clone(),
    }
}

fn generate(ctx: &Ctx) -> Result<()> {
    let config = &ctx.config;
    let split = ctx.split()?;
    let backend = config.infiller.build()?;
    let handle = load_handle(ctx)?;
    if handle.is_none() && backend.info().supports_training && config.masking.method != Method::Mf {
        bail!(factmask::Error::Config(
            "this backend needs a trained infiller; run `train-infiller` first".into()
        ));
    }
    let masker = build_masker(config, config.masking.unit, config.seed)?;
    let negatives = generate_negatives(
        backend.as_ref(),
        handle.as_ref(),
        &split,
        &settings(config),
        &masker,
    )?;
    save_negatives(&ctx.layout.negatives(), &negatives)?;
    println!(
        "generated {} negatives for {} pairs",
        negatives.len(),
        split.gen_half.len()
    );
    ctx.manifest(
        "generate",
        &[ctx.layout.split()],
        &[ctx.layout.negatives()],
        json!({ "negatives": negatives.len(), "method": config.masking.method }),
    )
}

fn purge(path: &Path) -> Result<()> {
    fs::remove_file(path).with_context(|| format!("removing {}", path.display()))?;
    log::info!("removed generated negatives {}", path.display());
    Ok(())
}

fn build_dataset(ctx: &Ctx, purge_generated: bool) -> Result<()> {
    let config = &ctx.config;
    let split = ctx.split()?;
    let negatives = load_negatives(&ctx.layout.negatives())?;
    let dataset = assemble(
        &split,
        &negatives,
        &config.dataset,
        stream_seed(config.seed, "dataset"),
    )?;
    save_dataset(&ctx.layout.dataset(), &dataset)?;
    let stats = dataset_stats(&dataset)?;
    let stats_path = ctx.out().join("dataset_stats.json");
    write_json(&stats_path, &stats)?;
    println!("{}", serde_json::to_string_pretty(&stats)?);
    if purge_generated {
        purge(&ctx.layout.negatives())?;
    }
    ctx.manifest(
        "build-dataset",
        &[ctx.layout.split(), ctx.layout.negatives()],
        &[ctx.layout.dataset(), stats_path],
        json!({ "purged_negatives": purge_generated, "filter": config.dataset }),
    )
}

fn train_classifier(ctx: &Ctx) -> Result<()> {
    let config = &ctx.config;
    let dataset = load_dataset(&ctx.layout.dataset())?;
    let backend = config.classifier.build()?;
    let validation = load_validation(config)?;
    let manifest = train_and_select(
        config,
        backend.as_ref(),
        &dataset,
        validation.as_deref(),
        &ctx.layout.classifier(),
    )?;
    let selected = manifest.selected_handle()?.checkpoint;
    println!(
        "selected checkpoint {selected} by {}",
        manifest.selection_metric
    );
    ctx.manifest(
        "train-classifier",
        &[ctx.layout.dataset()],
        &[ctx.layout.classifier().join(CheckpointManifest::FILE)],
        json!({ "selected_checkpoint": selected, "validation_scores": manifest.validation_scores }),
    )
}

fn print_reports(reports: &[EvaluationReport]) {
    for r in reports {
        println!("{}", serde_json::to_string(r).expect("report serializes"));
    }
}

fn evaluate(ctx: &Ctx) -> Result<()> {
    let config = &ctx.config;
    if config.evaluation.benchmarks.is_empty() {
        bail!(factmask::Error::Config(
            "evaluation.benchmarks is empty".into()
        ));
    }
    let manifest = CheckpointManifest::load(&ctx.layout.classifier())?;
    let backend = config.classifier.build()?;
    let reports = evaluate_benchmarks(
        config,
        backend.as_ref(),
        &manifest,
        Some(&ctx.layout.predictions()),
    )?;
    let path = ctx.out().join(EVALUATION_FILE);
    write_json(&path, &reports)?;
    print_reports(&reports);
    let inputs: Vec<PathBuf> = config
        .evaluation
        .benchmarks
        .iter()
        .map(|b| b.path.clone())
        .collect();
    ctx.manifest(
        "evaluate",
        &inputs,
        &[path, ctx.layout.predictions()],
        json!({ "reports": reports.len() }),
    )
}

fn sweep(ctx: &Ctx) -> Result<()> {
    let config = &ctx.config;
    let pairs = load_corpus(config)?;
    let split = make_split(config, &pairs)?;
    let validation = load_validation(config)?
        .ok_or_else(|| factmask::Error::Config("sweep needs evaluation.validation".into()))?;
    let grid = SweepGrid::from_config(config);
    let report = run_sweep(
        config,
        &grid,
        &split,
        &validation,
        &ctx.out().join("sweep_work"),
    )?;
    let path = ctx.out().join(SWEEP_FILE);
    save_sweep(&path, &report)?;
    let failed = report.rows.iter().filter(|r| r.failed()).count();
    println!(
        "{:>8} {:>8} {:>8} {:>9} {:>9}",
        "gamma_a", "gamma_s", "ba", "distance", "diversity"
    );
    for r in &report.rows {
        let cell = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{v:.4}"));
        println!(
            "{:>8.2} {:>8.2} {:>8} {:>9} {:>9}",
            r.gamma_a,
            r.gamma_s,
            cell(r.ba),
            cell(r.distance),
            cell(r.diversity)
        );
    }
    ctx.manifest(
        "sweep",
        &corpus_path(config),
        &[path],
        json!({ "rows": report.rows.len(), "failed_rows": failed }),
    )
}

fn analyze(ctx: &Ctx, field: Option<&str>) -> Result<()> {
    let fields: Vec<XField> = match field {
        Some(f) => vec![f.parse()?],
        None => vec![XField::Distance, XField::Diversity],
    };
    let sweep_path = ctx.out().join(SWEEP_FILE);
    let report = load_sweep(&sweep_path).context("run `sweep` first")?;
    let mut fits = serde_json::Map::new();
    for f in fields {
        let fit = fit_analysis(&report.rows, f)?;
        let name = serde_json::to_value(f)?
            .as_str()
            .unwrap_or_default()
            .to_string();
        println!(
            "{name}: ba = {:.4} x^2 + {:.4} x + {:.4}, R^2 = {:.4}",
            fit.a, fit.b, fit.c, fit.r_squared
        );
        fits.insert(
            name,
            json!({ "a": fit.a, "b": fit.b, "c": fit.c, "r_squared": fit.r_squared, "vertex": fit.vertex() }),
        );
    }
    let path = ctx.out().join(ANALYSIS_FILE);
    write_json(&path, &fits)?;
    ctx.manifest(
        "analyze",
        &[sweep_path],
        &[path],
        json!({ "fits": fits.len() }),
    )
}

fn plot(ctx: &Ctx) -> Result<()> {
    let plots = ctx.out().join("plots");
    let mut inputs = Vec::new();
    let mut outputs = Vec::new();
    let sweep_path = ctx.out().join(SWEEP_FILE);
    if sweep_path.exists() {
        let report = load_sweep(&sweep_path)?;
        outputs.extend(emit_sweep_plots(&report.rows, &plots)?);
        inputs.push(sweep_path);
    }
    let eval_path = ctx.out().join(EVALUATION_FILE);
    if eval_path.exists() {
        let reports: Vec<EvaluationReport> = read_json(&eval_path)?;
        outputs.extend(emit_report_plots(&reports, &plots)?);
        inputs.push(eval_path);
    }
    if inputs.is_empty() {
        bail!(factmask::Error::InvalidInput(format!(
            "nothing to plot in {}; run `sweep` or `evaluate` first",
            ctx.out().display()
        )));
    }
    for p in &outputs {
        println!("{}", p.display());
    }
    ctx.manifest("plot", &inputs, &outputs, json!({ "files": outputs.len() }))
}

fn run(ctx: &Ctx, purge_generated: bool) -> Result<()> {
    let summary = run_pipeline(&ctx.config, ctx.out())?;
    write_json(&ctx.out().join(EVALUATION_FILE), &summary.reports)?;
    print_reports(&summary.reports);
    if purge_generated {
        purge(&ctx.layout.negatives())?;
    }
    ctx.manifest(
        "run",
        &corpus_path(&ctx.config),
        &[ctx.layout.report()],
        json!({
            "negatives": summary.negatives,
            "selected_checkpoint": summary.selected_checkpoint,
            "purged_negatives": purge_generated,
        }),
    )
}
