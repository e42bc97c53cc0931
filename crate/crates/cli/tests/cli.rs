use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../core/data")
        .join(name)
}

fn toy_config(dir: &Path) -> PathBuf {
    let text = format!(
        r#"seed = 13

[corpus]
path = "{corpus}"

[masking]
n_samples = 4

[evaluation.validation]
name = "toy-validation"
path = "{validation}"
schema = "factcc-test"

[[evaluation.benchmarks]]
name = "toy-benchmark"
path = "{benchmark}"
schema = "qags-cnndm"
"#,
        corpus = data("toy_corpus.jsonl").display(),
        validation = data("toy_validation.jsonl").display(),
        benchmark = data("toy_benchmark.jsonl").display(),
    );
    let path = dir.join("toy.toml");
    fs::write(&path, text).unwrap();
    path
}

fn factmask(config: &Path, out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_factmask"))
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn ok(output: &Output) -> String {
    assert!(
        output.status.success(),
        "exit {:?}: {}",
        output.status.code(),
        String::from_utf8_lossy(&output.stderr)
    );
    String::from_utf8(output.stdout.clone()).unwrap()
}

#[test]
fn verbs_chain_and_write_manifests() {
    let dir = tempfile::tempdir().unwrap();
    let config = toy_config(dir.path());
    let out = dir.path().join("out");
    for verb in ["split", "train-infiller", "generate"] {
        ok(&factmask(&config, &out, &[verb]));
    }
    assert!(out.join("negatives.jsonl").exists());
    ok(&factmask(
        &config,
        &out,
        &["build-dataset", "--purge-generated"],
    ));
    assert!(!out.join("negatives.jsonl").exists());
    assert!(out.join("dataset.jsonl").exists());
    ok(&factmask(&config, &out, &["train-classifier"]));
    let stdout = ok(&factmask(&config, &out, &["evaluate"]));
    assert!(stdout.contains("\"balanced_accuracy\""));
    ok(&factmask(&config, &out, &["plot"]));
    assert!(out.join("plots/reports.csv").exists());
    for verb in [
        "split",
        "train-infiller",
        "generate",
        "build-dataset",
        "train-classifier",
        "evaluate",
        "plot",
    ] {
        let manifest: serde_json::Value = serde_json::from_str(
            &fs::read_to_string(out.join("manifests").join(format!("{verb}.json"))).unwrap(),
        )
        .unwrap();
        assert_eq!(manifest["verb"], verb);
        assert_eq!(manifest["seed"], 13);
    }
}

#[test]
fn stepwise_verbs_match_full_run() {
    let dir = tempfile::tempdir().unwrap();
    let config = toy_config(dir.path());
    let steps = dir.path().join("steps");
    for verb in [
        "split",
        "generate",
        "build-dataset",
        "train-classifier",
        "evaluate",
    ] {
        ok(&factmask(&config, &steps, &[verb]));
    }
    let full = dir.path().join("full");
    ok(&factmask(&config, &full, &["run"]));
    for file in [
        "split.json",
        "dataset.jsonl",
        "evaluation.json",
        "classifier/manifest.json",
    ] {
        assert_eq!(
            fs::read(steps.join(file)).unwrap(),
            fs::read(full.join(file)).unwrap(),
            "{file}"
        );
    }
}

#[test]
fn seed_flag_overrides_config() {
    let dir = tempfile::tempdir().unwrap();
    let config = toy_config(dir.path());
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    ok(&factmask(&config, &a, &["--seed", "1", "split"]));
    ok(&factmask(&config, &b, &["--seed", "2", "split"]));
    assert_ne!(
        fs::read(a.join("split.json")).unwrap(),
        fs::read(b.join("split.json")).unwrap()
    );
    let manifest = fs::read_to_string(a.join("manifests/split.json")).unwrap();
    assert!(manifest.contains("\"seed\": 1"));
}

#[test]
fn mask_preview_prints_inputs() {
    let dir = tempfile::tempdir().unwrap();
    let config = toy_config(dir.path());
    let out = dir.path().join("out");
    let stdout = ok(&factmask(
        &config,
        &out,
        &["mask-preview", "--pair", "toy-001", "--method", "mfma"],
    ));
    let line: serde_json::Value = serde_json::from_str(stdout.lines().next().unwrap()).unwrap();
    assert_eq!(line["pair_id"], "toy-001");
    assert!(line["input"].as_str().unwrap().starts_with("Summary: "));
    assert!(line["input"].as_str().unwrap().contains(" Article: "));
}

#[test]
fn exit_codes_follow_error_kind() {
    let dir = tempfile::tempdir().unwrap();
    let config = toy_config(dir.path());
    let out = dir.path().join("out");

    let bad_ratio = factmask(&config, &out, &["--set", "masking.gamma_a=1.5", "split"]);
    assert_eq!(bad_ratio.status.code(), Some(1));
    let unknown_key = factmask(&config, &out, &["--set", "masking.colour=red", "split"]);
    assert_eq!(unknown_key.status.code(), Some(1));

    let missing = format!(
        "corpus.path=\"{}\"",
        dir.path().join("missing.jsonl").display()
    );
    let no_data = factmask(&config, &out, &["--set", &missing, "split"]);
    assert_eq!(no_data.status.code(), Some(2));
    let no_split = factmask(&config, &dir.path().join("empty"), &["generate"]);
    assert_eq!(no_split.status.code(), Some(2));

    ok(&factmask(&config, &out, &["split"]));
    let broken = factmask(
        &config,
        &out,
        &[
            "--set",
            "infiller.backend=command",
            "--set",
            "infiller.command={ name = \"ext\", program = \"/nonexistent/infiller\" }",
            "--set",
            "masking.method=mf",
            "generate",
        ],
    );
    assert_eq!(
        broken.status.code(),
        Some(3),
        "{}",
        String::from_utf8_lossy(&broken.stderr)
    );
}

#[test]
fn command_backend_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let config = toy_config(dir.path());
    let out = dir.path().join("out");
    let script = dir.path().join("fill.py");
    fs::write(
        &script,
        r#"import json, re, sys
verb, model, requests, decode, outputs = sys.argv[1:6]
with open(requests) as src, open(outputs, "w") as dst:
    for line in src:
        r = json.loads(line)
        text = re.sub(r"<mask_\d+>", "Atlantis", r["input"])
        dst.write(json.dumps({"id": r["id"], "text": text}) + "\n")
"#,
    )
    .unwrap();
    let backend = format!(
        "infiller.command={{ name = \"py\", program = \"python3\", args = [\"{}\"] }}",
        script.display()
    );
    ok(&factmask(&config, &out, &["split"]));
    ok(&factmask(
        &config,
        &out,
        &[
            "--set",
            "infiller.backend=command",
            "--set",
            &backend,
            "--set",
            "masking.method=mf",
            "generate",
        ],
    ));
    let negatives = fs::read_to_string(out.join("negatives.jsonl")).unwrap();
    assert_eq!(negatives.lines().count(), 100);
    assert!(negatives.lines().all(|l| l.contains("Atlantis")));
}
