use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use honam::data::{load_csv, Preprocessor, Schema};
use honam::model::HonamModel;
use sha2::{Digest, Sha256};
use tempfile::TempDir;

fn honam(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_honam"))
        .args(args)
        .env_remove("HONAM_OUT_DIR")
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = honam(args);
    assert!(
        out.status.success(),
        "honam {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn code(args: &[&str]) -> i32 {
    honam(args).status.code().expect("exit code")
}

fn p(path: &Path) -> &str {
    path.to_str().expect("utf-8 temp path")
}

fn read_csv(path: &Path) -> Vec<BTreeMap<String, String>> {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header: Vec<String> = r.headers().unwrap().iter().map(String::from).collect();
    r.records()
        .map(|rec| {
            header
                .iter()
                .cloned()
                .zip(rec.unwrap().iter().map(String::from))
                .collect()
        })
        .collect()
}

struct Fixture {
    dir: TempDir,
}

impl Fixture {
    fn new() -> Self {
        Self {
            dir: tempfile::tempdir().unwrap(),
        }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn synth(&self, kind: &str, name: &str, extra: &[&str]) -> PathBuf {
        let out = self.path(name);
        let mut args = vec!["synth", kind, "--out", p(&out)];
        args.extend_from_slice(extra);
        ok(&args);
        out
    }

    fn train(&self, data: &Path, name: &str, extra: &[&str]) -> PathBuf {
        let out = self.path(name);
        let csv = data.join("data.csv");
        let schema = data.join("schema.json");
        let mut args = vec!["train", "--data", p(&csv), "--schema", p(&schema), "--out", p(&out)];
        args.extend_from_slice(extra);
        ok(&args);
        out
    }
}

#[test]
fn synth_row_counts_and_reproducibility() {
    let f = Fixture::new();
    let a = f.synth("classification", "a", &["--seed", "5"]);
    let b = f.synth("classification", "b", &["--seed", "5"]);
    let c = f.synth("classification", "c", &["--seed", "6"]);
    let bytes = |d: &Path| std::fs::read(d.join("data.csv")).unwrap();
    assert_eq!(read_csv(&a.join("data.csv")).len(), 10_000);
    assert_eq!(bytes(&a), bytes(&b));
    assert_ne!(bytes(&a), bytes(&c));
    let r = f.synth("regression", "r", &[]);
    assert_eq!(read_csv(&r.join("data.csv")).len(), 100);
    Schema::load(r.join("schema.json")).unwrap();
    assert_eq!(code(&["synth", "regression", "--rows", "5", "--out", p(&f.path("x"))]), 1);
}

#[test]
fn train_smoke_writes_model_history_and_manifest() {
    let f = Fixture::new();
    let data = f.synth("regression", "data", &[]);
    let out = f.train(&data, "run", &["--order", "1", "--epochs", "3"]);
    let model = HonamModel::load(out.join("model_seed0.honam")).unwrap();
    assert_eq!(model.order(), 1);
    let history = read_csv(&out.join("history_seed0.csv"));
    assert_eq!(history.len(), 3);
    assert!(history[0].contains_key("valid_loss"));

    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "train");
    for (name, hash) in manifest["artifacts"].as_object().unwrap() {
        let bytes = std::fs::read(out.join(name)).unwrap();
        assert_eq!(hex::encode(Sha256::digest(&bytes)), hash.as_str().unwrap(), "{name}");
    }
    assert!(!std::fs::read_to_string(out.join("manifest.json")).unwrap().contains("time"));
}

#[test]
fn five_seeds_report_mean_and_std() {
    let f = Fixture::new();
    let data = f.synth("regression", "data", &[]);
    let out = f.train(&data, "run", &["--order", "2", "--epochs", "2", "--seeds", "0,1,2,3,4"]);
    let rows = read_csv(&out.join("metrics.csv"));
    let r2 = rows.iter().find(|r| r["metric"] == "r2").unwrap();
    assert_eq!(r2["n_seeds"], "5");
    assert!(r2["mean"].parse::<f64>().is_ok());
    assert!(r2["std"].parse::<f64>().unwrap() >= 0.0);
    for s in 0..5 {
        assert!(out.join(format!("model_seed{s}.honam")).exists());
    }
    let per_seed = read_csv(&out.join("metrics_per_seed.csv"));
    let mean: f64 = per_seed
        .iter()
        .filter(|r| r["partition"] == "test" && r["metric"] == "r2")
        .map(|r| r["value"].parse::<f64>().unwrap())
        .sum::<f64>()
        / 5.0;
    assert!((mean - r2["mean"].parse::<f64>().unwrap()).abs() < 1e-12);
}

#[test]
fn training_is_byte_identical_across_reruns() {
    let f = Fixture::new();
    let data = f.synth("regression", "data", &[]);
    let a = f.train(&data, "a", &["--epochs", "3", "--seeds", "1,2"]);
    let b = f.train(&data, "b", &["--epochs", "3", "--seeds", "1,2"]);
    for name in ["model_seed1.honam", "model_seed2.honam", "history_seed2.csv", "metrics.csv"] {
        assert_eq!(std::fs::read(a.join(name)).unwrap(), std::fs::read(b.join(name)).unwrap(), "{name}");
    }
}

#[test]
fn usage_and_data_errors_map_to_exit_codes() {
    let f = Fixture::new();
    let data = f.synth("regression", "data", &[]);
    let csv = data.join("data.csv");
    let schema = data.join("schema.json");
    let out = f.path("out");
    let base = ["train", "--data", p(&csv), "--schema", p(&schema), "--out", p(&out)];
    let with = |extra: &[&str]| -> Vec<String> { base.iter().chain(extra).map(|s| s.to_string()).collect() };
    let run = |v: Vec<String>| code(&v.iter().map(String::as_str).collect::<Vec<_>>());

    assert_eq!(run(with(&["--order", "0"])), 1);
    assert_eq!(run(with(&["--no-such-flag"])), 1);
    assert_eq!(run(with(&["--unit", "tanh"])), 1);
    assert_eq!(run(with(&["--seeds", "1,1"])), 1);
    assert_eq!(code(&["--help"]), 0);
    assert_eq!(code(&["--version"]), 0);
    assert_eq!(code(&[]), 1);

    let bad = f.path("bad.json");
    std::fs::write(&bad, r#"{"train": {"epochs": 3, "momentum": 0.9}}"#).unwrap();
    assert_eq!(run(with(&["--config", p(&bad)])), 1);
    std::fs::write(&bad, r#"{"train": {"epochs": 0}}"#).unwrap();
    assert_eq!(run(with(&["--config", p(&bad)])), 1);

    let missing = f.path("missing.csv");
    assert_eq!(
        code(&["train", "--data", p(&missing), "--schema", p(&schema), "--out", p(&out)]),
        2
    );
    let broken = f.path("broken.csv");
    std::fs::write(&broken, "x,y\n0.1,0.2\nabc,0.3\n").unwrap();
    let o = honam(&["train", "--data", p(&broken), "--schema", p(&schema), "--out", p(&out)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("row 2"));
    assert!(!out.join("metrics.csv").exists());
}

#[test]
fn out_dir_comes_from_the_environment() {
    let f = Fixture::new();
    let target = f.path("from-env");
    let status = Command::new(env!("CARGO_BIN_EXE_honam"))
        .args(["synth", "regression"])
        .env("HONAM_OUT_DIR", &target)
        .output()
        .unwrap();
    assert!(status.status.success());
    assert!(target.join("data.csv").exists());
}

#[test]
fn eval_reproduces_the_training_report() {
    let f = Fixture::new();
    let data = f.synth("regression", "data", &[]);
    let run = f.train(&data, "run", &["--epochs", "5", "--seeds", "3"]);
    let model = run.join("model_seed3.honam");
    let ev = f.path("ev");
    ok(&[
        "eval",
        "--model",
        p(&model),
        "--data",
        p(&data.join("data.csv")),
        "--schema",
        p(&data.join("schema.json")),
        "--out",
        p(&ev),
    ]);
    let trained: BTreeMap<String, String> = read_csv(&run.join("metrics_per_seed.csv"))
        .into_iter()
        .filter(|r| r["partition"] == "test")
        .map(|r| (r["metric"].clone(), r["value"].clone()))
        .collect();
    let evaluated: BTreeMap<String, String> = read_csv(&ev.join("metrics.csv"))
        .into_iter()
        .map(|r| (r["metric"].clone(), r["value"].clone()))
        .collect();
    assert_eq!(trained, evaluated);
}

#[test]
fn eval_rejects_corrupt_models_and_mismatched_schemas() {
    let f = Fixture::new();
    let reg = f.synth("regression", "reg", &[]);
    let cls = f.synth("biased", "cls", &["--rows", "200"]);
    let run = f.train(&reg, "run", &["--epochs", "1"]);
    let model = run.join("model_seed0.honam");
    let out = f.path("ev");

    let o = honam(&[
        "eval",
        "--model",
        p(&model),
        "--data",
        p(&cls.join("data.csv")),
        "--schema",
        p(&cls.join("schema.json")),
        "--out",
        p(&out),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("task mismatch"));

    let mut schema = Schema::load(reg.join("schema.json")).unwrap();
    schema.columns.insert("extra".into(), honam::data::ColumnSpec::continuous());
    let other = f.path("other.json");
    std::fs::write(&other, schema.to_json()).unwrap();
    let o = honam(&[
        "eval",
        "--model",
        p(&model),
        "--data",
        p(&reg.join("data.csv")),
        "--schema",
        p(&other),
        "--out",
        p(&out),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("+ extra"));

    let mut bytes = std::fs::read(&model).unwrap();
    let mid = bytes.len() / 2;
    bytes[mid] ^= 0xFF;
    let corrupt = f.path("corrupt.honam");
    std::fs::write(&corrupt, bytes).unwrap();
    let o = honam(&["eval", "--model", p(&corrupt), "--data", p(&reg.join("data.csv")), "--out", p(&out)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("corrupt"));
}

#[test]
fn interpret_exports_curves_heatmaps_and_rows() {
    let f = Fixture::new();
    let data = f.synth("biased", "data", &["--rows", "400"]);
    let run = f.train(&data, "run", &["--order", "3", "--epochs", "2"]);
    let model = run.join("model_seed0.honam");
    let out = f.path("ip");
    let interp = |extra: &[&str]| {
        let mut args = vec!["interpret", "--model", p(&model), "--out", p(&out)];
        args.extend_from_slice(extra);
        ok(&args);
    };

    interp(&["--feature", "age", "--grid", "37"]);
    let curve = read_csv(&out.join("shape_age.csv"));
    assert_eq!(curve.len(), 37);
    assert_eq!(
        curve[0].keys().cloned().collect::<Vec<_>>(),
        ["contribution", "density", "raw_value", "value"]
    );
    let density: f64 = curve.iter().map(|r| r["density"].parse::<f64>().unwrap()).sum();
    assert!((density - 1.0).abs() < 1e-9);

    interp(&["--feature", "race"]);
    let races: Vec<String> = read_csv(&out.join("shape_race.csv")).into_iter().map(|r| r["raw_value"].clone()).collect();
    assert_eq!(races, ["African-American", "Caucasian", "Hispanic"]);

    interp(&["--pair", "age,priors_count", "--grid", "6"]);
    assert_eq!(read_csv(&out.join("pair_age_priors_count.csv")).len(), 36);

    for (extra, file) in [
        (vec!["--feature", "age", "--format", "svg"], "shape_age.svg"),
        (vec!["--pair", "age,race", "--format", "svg"], "pair_age_race.svg"),
        (vec!["--row", "7", "--data", p(&data.join("data.csv")), "--format", "svg"], "row_7.svg"),
    ] {
        interp(&extra);
        let text = std::fs::read_to_string(out.join(file)).unwrap();
        let doc = roxmltree::Document::parse(&text).unwrap_or_else(|e| panic!("{file}: {e}"));
        assert_eq!(doc.root_element().tag_name().name(), "svg");
    }

    interp(&["--row", "7", "--data", p(&data.join("data.csv")), "--max-order", "2"]);
    let rows = read_csv(&out.join("row_7.csv"));
    let value = |kind: &str| -> Vec<f64> {
        rows.iter()
            .filter(|r| r["kind"] == kind)
            .map(|r| r["value"].parse().unwrap())
            .collect()
    };
    assert_eq!(value("term").len(), 4 + 6);
    assert_eq!(value("aggregate").len(), 1);
    let total = value("total")[0];
    let sum: f64 = value("bias")[0] + value("term").iter().sum::<f64>() + value("aggregate").iter().sum::<f64>();
    assert!((sum - total).abs() < 1e-8, "{sum} vs {total}");

    let loaded = HonamModel::load(&model).unwrap();
    let context = loaded.meta.context.clone().unwrap();
    let pre: Preprocessor = serde_json::from_value(context["preprocessor"].clone()).unwrap();
    let schema: Schema = serde_json::from_value(context["schema"].clone()).unwrap();
    let table = load_csv(data.join("data.csv"), &schema).unwrap();
    let x = pre.transform(&table.select_rows(&[7]));
    let forward = loaded.forward(&x).unwrap()[0];
    assert!((forward - total).abs() < 1e-8);
    let prob = value("prediction")[0];
    assert!((prob - 1.0 / (1.0 + (-forward).exp())).abs() < 1e-12);
}

#[test]
fn interpret_errors() {
    let f = Fixture::new();
    let data = f.synth("regression", "data", &[]);
    let run = f.train(&data, "run", &["--order", "1", "--epochs", "1"]);
    let model = run.join("model_seed0.honam");
    let out = f.path("ip");
    let o = honam(&["interpret", "--model", p(&model), "--pair", "x,x", "--out", p(&out)]);
    assert_eq!(o.status.code(), Some(1));
    let data2 = f.synth("interaction", "d2", &["--rows", "60"]);
    let run2 = f.train(&data2, "run2", &["--order", "1", "--epochs", "1"]);
    let o = honam(&[
        "interpret",
        "--model",
        p(&run2.join("model_seed0.honam")),
        "--pair",
        "x1,x2",
        "--out",
        p(&out),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("order"));
    assert_eq!(code(&["interpret", "--model", p(&model), "--feature", "nope", "--out", p(&out)]), 1);
    assert_eq!(code(&["interpret", "--model", p(&model), "--row", "1", "--out", p(&out)]), 1);
    assert_eq!(code(&["interpret", "--model", p(&model), "--out", p(&out)]), 1);
}

fn fairness(path: &Path) -> Vec<BTreeMap<String, String>> {
    read_csv(&path.join("fairness.csv"))
}

fn metric(rows: &[BTreeMap<String, String>], model: &str, metric: &str, group_b: &str) -> f64 {
    rows.iter()
        .find(|r| r["model"] == model && r["metric"] == metric && r["group_b"] == group_b)
        .unwrap_or_else(|| panic!("{model} {metric} {group_b}"))["value"]
        .parse()
        .unwrap()
}

#[test]
fn ablation_report_and_model() {
    let f = Fixture::new();
    let data = f.synth("biased", "data", &["--rows", "3000", "--seed", "2"]);
    let run = f.train(&data, "run", &["--epochs", "8", "--lr", "0.01"]);
    let model = run.join("model_seed0.honam");
    let csv = data.join("data.csv");

    let none = f.path("none");
    ok(&["ablate", "--model", p(&model), "--data", p(&csv), "--out", p(&none)]);
    let rows = fairness(&none);
    for r in rows.iter().filter(|r| r["model"] == "biased") {
        let twin = rows
            .iter()
            .find(|o| {
                o["model"] == "unbiased" && o["metric"] == r["metric"] && o["group_a"] == r["group_a"] && o["group_b"] == r["group_b"]
            })
            .unwrap();
        assert_eq!(r["value"], twin["value"]);
    }

    let out = f.path("ab");
    ok(&["ablate", "--model", p(&model), "--data", p(&csv), "--features", "race,sex", "--out", p(&out)]);
    let rows = fairness(&out);
    assert!(rows.iter().any(|r| r["model"] == "biased"));
    assert!(rows.iter().any(|r| r["model"] == "unbiased"));
    for pair in rows.iter().filter(|r| r["model"] == "biased" && r["feature"] == "race") {
        let before: f64 = pair["value"].parse().unwrap();
        let after = rows
            .iter()
            .find(|o| o["model"] == "unbiased" && o["group_a"] == pair["group_a"] && o["group_b"] == pair["group_b"])
            .unwrap()["value"]
            .parse::<f64>()
            .unwrap();
        assert!(after > before, "{} / {}: {before} -> {after}", pair["group_a"], pair["group_b"]);
    }
    assert!(metric(&rows, "unbiased", "auroc", "") < metric(&rows, "biased", "auroc", ""));

    let ablated = HonamModel::load(out.join("model_ablated.honam")).unwrap();
    assert_eq!(ablated.ablated().iter().copied().collect::<Vec<_>>(), [2, 3]);
    let shape = ablated.global_shape(3, &[-1.0, 0.0, 1.0]).unwrap();
    assert!(shape.iter().all(|&(_, c)| c == 0.0));

    assert_eq!(
        code(&["ablate", "--model", p(&model), "--data", p(&csv), "--features", "zip", "--out", p(&out)]),
        1
    );
}

#[test]
fn bench_csv_schema_and_counts() {
    let f = Fixture::new();
    let out = f.path("bench");
    ok(&["bench", "--m", "6,9", "--k", "3", "--t", "2,3", "--calls", "5", "--out", p(&out)]);
    let text = std::fs::read_to_string(out.join("bench.csv")).unwrap();
    assert!(text.starts_with("kernel,m,k,t,multiplies,wall_ns\n"));
    let rows = read_csv(&out.join("bench.csv"));
    assert_eq!(rows.len(), 8);
    let binom = |n: u64, r: u64| (0..r).fold(1u64, |acc, i| acc * (n - i) / (i + 1));
    for r in rows.iter().filter(|r| r["kernel"] == "enumeration") {
        let (m, k, t): (u64, u64, u64) = (r["m"].parse().unwrap(), r["k"].parse().unwrap(), r["t"].parse().unwrap());
        assert_eq!(r["multiplies"].parse::<u64>().unwrap(), binom(m, t) * (t - 1) * k);
    }

    ok(&["bench", "--m", "40", "--k", "2", "--t", "6", "--cap", "100", "--calls", "2", "--out", p(&out)]);
    let rows = read_csv(&out.join("bench.csv"));
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0]["kernel"], "recursion");
    assert_eq!(code(&["bench", "--m", "0", "--out", p(&out)]), 1);
    assert_eq!(code(&["bench", "--kernels", "fft", "--out", p(&out)]), 1);
}
