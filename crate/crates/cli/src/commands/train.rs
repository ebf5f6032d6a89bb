use std::collections::BTreeMap;
use std::path::PathBuf;

use clap::Args;
use honam::data::{load_csv, DatasetBundle, Schema};
use honam::feature_nets::FeatureNetConfig;
use honam::metrics::MetricReport;
use honam::model::HonamConfig;
use honam::train::{evaluate, fit, TrainConfig};
use honam::units::UnitKind;
use serde::Deserialize;

use super::{csv_bytes, fmt_opt, print_metrics};
use crate::context::RunContext;
use crate::error::CliError;
use crate::manifest::{create_dir, RunManifest};
use crate::OutDir;

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Input CSV with a header row.
    #[arg(long)]
    pub data: PathBuf,
    /// Schema JSON describing every column.
    #[arg(long)]
    pub schema: PathBuf,
    /// JSON file with optional `train` and `net` sections.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Interaction order t.
    #[arg(long, default_value_t = 2, value_parser = clap::value_parser!(u64).range(1..))]
    pub order: u64,
    /// Hidden unit of the first layer: linear, exu or expdive.
    #[arg(long)]
    pub unit: Option<UnitKind>,
    /// Comma-separated seeds; each gets its own split and initialization.
    #[arg(long, value_delimiter = ',', default_value = "0")]
    pub seeds: Vec<u64>,
    /// Overrides `train.epochs`.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub epochs: Option<u64>,
    /// Overrides `train.learning_rate`.
    #[arg(long)]
    pub lr: Option<f64>,
    #[command(flatten)]
    pub out: OutDir,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct RunConfig {
    train: TrainConfig,
    net: FeatureNetConfig,
}

struct SeedRun {
    seed: u64,
    model: Vec<u8>,
    history: Vec<u8>,
    best_epoch: usize,
    metrics: BTreeMap<&'static str, BTreeMap<String, Option<f64>>>,
}

pub fn run(args: TrainArgs) -> Result<(), CliError> {
    let schema = Schema::load(&args.schema)?;
    let mut config = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
            serde_json::from_str::<RunConfig>(&text)
                .map_err(|e| CliError::Usage(format!("{}: invalid training config: {e}", path.display())))?
        }
        None => RunConfig::default(),
    };
    if let Some(unit) = args.unit {
        config.net.unit = unit;
    }
    if let Some(epochs) = args.epochs {
        config.train.epochs = epochs as usize;
    }
    if let Some(lr) = args.lr {
        config.train.learning_rate = lr;
    }
    config.train.validate()?;
    let mut seeds = args.seeds.clone();
    seeds.sort_unstable();
    seeds.dedup();
    if seeds.len() != args.seeds.len() {
        return Err(CliError::Usage("--seeds contains duplicates".into()));
    }
    let model_config = {
        let mut c = HonamConfig::new(schema.feature_names().len(), args.order as usize, schema.task);
        c.net = config.net.clone();
        c
    };
    model_config.validate()?;

    let table = load_csv(&args.data, &schema)?;
    if table.rejected_rows > 0 {
        log::warn!("{} rows with a missing target were dropped", table.rejected_rows);
    }
    let out_dir = args.out.out.clone();
    create_dir(&out_dir)?;

    let results: Vec<Result<SeedRun, CliError>> = std::thread::scope(|s| {
        let handles: Vec<_> = args
            .seeds
            .iter()
            .map(|&seed| {
                let (table, schema, model_config, train_config) = (&table, &schema, &model_config, &config.train);
                s.spawn(move || -> Result<SeedRun, CliError> {
                    let bundle = DatasetBundle::prepare(table, schema, seed)?;
                    let tc = TrainConfig {
                        seed,
                        ..train_config.clone()
                    };
                    let (mut model, outcome) = fit(model_config.clone(), &bundle.train, &bundle.valid, &tc)?;
                    RunContext {
                        schema: schema.clone(),
                        preprocessor: bundle.preprocessor.clone(),
                        split_seed: seed,
                    }
                    .attach(&mut model);
                    let mut metrics = BTreeMap::new();
                    for (name, part) in [("train", &bundle.train), ("valid", &bundle.valid), ("test", &bundle.test)] {
                        metrics.insert(name, evaluate(&model, part)?);
                    }
                    let mut history = Vec::new();
                    outcome.write_history(&mut history).expect("write to memory");
                    log::info!(
                        "seed {seed}: best epoch {} of {}, test {:?}",
                        outcome.best_epoch,
                        tc.epochs,
                        metrics["test"]
                    );
                    Ok(SeedRun {
                        seed,
                        model: model.to_bytes()?,
                        history,
                        best_epoch: outcome.best_epoch,
                        metrics,
                    })
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("training thread panicked"))
            .collect()
    });
    let runs = results.into_iter().collect::<Result<Vec<_>, _>>()?;

    let mut manifest = RunManifest::new("train", &out_dir);
    manifest.input(&args.data)?;
    manifest.input(&args.schema)?;
    if let Some(c) = &args.config {
        manifest.input(c)?;
    }
    manifest.seeds = args.seeds.clone();
    let mut per_seed = Vec::new();
    for r in &runs {
        manifest.write(&out_dir, &format!("model_seed{}.honam", r.seed), &r.model)?;
        manifest.write(&out_dir, &format!("history_seed{}.csv", r.seed), &r.history)?;
        per_seed.push([r.seed.to_string(), "meta".into(), "best_epoch".into(), r.best_epoch.to_string()]);
        for (part, m) in &r.metrics {
            for (name, v) in m {
                per_seed.push([r.seed.to_string(), part.to_string(), name.clone(), fmt_opt(*v)]);
            }
        }
    }
    manifest.write(
        &out_dir,
        "metrics_per_seed.csv",
        &csv_bytes(&["seed", "partition", "metric", "value"], per_seed),
    )?;
    let test_runs: Vec<_> = runs.iter().map(|r| r.metrics["test"].clone()).collect();
    let report = MetricReport::from_runs(&test_runs);
    manifest.write(&out_dir, "metrics.csv", report.to_csv().as_bytes())?;
    manifest.finish(&out_dir)?;

    if runs.len() == 1 {
        print_metrics(&test_runs[0]);
    } else {
        for m in &report.metrics {
            println!(
                "{:<10} {:.6} ± {:.6} ({} seeds)",
                m.name,
                m.mean,
                m.std.unwrap_or(0.0),
                m.n_seeds
            );
        }
    }
    println!("wrote {}", out_dir.display());
    Ok(())
}
