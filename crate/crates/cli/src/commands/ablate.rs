use std::collections::BTreeSet;
use std::path::PathBuf;

use clap::Args;
use honam::data::{RawColumn, RawTable, MISSING_CATEGORY};
use honam::metrics::disparate_impact;
use honam::model::{HonamModel, Task};
use honam::train::evaluate;

use super::{csv_bytes, fmt_opt};
use crate::context::{feature_index, load_model, load_partition, Partition, RunContext};
use crate::error::CliError;
use crate::manifest::{create_dir, RunManifest};
use crate::OutDir;

#[derive(Debug, Args)]
pub struct AblateArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Data used for the before/after report.
    #[arg(long)]
    pub data: PathBuf,
    /// Comma-separated feature names to remove. May be empty.
    #[arg(long, value_delimiter = ',', num_args = 0..)]
    pub features: Vec<String>,
    #[arg(long, value_enum, default_value_t = Partition::Test)]
    pub partition: Partition,
    /// Probability at or above which a row is predicted as class 1.
    #[arg(long, default_value_t = 0.5)]
    pub threshold: f64,
    #[command(flatten)]
    pub out: OutDir,
}

type ReportRow = [String; 6];

fn groups_of(table: &RawTable, column: &str) -> Option<Vec<String>> {
    match table.column(column)? {
        RawColumn::Categorical(v) => Some(
            v.iter()
                .map(|c| c.clone().unwrap_or_else(|| MISSING_CATEGORY.to_string()))
                .collect(),
        ),
        RawColumn::Continuous(_) => None,
    }
}

fn report(
    label: &str,
    model: &HonamModel,
    ctx: &RunContext,
    raw: &RawTable,
    data: &honam::data::Dataset,
    threshold: f64,
) -> Result<Vec<ReportRow>, CliError> {
    let mut rows = Vec::new();
    for (name, v) in evaluate(model, data)? {
        rows.push([label.into(), name, String::new(), String::new(), String::new(), fmt_opt(v)]);
    }
    if model.task() != Task::BinaryClassification {
        return Ok(rows);
    }
    let probs = model.predict(&data.x)?;
    let names = ctx.schema.feature_names();
    for c in ctx.schema.protected_features() {
        let Some(groups) = groups_of(raw, names[c]) else { continue };
        let distinct: BTreeSet<&String> = groups.iter().collect();
        let distinct: Vec<&String> = distinct.into_iter().collect();
        for (a, ga) in distinct.iter().enumerate() {
            for gb in &distinct[a + 1..] {
                let di = disparate_impact(&probs, &groups, ga, gb, threshold, ctx.schema.favorable_class);
                rows.push([
                    label.into(),
                    "disparate_impact".into(),
                    names[c].to_string(),
                    ga.to_string(),
                    gb.to_string(),
                    fmt_opt(di),
                ]);
            }
        }
    }
    Ok(rows)
}

pub fn run(args: AblateArgs) -> Result<(), CliError> {
    if !(0.0..=1.0).contains(&args.threshold) {
        return Err(CliError::Usage("--threshold must lie in [0, 1]".into()));
    }
    let loaded = load_model(&args.model)?;
    let ctx = &loaded.context;
    let features: Vec<String> = args.features.iter().filter(|f| !f.is_empty()).cloned().collect();
    let indices = features
        .iter()
        .map(|f| feature_index(&ctx.schema, f))
        .collect::<Result<Vec<_>, _>>()?;
    let (raw, data) = load_partition(ctx, &args.data, args.partition)?;

    let mut ablated = loaded.model.clone();
    ablated.ablate_features(indices)?;
    let mut rows = report("biased", &loaded.model, ctx, &raw, &data, args.threshold)?;
    rows.extend(report("unbiased", &ablated, ctx, &raw, &data, args.threshold)?);

    let out_dir = args.out.out.clone();
    create_dir(&out_dir)?;
    let mut manifest = RunManifest::new("ablate", &out_dir);
    manifest.input(&args.model)?;
    manifest.input(&args.data)?;
    manifest.seeds = vec![ctx.split_seed];
    manifest.write(&out_dir, "model_ablated.honam", &ablated.to_bytes()?)?;
    manifest.write(
        &out_dir,
        "fairness.csv",
        &csv_bytes(&["model", "metric", "feature", "group_a", "group_b", "value"], rows.iter()),
    )?;
    manifest.finish(&out_dir)?;

    println!("ablated: {}", if features.is_empty() { "(none)".into() } else { features.join(", ") });
    for r in &rows {
        let groups = if r[2].is_empty() { String::new() } else { format!(" {}: {} / {}", r[2], r[3], r[4]) };
        println!("{:<9} {}{groups} = {}", r[0], r[1], if r[5].is_empty() { "undefined" } else { &r[5] });
    }
    Ok(())
}
