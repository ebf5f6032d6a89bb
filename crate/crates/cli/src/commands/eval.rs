use std::path::PathBuf;

use clap::Args;
use honam::data::Schema;
use honam::train::evaluate;

use super::{metrics_csv, print_metrics};
use crate::context::{check_schema, load_model, load_partition, Partition};
use crate::error::CliError;
use crate::manifest::{create_dir, RunManifest};
use crate::OutDir;

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Model file written by `train` or `ablate`.
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Schema of the data; must match the one the model was trained with.
    #[arg(long)]
    pub schema: Option<PathBuf>,
    /// Rows to evaluate, using the model's stored split seed.
    #[arg(long, value_enum, default_value_t = Partition::Test)]
    pub partition: Partition,
    #[command(flatten)]
    pub out: OutDir,
}

pub fn run(args: EvalArgs) -> Result<(), CliError> {
    let loaded = load_model(&args.model)?;
    if let Some(path) = &args.schema {
        check_schema(&loaded.context.schema, &Schema::load(path)?)?;
    }
    let (_, data) = load_partition(&loaded.context, &args.data, args.partition)?;
    let metrics = evaluate(&loaded.model, &data)?;
    if metrics.values().flatten().any(|v| !v.is_finite()) {
        return Err(CliError::Numeric("evaluation produced non-finite metrics".into()));
    }

    let out_dir = args.out.out.clone();
    create_dir(&out_dir)?;
    let mut manifest = RunManifest::new("eval", &out_dir);
    manifest.input(&args.model)?;
    manifest.input(&args.data)?;
    if let Some(s) = &args.schema {
        manifest.input(s)?;
    }
    manifest.seeds = vec![loaded.context.split_seed];
    manifest.write(&out_dir, "metrics.csv", &metrics_csv(&metrics))?;
    manifest.finish(&out_dir)?;

    println!("{} rows ({}), task {}", data.len(), args.partition.as_str(), loaded.model.task());
    print_metrics(&metrics);
    Ok(())
}
