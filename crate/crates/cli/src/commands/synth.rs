use clap::{Args, ValueEnum};
use honam::data::{
    gen_interaction_regression, gen_synth_biased, gen_synth_classification, gen_synth_regression,
};

use crate::error::CliError;
use crate::manifest::{create_dir, RunManifest};
use crate::OutDir;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SynthKind {
    /// 10 000 rows: 100 points with 100 Bernoulli labels each.
    Classification,
    /// 100 rows of independent uniform x and y.
    Regression,
    /// Recidivism-style data with a planted race bias.
    Biased,
    /// `y = x1·x2 + 0.5·x3` with Gaussian inputs.
    Interaction,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(value_enum)]
    pub kind: SynthKind,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Row count for `biased` (default 10000) and `interaction` (default 5000).
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub rows: Option<u64>,
    #[command(flatten)]
    pub out: OutDir,
}

pub fn run(args: SynthArgs) -> Result<(), CliError> {
    let rows = args.rows.map(|r| r as usize);
    if rows.is_some() && matches!(args.kind, SynthKind::Classification | SynthKind::Regression) {
        return Err(CliError::Usage("--rows applies only to `biased` and `interaction`".into()));
    }
    let (table, schema) = match args.kind {
        SynthKind::Classification => {
            let s = gen_synth_classification(args.seed);
            (s.table, s.schema)
        }
        SynthKind::Regression => gen_synth_regression(args.seed),
        SynthKind::Biased => gen_synth_biased(rows.unwrap_or(10_000), args.seed),
        SynthKind::Interaction => gen_interaction_regression(rows.unwrap_or(5_000), args.seed),
    };
    let mut csv = Vec::new();
    table.write_csv(&mut csv)?;
    let mut schema_json = schema.to_json();
    schema_json.push('\n');

    let out_dir = args.out.out.clone();
    create_dir(&out_dir)?;
    let mut manifest = RunManifest::new("synth", &out_dir);
    manifest.seeds = vec![args.seed];
    manifest.write(&out_dir, "data.csv", &csv)?;
    manifest.write(&out_dir, "schema.json", schema_json.as_bytes())?;
    manifest.finish(&out_dir)?;
    println!("wrote {} rows to {}", table.n_rows(), out_dir.join("data.csv").display());
    Ok(())
}
