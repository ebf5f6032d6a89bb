use clap::Args;
use honam::bench::{run_bench, BenchPlan, DEFAULT_ENUMERATION_CAP};
use honam::kernels::KernelKind;

use crate::error::CliError;
use crate::manifest::{create_dir, RunManifest};
use crate::OutDir;

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long, value_delimiter = ',', default_value = "recursion,enumeration")]
    pub kernels: Vec<KernelKind>,
    #[arg(long, value_delimiter = ',', default_value = "10,20,50", value_parser = clap::value_parser!(u64).range(1..))]
    pub m: Vec<u64>,
    #[arg(long, value_delimiter = ',', default_value = "32", value_parser = clap::value_parser!(u64).range(1..))]
    pub k: Vec<u64>,
    #[arg(long, value_delimiter = ',', default_value = "2,3,4", value_parser = clap::value_parser!(u64).range(1..))]
    pub t: Vec<u64>,
    /// Timed calls per configuration.
    #[arg(long, default_value_t = 100, value_parser = clap::value_parser!(u64).range(1..))]
    pub calls: u64,
    /// Enumeration configurations above this many multiplies per call are skipped.
    #[arg(long, default_value_t = DEFAULT_ENUMERATION_CAP)]
    pub cap: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub out: OutDir,
}

pub fn run(args: BenchArgs) -> Result<(), CliError> {
    let sizes = |v: &[u64]| v.iter().map(|&x| x as usize).collect::<Vec<_>>();
    let plan = BenchPlan {
        kernels: args.kernels.clone(),
        m: sizes(&args.m),
        k: sizes(&args.k),
        t: sizes(&args.t),
        calls: args.calls as usize,
        enumeration_cap: args.cap,
        seed: args.seed,
    };
    let result = run_bench(&plan).map_err(CliError::Numeric)?;
    for note in &result.notes {
        log::warn!("{note}");
    }
    let mut csv = Vec::new();
    result.write_csv(&mut csv).expect("write to memory");

    let out_dir = args.out.out.clone();
    create_dir(&out_dir)?;
    let mut manifest = RunManifest::new("bench", &out_dir);
    manifest.seeds = vec![args.seed];
    manifest.write(&out_dir, "bench.csv", &csv)?;
    manifest.finish(&out_dir)?;
    print!("{}", String::from_utf8(csv).expect("ascii csv"));
    Ok(())
}
