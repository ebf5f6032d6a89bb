use std::path::PathBuf;

use clap::{Args, ValueEnum};
use honam::autodiff::sigmoid;
use honam::data::{load_csv, ColumnTransform, Preprocessor};
use honam::model::Task;
use honam::Matrix;

use super::{csv_bytes, slug};
use crate::context::{feature_index, load_model, LoadedModel};
use crate::error::CliError;
use crate::manifest::{create_dir, RunManifest};
use crate::svg;
use crate::OutDir;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Svg,
}

#[derive(Debug, Args)]
#[command(group(clap::ArgGroup::new("target").required(true).args(["feature", "pair", "row"])))]
pub struct InterpretArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Order-1 shape curve of one feature.
    #[arg(long)]
    pub feature: Option<String>,
    /// Order-2 heat map of two features, as `A,B`.
    #[arg(long, value_name = "A,B")]
    pub pair: Option<String>,
    /// Local breakdown of one data row (0-based, after rows with a missing target are dropped).
    #[arg(long, requires = "data")]
    pub row: Option<usize>,
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Grid points per continuous feature.
    #[arg(long, default_value_t = 100, value_parser = clap::value_parser!(u64).range(1..))]
    pub grid: u64,
    /// Highest order listed term by term in a row report; higher orders are aggregated.
    #[arg(long, default_value_t = 3)]
    pub max_order: usize,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    #[command(flatten)]
    pub out: OutDir,
}

/// Grid of one feature: transformed values with their raw labels.
struct Axis {
    values: Vec<f64>,
    raw: Vec<String>,
    density: Vec<f64>,
}

fn axis(pre: &Preprocessor, c: usize, n: usize) -> Axis {
    let refs = pre.reference_scores(c);
    let (values, raw): (Vec<f64>, Vec<String>) = match &pre.columns[c] {
        ColumnTransform::Categorical { codes, .. } => codes
            .iter()
            .map(|(name, &code)| (pre.transform_value(c, code as f64), name.clone()))
            .unzip(),
        ColumnTransform::Continuous { .. } => {
            let lo = refs.first().copied().unwrap_or(0.0);
            let hi = refs.last().copied().unwrap_or(0.0);
            (0..n)
                .map(|i| {
                    let z = if n == 1 { (lo + hi) / 2.0 } else { lo + (hi - lo) * i as f64 / (n - 1) as f64 };
                    (z, pre.inverse_value(c, z).to_string())
                })
                .unzip()
        }
    };
    let mut density = vec![0.0; values.len()];
    if !refs.is_empty() && !values.is_empty() {
        for r in &refs {
            let nearest = values
                .iter()
                .enumerate()
                .min_by(|a, b| (a.1 - r).abs().total_cmp(&(b.1 - r).abs()))
                .map(|(i, _)| i)
                .expect("nonempty grid");
            density[nearest] += 1.0;
        }
        density.iter_mut().for_each(|d| *d /= refs.len() as f64);
    }
    Axis { values, raw, density }
}

pub fn run(args: InterpretArgs) -> Result<(), CliError> {
    let loaded = load_model(&args.model)?;
    let out_dir = args.out.out.clone();
    let mut manifest = RunManifest::new("interpret", &out_dir);
    manifest.input(&args.model)?;
    let ext = match args.format {
        Format::Csv => "csv",
        Format::Svg => "svg",
    };
    let (name, bytes) = if let Some(f) = &args.feature {
        (format!("shape_{}.{ext}", slug(f)), shape(&loaded, f, &args)?)
    } else if let Some(p) = &args.pair {
        let Some((a, b)) = p.split_once(',') else {
            return Err(CliError::Usage(format!("--pair expects `A,B`, got `{p}`")));
        };
        (format!("pair_{}_{}.{ext}", slug(a), slug(b)), pair(&loaded, a, b, &args)?)
    } else {
        let row = args.row.expect("clap enforces one target");
        let data = args.data.as_ref().expect("clap enforces --data");
        manifest.input(data)?;
        (format!("row_{row}.{ext}"), local(&loaded, data, row, &args)?)
    };
    create_dir(&out_dir)?;
    let path = manifest.write(&out_dir, &name, &bytes)?;
    manifest.finish(&out_dir)?;
    println!("wrote {}", path.display());
    Ok(())
}

fn shape(loaded: &LoadedModel, feature: &str, args: &InterpretArgs) -> Result<Vec<u8>, CliError> {
    let c = feature_index(&loaded.context.schema, feature)?;
    let ax = axis(&loaded.context.preprocessor, c, args.grid as usize);
    let curve = loaded.model.global_shape(c, &ax.values)?;
    Ok(match args.format {
        Format::Csv => csv_bytes(
            &["value", "raw_value", "contribution", "density"],
            curve
                .iter()
                .zip(&ax.raw)
                .zip(&ax.density)
                .map(|(((v, s), r), d)| [v.to_string(), r.clone(), s.to_string(), d.to_string()]),
        ),
        Format::Svg => svg::shape_plot(&format!("shape of {feature}"), feature, &curve, &ax.density).into_bytes(),
    })
}

fn pair(loaded: &LoadedModel, a: &str, b: &str, args: &InterpretArgs) -> Result<Vec<u8>, CliError> {
    let (i, j) = (feature_index(&loaded.context.schema, a)?, feature_index(&loaded.context.schema, b)?);
    if i == j {
        return Err(CliError::Usage("--pair needs two different features".into()));
    }
    let n = args.grid as usize;
    let (ai, aj) = (
        axis(&loaded.context.preprocessor, i, n),
        axis(&loaded.context.preprocessor, j, n),
    );
    let grid: Matrix = loaded.model.global_pair_shape((i, j), &ai.values, &aj.values)?;
    Ok(match args.format {
        Format::Csv => {
            let mut rows = Vec::with_capacity(ai.values.len() * aj.values.len());
            for u in 0..ai.values.len() {
                for v in 0..aj.values.len() {
                    rows.push([
                        ai.values[u].to_string(),
                        ai.raw[u].clone(),
                        aj.values[v].to_string(),
                        aj.raw[v].clone(),
                        grid.get(u, v).to_string(),
                    ]);
                }
            }
            csv_bytes(&["value_a", "raw_value_a", "value_b", "raw_value_b", "contribution"], rows)
        }
        Format::Svg => {
            let values: Vec<Vec<f64>> = (0..grid.rows()).map(|u| grid.row(u).to_vec()).collect();
            svg::heatmap(&format!("{a} x {b}"), a, b, &ai.values, &aj.values, &values).into_bytes()
        }
    })
}

fn local(loaded: &LoadedModel, data: &std::path::Path, row: usize, args: &InterpretArgs) -> Result<Vec<u8>, CliError> {
    let ctx = &loaded.context;
    let table = load_csv(data, &ctx.schema)?;
    if row >= table.n_rows() {
        return Err(CliError::Usage(format!("--row {row} is out of range for {} rows", table.n_rows())));
    }
    let x = ctx.preprocessor.transform(&table.select_rows(&[row]));
    let model = &loaded.model;
    let report = model.local_contributions(x.row(0), args.max_order.min(model.order()))?;
    let names = ctx.schema.feature_names();
    let mut rows: Vec<[String; 4]> = Vec::new();
    rows.push(["bias".into(), "0".into(), String::new(), report.bias.to_string()]);
    for term in &report.terms {
        let label: Vec<&str> = term.features.iter().map(|&i| names[i]).collect();
        rows.push([
            "term".into(),
            term.order().to_string(),
            label.join(" x "),
            term.value.to_string(),
        ]);
    }
    for &(p, v) in &report.aggregates {
        rows.push(["aggregate".into(), p.to_string(), "*".into(), v.to_string()]);
    }
    rows.push(["total".into(), String::new(), String::new(), report.total.to_string()]);
    let prediction = match model.task() {
        Task::BinaryClassification => sigmoid(report.total),
        Task::Regression => ctx.preprocessor.inverse_target(report.total),
    };
    rows.push(["prediction".into(), String::new(), String::new(), prediction.to_string()]);
    Ok(match args.format {
        Format::Csv => csv_bytes(&["kind", "order", "features", "value"], rows),
        Format::Svg => {
            let bars: Vec<(String, f64)> = rows
                .iter()
                .filter(|r| r[0] != "prediction")
                .map(|r| {
                    let label = match r[0].as_str() {
                        "term" => r[2].clone(),
                        "aggregate" => format!("order {} (all)", r[1]),
                        other => other.to_string(),
                    };
                    (label, r[3].parse().expect("formatted float"))
                })
                .collect();
            svg::bar_chart(&format!("row {row}: contributions"), &bars).into_bytes()
        }
    })
}
