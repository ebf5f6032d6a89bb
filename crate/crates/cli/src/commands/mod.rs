pub mod ablate;
pub mod bench;
pub mod eval;
pub mod interpret;
pub mod synth;
pub mod train;

use std::collections::BTreeMap;

/// Renders rows as CSV bytes.
pub fn csv_bytes<I, R>(header: &[&str], rows: I) -> Vec<u8>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator,
    R::Item: AsRef<[u8]>,
{
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("write to memory");
    for row in rows {
        w.write_record(row).expect("write to memory");
    }
    w.into_inner().expect("flush to memory")
}

pub fn fmt_opt(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

/// `metric,value` CSV of one metric map.
pub fn metrics_csv(metrics: &BTreeMap<String, Option<f64>>) -> Vec<u8> {
    csv_bytes(
        &["metric", "value"],
        metrics.iter().map(|(k, v)| [k.clone(), fmt_opt(*v)]),
    )
}

pub fn print_metrics(metrics: &BTreeMap<String, Option<f64>>) {
    for (k, v) in metrics {
        match v {
            Some(v) => println!("{k:<10} {v:.6}"),
            None => println!("{k:<10} undefined"),
        }
    }
}

/// File-name-safe version of a column name.
pub fn slug(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' { c } else { '_' })
        .collect()
}
