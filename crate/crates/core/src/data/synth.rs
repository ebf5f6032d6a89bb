//! Seeded synthetic datasets.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Bernoulli, Distribution, StandardNormal};

use super::{ColumnSpec, RawColumn, RawTable, Schema};
use crate::model::Task;

pub struct SynthClassification {
    pub table: RawTable,
    pub schema: Schema,
    /// `(x, p)` for each of the 100 sampled points.
    pub points: Vec<(f64, f64)>,
}

fn continuous_table(names: &[&str], columns: Vec<Vec<f64>>, target_name: &str, target: Vec<f64>) -> RawTable {
    RawTable {
        names: names.iter().map(|s| s.to_string()).collect(),
        columns: columns
            .into_iter()
            .map(|c| RawColumn::Continuous(c.into_iter().map(Some).collect()))
            .collect(),
        target_name: target_name.to_string(),
        target,
        rejected_rows: 0,
    }
}

fn continuous_schema(task: Task, names: &[&str], target: &str) -> Schema {
    let cols = names
        .iter()
        .map(|n| (n.to_string(), ColumnSpec::continuous()))
        .chain([(target.to_string(), ColumnSpec::target())]);
    Schema::new(task, cols).expect("static schema is valid")
}

/// 100 points `x ~ U[-1, 1]`, each with `p ~ U[0.1, 0.9]` and 100 Bernoulli(p)
/// labels: 10 000 rows.
pub fn gen_synth_classification(seed: u64) -> SynthClassification {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let points: Vec<(f64, f64)> = (0..100)
        .map(|_| (rng.random_range(-1.0..=1.0), rng.random_range(0.1..=0.9)))
        .collect();
    let mut xs = Vec::with_capacity(10_000);
    let mut ys = Vec::with_capacity(10_000);
    for &(x, p) in &points {
        let coin = Bernoulli::new(p).expect("p in range");
        for _ in 0..100 {
            xs.push(x);
            ys.push(if coin.sample(&mut rng) { 1.0 } else { 0.0 });
        }
    }
    SynthClassification {
        table: continuous_table(&["x"], vec![xs], "label", ys),
        schema: continuous_schema(Task::BinaryClassification, &["x"], "label"),
        points,
    }
}

/// 100 rows with `x, y ~ U[-1, 1]` drawn independently.
pub fn gen_synth_regression(seed: u64) -> (RawTable, Schema) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (xs, ys): (Vec<f64>, Vec<f64>) = (0..100)
        .map(|_| (rng.random_range(-1.0..=1.0), rng.random_range(-1.0..=1.0)))
        .unzip();
    (
        continuous_table(&["x"], vec![xs], "y", ys),
        continuous_schema(Task::Regression, &["x"], "y"),
    )
}

/// `x ~ N(0, I_3)`, `y = x1·x2 + 0.5·x3`.
pub fn gen_interaction_regression(n: usize, seed: u64) -> (RawTable, Schema) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cols: Vec<Vec<f64>> = (0..3).map(|_| Vec::with_capacity(n)).collect();
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let x: [f64; 3] = [
            StandardNormal.sample(&mut rng),
            StandardNormal.sample(&mut rng),
            StandardNormal.sample(&mut rng),
        ];
        for (c, v) in cols.iter_mut().zip(x) {
            c.push(v);
        }
        y.push(x[0] * x[1] + 0.5 * x[2]);
    }
    (
        continuous_table(&["x1", "x2", "x3"], cols, "y", y),
        continuous_schema(Task::Regression, &["x1", "x2", "x3"], "y"),
    )
}

pub const BIASED_RACES: [&str; 3] = ["African-American", "Caucasian", "Hispanic"];

/// Recidivism-style classification data with bias planted in the protected
/// `race` column.
///
/// Features: `age`, `priors_count`, `sex` (protected), `race` (protected).
/// The label logit is `0.35·priors − 0.04·(age − 35) − 0.3 + race shift`,
/// with shifts `+1.5`, `−0.5` and `+0.8` for the three groups. Race is drawn
/// independently of the other features.
pub fn gen_synth_biased(n: usize, seed: u64) -> (RawTable, Schema) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut age = Vec::with_capacity(n);
    let mut priors = Vec::with_capacity(n);
    let mut sex = Vec::with_capacity(n);
    let mut race = Vec::with_capacity(n);
    let mut label = Vec::with_capacity(n);
    for _ in 0..n {
        let a: f64 = rng.random_range(18.0..70.0_f64).floor();
        let p: f64 = {
            let lambda_draw: f64 = rng.random_range(0.0..1.0);
            (-3.0 * (1.0 - lambda_draw).ln()).floor().min(30.0)
        };
        let s = if rng.random_bool(0.8) { "Male" } else { "Female" };
        let r_idx = match rng.random_range(0.0..1.0) {
            u if u < 0.5 => 0,
            u if u < 0.85 => 1,
            _ => 2,
        };
        let shift = [1.5, -0.5, 0.8][r_idx];
        let logit = 0.35 * p - 0.04 * (a - 35.0) - 0.3 + shift;
        let prob = 1.0 / (1.0 + (-logit).exp());
        label.push(if rng.random_bool(prob) { 1.0 } else { 0.0 });
        age.push(Some(a));
        priors.push(Some(p));
        sex.push(Some(s.to_string()));
        race.push(Some(BIASED_RACES[r_idx].to_string()));
    }
    let table = RawTable {
        names: vec!["age".into(), "priors_count".into(), "sex".into(), "race".into()],
        columns: vec![
            RawColumn::Continuous(age),
            RawColumn::Continuous(priors),
            RawColumn::Categorical(sex),
            RawColumn::Categorical(race),
        ],
        target_name: "two_year_recid".into(),
        target: label,
        rejected_rows: 0,
    };
    let schema = Schema::new(
        Task::BinaryClassification,
        [
            ("age".to_string(), ColumnSpec::continuous()),
            ("priors_count".to_string(), ColumnSpec::continuous()),
            ("sex".to_string(), ColumnSpec::categorical(true)),
            ("race".to_string(), ColumnSpec::categorical(true)),
            ("two_year_recid".to_string(), ColumnSpec::target()),
        ],
    )
    .expect("static schema is valid");
    (table, schema)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn classification_shape_and_rates() {
        let data = gen_synth_classification(0);
        assert_eq!(data.table.n_rows(), 10_000);
        assert_eq!(data.points.len(), 100);
        let RawColumn::Continuous(xs) = &data.table.columns[0] else { panic!() };
        assert!(xs.iter().flatten().all(|x| (-1.0..=1.0).contains(x)));
        assert!(data.table.target.iter().all(|&y| y == 0.0 || y == 1.0));
        let mut distinct: Vec<f64> = data.points.iter().map(|p| p.0).collect();
        distinct.sort_by(f64::total_cmp);
        distinct.dedup();
        assert_eq!(distinct.len(), 100);
        for (i, &(_, p)) in data.points.iter().enumerate() {
            assert!((0.1..=0.9).contains(&p));
            let rate = data.table.target[i * 100..(i + 1) * 100].iter().sum::<f64>() / 100.0;
            let sigma = (p * (1.0 - p) / 100.0).sqrt();
            assert!((rate - p).abs() <= 4.0 * sigma, "point {i}: rate {rate} vs p {p}");
        }
    }

    #[test]
    fn regression_shape_and_determinism() {
        let (t, s) = gen_synth_regression(5);
        assert_eq!(t.n_rows(), 100);
        assert_eq!(s.task, Task::Regression);
        let RawColumn::Continuous(xs) = &t.columns[0] else { panic!() };
        assert!(xs.iter().flatten().chain(&t.target).all(|v| (-1.0..=1.0).contains(v)));
        assert_eq!(gen_synth_regression(5).0, t);
        assert_ne!(gen_synth_regression(6).0, t);
    }

    #[test]
    fn biased_data_plants_a_race_gap() {
        let (t, s) = gen_synth_biased(6000, 1);
        assert_eq!(s.protected_features(), [2, 3]);
        let RawColumn::Categorical(race) = &t.columns[3] else { panic!() };
        let rate = |g: &str| {
            let rows: Vec<usize> = (0..t.n_rows()).filter(|&r| race[r].as_deref() == Some(g)).collect();
            rows.iter().map(|&r| t.target[r]).sum::<f64>() / rows.len() as f64
        };
        assert!(rate(BIASED_RACES[0]) > rate(BIASED_RACES[1]) + 0.2);
    }
}
