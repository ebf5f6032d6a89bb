//! Encode → standard-scale → quantile-transform, fit on training rows only.

use std::collections::BTreeSet;

use indexmap::IndexMap;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal as StdNormal};

use super::{RawColumn, RawTable, Schema};
use crate::matrix::Matrix;
use crate::model::Task;

pub const MISSING_CATEGORY: &str = "<missing>";
const MAX_QUANTILES: usize = 1000;
const NOISE_SCALE: f64 = 1e-3;
const CLIP: f64 = 1e-7;

/// Maps values to standard-normal scores through empirical quantiles.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuantileMap {
    /// Sorted reference values at evenly spaced probabilities `0..=1`.
    pub quantiles: Vec<f64>,
}

impl QuantileMap {
    /// Quantiles of `values` at `min(1000, n)` evenly spaced levels, using
    /// linear interpolation between order statistics.
    pub fn fit(values: &[f64]) -> Self {
        let mut sorted: Vec<f64> = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len();
        let nq = n.min(MAX_QUANTILES);
        let quantiles = (0..nq)
            .map(|j| {
                if nq == 1 {
                    return sorted[0];
                }
                let pos = j as f64 / (nq - 1) as f64 * (n - 1) as f64;
                let lo = pos.floor() as usize;
                let hi = (lo + 1).min(n - 1);
                sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
            })
            .collect();
        Self { quantiles }
    }

    fn level(&self, j: usize) -> f64 {
        j as f64 / (self.quantiles.len() - 1) as f64
    }

    /// Empirical CDF value in `[0, 1]`. Runs of tied quantiles map to the
    /// midpoint of their probability range.
    pub fn probability(&self, x: f64) -> f64 {
        let q = &self.quantiles;
        let n = q.len();
        if n < 2 || x <= q[0] {
            return 0.0;
        }
        if x >= q[n - 1] {
            return 1.0;
        }
        // last index with q <= x, interpolate upward
        let j = q.partition_point(|&v| v <= x) - 1;
        let up = self.level(j) + (x - q[j]) / (q[j + 1] - q[j]) * (self.level(j + 1) - self.level(j));
        // first index with q >= x, interpolate downward
        let l = q.partition_point(|&v| v < x);
        let down = self.level(l - 1) + (x - q[l - 1]) / (q[l] - q[l - 1]) * (self.level(l) - self.level(l - 1));
        0.5 * (up + down)
    }

    pub fn is_degenerate(&self) -> bool {
        self.quantiles.first() == self.quantiles.last()
    }

    pub fn transform(&self, x: f64) -> f64 {
        if self.is_degenerate() {
            return 0.0;
        }
        let p = self.probability(x).clamp(CLIP, 1.0 - CLIP);
        StdNormal::standard().inverse_cdf(p)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ColumnTransform {
    Continuous {
        mean: f64,
        std: f64,
        quantile: QuantileMap,
    },
    Categorical {
        /// Sorted category → ordinal code. Unseen values get `codes.len()`.
        codes: IndexMap<String, usize>,
        quantile: QuantileMap,
    },
}

impl ColumnTransform {
    fn encode(&self, column: &RawColumn, row: usize) -> f64 {
        match (self, column) {
            (ColumnTransform::Continuous { mean, std, .. }, RawColumn::Continuous(v)) => {
                if *std == 0.0 {
                    0.0
                } else {
                    (v[row].unwrap_or(*mean) - mean) / std
                }
            }
            (ColumnTransform::Categorical { codes, .. }, RawColumn::Categorical(v)) => {
                let key = v[row].as_deref().unwrap_or(MISSING_CATEGORY);
                codes.get(key).copied().unwrap_or(codes.len()) as f64
            }
            _ => panic!("column kind does not match its fitted transform"),
        }
    }

    fn quantile(&self) -> &QuantileMap {
        match self {
            ColumnTransform::Continuous { quantile, .. } | ColumnTransform::Categorical { quantile, .. } => quantile,
        }
    }
}

/// Standardization applied to regression targets.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TargetScaler {
    pub mean: f64,
    pub std: f64,
}

impl TargetScaler {
    pub fn forward(&self, y: f64) -> f64 {
        (y - self.mean) / self.std
    }

    pub fn inverse(&self, z: f64) -> f64 {
        z * self.std + self.mean
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Preprocessor {
    pub names: Vec<String>,
    pub columns: Vec<ColumnTransform>,
    pub target: Option<TargetScaler>,
    pub noise_seed: u64,
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

impl Preprocessor {
    /// Fits on `train`. Quantile maps are fit on values jittered once with
    /// `N(0, 1e-3 · column std)` noise drawn from `noise_seed`.
    pub fn fit(train: &RawTable, schema: &Schema, noise_seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(noise_seed);
        let n = train.n_rows();
        let mut columns = Vec::with_capacity(train.columns.len());
        for (name, raw) in train.names.iter().zip(&train.columns) {
            let partial = match raw {
                RawColumn::Continuous(v) => {
                    let present: Vec<f64> = v.iter().flatten().copied().collect();
                    let (mean, std) = mean_std(&present);
                    if std == 0.0 {
                        log::warn!("column `{name}` has zero variance; it is transformed to a constant 0");
                    }
                    ColumnTransform::Continuous {
                        mean,
                        std,
                        quantile: QuantileMap { quantiles: vec![] },
                    }
                }
                RawColumn::Categorical(v) => {
                    let cats: BTreeSet<&str> = v.iter().map(|c| c.as_deref().unwrap_or(MISSING_CATEGORY)).collect();
                    ColumnTransform::Categorical {
                        codes: cats.into_iter().enumerate().map(|(i, c)| (c.to_string(), i)).collect(),
                        quantile: QuantileMap { quantiles: vec![] },
                    }
                }
            };
            let encoded: Vec<f64> = (0..n).map(|r| partial.encode(raw, r)).collect();
            let (_, spread) = mean_std(&encoded);
            let jittered: Vec<f64> = if spread > 0.0 {
                let noise = Normal::new(0.0, NOISE_SCALE * spread).expect("valid normal");
                encoded.iter().map(|&v| v + noise.sample(&mut rng)).collect()
            } else {
                encoded
            };
            let fitted = if jittered.is_empty() {
                QuantileMap { quantiles: vec![0.0] }
            } else {
                QuantileMap::fit(&jittered)
            };
            columns.push(match partial {
                ColumnTransform::Continuous { mean, std, .. } => ColumnTransform::Continuous {
                    mean,
                    std,
                    quantile: fitted,
                },
                ColumnTransform::Categorical { codes, .. } => ColumnTransform::Categorical { codes, quantile: fitted },
            });
        }
        let target = (schema.task == Task::Regression).then(|| {
            let (mean, std) = mean_std(&train.target);
            TargetScaler {
                mean,
                std: if std > 0.0 { std } else { 1.0 },
            }
        });
        Self {
            names: train.names.clone(),
            columns,
            target,
            noise_seed,
        }
    }

    pub fn n_features(&self) -> usize {
        self.columns.len()
    }

    /// Transformed `n×m` feature matrix. Deterministic; no noise is added.
    pub fn transform(&self, table: &RawTable) -> Matrix {
        assert_eq!(table.columns.len(), self.columns.len(), "table does not match the fitted columns");
        let n = table.n_rows();
        let m = self.columns.len();
        let mut x = Matrix::zeros(n, m);
        for (c, (t, raw)) in self.columns.iter().zip(&table.columns).enumerate() {
            for r in 0..n {
                x.set(r, c, t.quantile().transform(t.encode(raw, r)));
            }
        }
        x
    }

    /// Transform of a single raw value of column `c` (continuous columns).
    pub fn transform_value(&self, c: usize, value: f64) -> f64 {
        match &self.columns[c] {
            ColumnTransform::Continuous { mean, std, quantile } => {
                let scaled = if *std == 0.0 { 0.0 } else { (value - mean) / std };
                quantile.transform(scaled)
            }
            ColumnTransform::Categorical { quantile, .. } => quantile.transform(value),
        }
    }

    /// Maps a transformed value of column `c` back to the raw scale by
    /// inverting the quantile map. Categorical columns return the code.
    pub fn inverse_value(&self, c: usize, z: f64) -> f64 {
        let t = &self.columns[c];
        let q = &t.quantile().quantiles;
        let encoded = if q.len() < 2 {
            q.first().copied().unwrap_or(0.0)
        } else {
            let p = StdNormal::standard().cdf(z);
            let pos = p * (q.len() - 1) as f64;
            let lo = (pos.floor() as usize).min(q.len() - 2);
            q[lo] + (pos - lo as f64) * (q[lo + 1] - q[lo])
        };
        match t {
            ColumnTransform::Continuous { mean, std, .. } => encoded * std + mean,
            ColumnTransform::Categorical { .. } => encoded,
        }
    }

    pub fn transform_target(&self, y: &[f64]) -> Vec<f64> {
        match &self.target {
            Some(s) => y.iter().map(|&v| s.forward(v)).collect(),
            None => y.to_vec(),
        }
    }

    pub fn inverse_target(&self, z: f64) -> f64 {
        self.target.map_or(z, |s| s.inverse(z))
    }

    /// Sorted reference values of column `c` in transformed space.
    pub fn reference_scores(&self, c: usize) -> Vec<f64> {
        let t = &self.columns[c];
        t.quantile().quantiles.iter().map(|&v| t.quantile().transform(v)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{ColumnSpec, Schema};
    use rand::Rng;

    fn table(values: Vec<Option<f64>>, cats: Vec<Option<&str>>) -> (RawTable, Schema) {
        let n = values.len();
        let schema = Schema::new(
            Task::Regression,
            [
                ("a".to_string(), ColumnSpec::continuous()),
                ("c".to_string(), ColumnSpec::categorical(false)),
                ("y".to_string(), ColumnSpec::target()),
            ],
        )
        .unwrap();
        let t = RawTable {
            names: vec!["a".into(), "c".into()],
            columns: vec![
                RawColumn::Continuous(values),
                RawColumn::Categorical(cats.into_iter().map(|c| c.map(String::from)).collect()),
            ],
            target_name: "y".into(),
            target: (0..n).map(|i| i as f64).collect(),
            rejected_rows: 0,
        };
        (t, schema)
    }

    #[test]
    fn quantile_map_interpolates() {
        let q = QuantileMap::fit(&[0.0, 1.0, 2.0, 3.0, 4.0]);
        assert_eq!(q.quantiles, [0.0, 1.0, 2.0, 3.0, 4.0]);
        assert_eq!(q.probability(2.0), 0.5);
        assert_eq!(q.probability(1.5), 0.375);
        assert_eq!(q.probability(-1.0), 0.0);
        assert_eq!(q.probability(9.0), 1.0);
        assert!(q.transform(2.0).abs() < 1e-12);
        let tied = QuantileMap { quantiles: vec![0.0, 1.0, 1.0, 1.0, 2.0] };
        assert_eq!(tied.probability(1.0), 0.5);
    }

    #[test]
    fn constant_column_maps_to_zero() {
        let (t, s) = table(vec![Some(3.0); 20], vec![Some("a"); 20]);
        let p = Preprocessor::fit(&t, &s, 0);
        let x = p.transform(&t);
        assert!(x.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn categories_are_sorted_and_stable() {
        let cats = vec![Some("b"), Some("a"), None, Some("b"), Some("a"), Some("a")];
        let (t, s) = table((0..6).map(|i| Some(i as f64)).collect(), cats);
        let p = Preprocessor::fit(&t, &s, 3);
        let q = Preprocessor::fit(&t, &s, 3);
        assert_eq!(p, q);
        match &p.columns[1] {
            ColumnTransform::Categorical { codes, .. } => {
                assert_eq!(codes.get("<missing>"), Some(&0));
                assert_eq!(codes.get("a"), Some(&1));
                assert_eq!(codes.get("b"), Some(&2));
            }
            _ => panic!(),
        }
        // unseen category maps to the reserved code, which sorts above all others
        let (unseen, _) = table(vec![Some(0.0); 2], vec![Some("zzz"), Some("b")]);
        let x = p.transform(&unseen);
        assert!(x.get(0, 1) >= x.get(1, 1));
    }

    #[test]
    fn missing_continuous_values_take_the_mean() {
        let (t, s) = table(vec![Some(1.0), Some(3.0), None, Some(2.0)], vec![Some("a"); 4]);
        let p = Preprocessor::fit(&t, &s, 0);
        let x = p.transform(&t);
        assert_eq!(x.get(2, 0), p.transform_value(0, 2.0));
    }

    #[test]
    fn transformed_columns_are_near_standard_normal() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let values: Vec<Option<f64>> = (0..5000).map(|_| Some(rng.random::<f64>().powi(3) * 40.0)).collect();
        let (t, s) = table(values, vec![Some("a"); 5000]);
        let p = Preprocessor::fit(&t, &s, 1);
        let col = p.transform(&t).column(0);
        let (mean, std) = mean_std(&col);
        assert!(mean.abs() < 0.05, "{mean}");
        assert!((std - 1.0).abs() < 0.1, "{std}");
    }

    #[test]
    fn median_maps_near_zero_and_transform_is_monotone() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let values: Vec<Option<f64>> = (0..501).map(|_| Some(rng.random_range(-5.0..5.0))).collect();
        let mut sorted: Vec<f64> = values.iter().flatten().copied().collect();
        sorted.sort_by(f64::total_cmp);
        let (t, s) = table(values, vec![Some("a"); 501]);
        let p = Preprocessor::fit(&t, &s, 2);
        assert!(p.transform_value(0, sorted[250]).abs() < 0.05);
        let mut last = f64::NEG_INFINITY;
        for i in 0..400 {
            let v = -6.0 + i as f64 * 0.03;
            let z = p.transform_value(0, v);
            assert!(z >= last);
            last = z;
        }
        assert_eq!(p.transform(&t), p.transform(&t));
    }

    #[test]
    fn inverse_value_undoes_transform() {
        let values: Vec<Option<f64>> = (0..200).map(|i| Some(i as f64 * 0.5)).collect();
        let (t, s) = table(values, vec![Some("a"); 200]);
        let p = Preprocessor::fit(&t, &s, 4);
        for v in [10.0, 33.3, 70.0] {
            let back = p.inverse_value(0, p.transform_value(0, v));
            assert!((back - v).abs() < 1e-6, "{v} -> {back}");
        }
    }

    #[test]
    fn regression_targets_are_standardized() {
        let (t, s) = table(vec![Some(1.0); 5], vec![Some("a"); 5]);
        let p = Preprocessor::fit(&t, &s, 0);
        let z = p.transform_target(&t.target);
        let (m, sd) = mean_std(&z);
        assert!(m.abs() < 1e-12 && (sd - 1.0).abs() < 1e-12);
        assert!((p.inverse_target(z[3]) - 3.0).abs() < 1e-12);
    }
}
