//! Evaluation metrics. Undefined scores (constant targets, a single class,
//! empty groups) come back as `None`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::autodiff::softplus;

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn check_lengths(y: &[f64], y_hat: &[f64]) {
    assert_eq!(y.len(), y_hat.len(), "targets and predictions differ in length");
}

/// `1 − Σ(y−ŷ)² / Σ(y−ȳ)²`.
pub fn r_squared(y: &[f64], y_hat: &[f64]) -> Option<f64> {
    check_lengths(y, y_hat);
    if y.len() < 2 {
        return None;
    }
    let m = mean(y);
    let ss_tot: f64 = y.iter().map(|v| (v - m).powi(2)).sum();
    if ss_tot == 0.0 {
        return None;
    }
    let ss_res: f64 = y.iter().zip(y_hat).map(|(a, b)| (a - b).powi(2)).sum();
    Some(1.0 - ss_res / ss_tot)
}

fn adjust(score: f64, n: usize, p: usize) -> Option<f64> {
    let dof = n as f64 - p as f64 - 1.0;
    (dof > 0.0).then(|| 1.0 - (1.0 - score) * (n as f64 - 1.0) / dof)
}

/// `1 − (1 − R²)(n − 1)/(n − p − 1)` for `p` predictors.
pub fn adjusted_r_squared(y: &[f64], y_hat: &[f64], p: usize) -> Option<f64> {
    adjust(r_squared(y, y_hat)?, y.len(), p)
}

/// `1 − Σ|y−ŷ| / Σ|y−ȳ|`. Higher is better; a mean predictor scores 0.
pub fn r_absolute(y: &[f64], y_hat: &[f64]) -> Option<f64> {
    check_lengths(y, y_hat);
    if y.len() < 2 {
        return None;
    }
    let m = mean(y);
    let tot: f64 = y.iter().map(|v| (v - m).abs()).sum();
    if tot == 0.0 {
        return None;
    }
    let res: f64 = y.iter().zip(y_hat).map(|(a, b)| (a - b).abs()).sum();
    Some(1.0 - res / tot)
}

pub fn adjusted_r_absolute(y: &[f64], y_hat: &[f64], p: usize) -> Option<f64> {
    adjust(r_absolute(y, y_hat)?, y.len(), p)
}

pub fn rmse(y: &[f64], y_hat: &[f64]) -> f64 {
    check_lengths(y, y_hat);
    (y.iter().zip(y_hat).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / y.len() as f64).sqrt()
}

fn is_positive(label: f64) -> bool {
    label > 0.5
}

/// Area under the ROC curve via midranks: ties between a positive and a
/// negative count one half.
pub fn auroc(labels: &[f64], scores: &[f64]) -> Option<f64> {
    check_lengths(labels, scores);
    let n_pos = labels.iter().filter(|&&l| is_positive(l)).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        log::warn!("AUROC is undefined with a single class present");
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut pos_rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let midrank = (i + j) as f64 / 2.0 + 1.0;
        pos_rank_sum += midrank * order[i..=j].iter().filter(|&&r| is_positive(labels[r])).count() as f64;
        i = j + 1;
    }
    let (p, n) = (n_pos as f64, n_neg as f64);
    Some((pos_rank_sum - p * (p + 1.0) / 2.0) / (p * n))
}

/// Average precision: `Σ (R_i − R_{i−1}) · P_i` over distinct score
/// thresholds taken from high to low.
pub fn auprc(labels: &[f64], scores: &[f64]) -> Option<f64> {
    check_lengths(labels, scores);
    let n_pos = labels.iter().filter(|&&l| is_positive(l)).count();
    if n_pos == 0 {
        log::warn!("AUPRC is undefined without positive labels");
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let (mut tp, mut seen, mut prev_recall, mut ap) = (0usize, 0usize, 0.0, 0.0);
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        tp += order[i..=j].iter().filter(|&&r| is_positive(labels[r])).count();
        seen += j - i + 1;
        let recall = tp as f64 / n_pos as f64;
        ap += (recall - prev_recall) * (tp as f64 / seen as f64);
        prev_recall = recall;
        i = j + 1;
    }
    Some(ap)
}

/// Mean of `softplus(z) − y·z`, the logistic loss on logits.
pub fn log_loss(labels: &[f64], logits: &[f64]) -> f64 {
    check_lengths(labels, logits);
    labels.iter().zip(logits).map(|(&y, &z)| softplus(z) - y * z).sum::<f64>() / labels.len() as f64
}

pub fn mse(y: &[f64], y_hat: &[f64]) -> f64 {
    check_lengths(y, y_hat);
    y.iter().zip(y_hat).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / y.len() as f64
}

/// Fraction of favorable predictions per group and their ratio.
///
/// A prediction is favorable when its predicted class equals
/// `favorable_class`, with class 1 meaning `prob >= threshold`. Returns
/// `min(r_a/r_b, r_b/r_a)`, or `None` when a group is empty or both rates
/// are zero.
pub fn disparate_impact<S: AsRef<str>>(
    probs: &[f64],
    groups: &[S],
    group_a: &str,
    group_b: &str,
    threshold: f64,
    favorable_class: u8,
) -> Option<f64> {
    assert_eq!(probs.len(), groups.len(), "predictions and groups differ in length");
    let ra = favorable_rate(probs, groups, group_a, threshold, favorable_class)?;
    let rb = favorable_rate(probs, groups, group_b, threshold, favorable_class)?;
    ratio(ra, rb)
}

pub fn favorable_rate<S: AsRef<str>>(
    probs: &[f64],
    groups: &[S],
    group: &str,
    threshold: f64,
    favorable_class: u8,
) -> Option<f64> {
    let (mut total, mut favorable) = (0usize, 0usize);
    for (p, g) in probs.iter().zip(groups) {
        if g.as_ref() == group {
            total += 1;
            let class = u8::from(*p >= threshold);
            if class == favorable_class {
                favorable += 1;
            }
        }
    }
    (total > 0).then(|| favorable as f64 / total as f64)
}

fn ratio(ra: f64, rb: f64) -> Option<f64> {
    if ra == 0.0 && rb == 0.0 {
        return None;
    }
    if ra == 0.0 || rb == 0.0 {
        return Some(0.0);
    }
    Some((ra / rb).min(rb / ra))
}

/// Mean and population standard deviation of one metric across seeds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub name: String,
    pub mean: f64,
    /// Present only with two or more seeds.
    pub std: Option<f64>,
    pub n_seeds: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub metrics: Vec<MetricSummary>,
}

impl MetricReport {
    /// Aggregates per-seed metric maps. Undefined values are skipped.
    pub fn from_runs(runs: &[BTreeMap<String, Option<f64>>]) -> Self {
        let mut names: Vec<&String> = runs.iter().flat_map(|r| r.keys()).collect();
        names.sort();
        names.dedup();
        let metrics = names
            .into_iter()
            .map(|name| {
                let values: Vec<f64> = runs.iter().filter_map(|r| r.get(name).copied().flatten()).collect();
                let n = values.len();
                let mean = if n == 0 { f64::NAN } else { mean(&values) };
                let std = (n >= 2).then(|| (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64).sqrt());
                MetricSummary {
                    name: name.clone(),
                    mean,
                    std,
                    n_seeds: n,
                }
            })
            .collect();
        Self { metrics }
    }

    pub fn get(&self, name: &str) -> Option<&MetricSummary> {
        self.metrics.iter().find(|m| m.name == name)
    }

    /// CSV with columns `metric,mean,std,n_seeds`; `std` is empty for one seed.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("metric,mean,std,n_seeds\n");
        for m in &self.metrics {
            let std = m.std.map(|s| s.to_string()).unwrap_or_default();
            out.push_str(&format!("{},{},{},{}\n", m.name, m.mean, std, m.n_seeds));
        }
        out
    }
}
