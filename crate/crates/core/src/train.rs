//! Mini-batch training with best-validation selection, plus evaluation.

use std::collections::BTreeMap;
use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::{ParamId, ParamStore, Tape};
use crate::data::Dataset;
use crate::error::ModelError;
use crate::matrix::Matrix;
use crate::metrics;
use crate::model::{HonamConfig, HonamModel, Task};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Adam,
    Sgd,
}

/// Validation score used to pick the returned snapshot. Higher is better.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Selection {
    /// R² for regression, AUROC for classification.
    Auto,
    /// Negative validation loss.
    Loss,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    /// Fixed batch size; `None` uses `n / 100` (at least 1).
    pub batch_size: Option<usize>,
    pub optimizer: OptimizerKind,
    pub seed: u64,
    pub selection: Selection,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Only train the affine head.
    pub freeze_feature_nets: bool,
    pub shuffle: bool,
    /// Leave the model at its best validation epoch instead of the last one.
    pub restore_best: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 1000,
            learning_rate: 0.001,
            batch_size: None,
            optimizer: OptimizerKind::Adam,
            seed: 0,
            selection: Selection::Auto,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            freeze_feature_nets: false,
            shuffle: true,
            restore_best: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if self.epochs == 0 {
            return Err(TrainError::Config("epochs must be positive".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(TrainError::Config("learning rate must be positive".into()));
        }
        if self.batch_size == Some(0) {
            return Err(TrainError::Config("batch size must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || self.epsilon <= 0.0 {
            return Err(TrainError::Config("Adam needs betas in [0, 1) and a positive epsilon".into()));
        }
        Ok(())
    }

    pub fn batch_size_for(&self, n: usize) -> usize {
        self.batch_size.unwrap_or(n / 100).max(1)
    }
}

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training configuration: {0}")]
    Config(String),
    #[error(
        "non-finite loss {loss} at epoch {epoch}, batch {batch} (parameter norm {param_norm:.4e}, gradient norm {grad_norm:.4e})"
    )]
    NonFinite {
        epoch: usize,
        batch: usize,
        loss: f64,
        param_norm: f64,
        grad_norm: f64,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub valid_loss: f64,
    pub valid_score: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainOutcome {
    pub history: Vec<EpochRecord>,
    /// 1-based epoch whose parameters were kept.
    pub best_epoch: usize,
    pub best_score: f64,
}

impl TrainOutcome {
    pub fn write_history<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "epoch,train_loss,valid_loss,valid_score")?;
        for r in &self.history {
            let score = r.valid_score.map(|s| s.to_string()).unwrap_or_default();
            writeln!(w, "{},{},{},{}", r.epoch, r.train_loss, r.valid_loss, score)?;
        }
        Ok(())
    }
}

struct Optimizer {
    kind: OptimizerKind,
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    step: i32,
    m: Vec<Matrix>,
    v: Vec<Matrix>,
}

impl Optimizer {
    fn new(config: &TrainConfig, store: &ParamStore) -> Self {
        let zeros = || store.iter().map(|p| Matrix::zeros(p.value.rows(), p.value.cols())).collect();
        Self {
            kind: config.optimizer,
            lr: config.learning_rate,
            beta1: config.beta1,
            beta2: config.beta2,
            eps: config.epsilon,
            step: 0,
            m: zeros(),
            v: zeros(),
        }
    }

    fn apply(&mut self, store: &mut ParamStore, ids: &[ParamId]) {
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step);
        let bc2 = 1.0 - self.beta2.powi(self.step);
        for &id in ids {
            let grad = store.grad(id).clone();
            let value = store.value_mut(id).as_mut_slice();
            match self.kind {
                OptimizerKind::Sgd => {
                    for (w, g) in value.iter_mut().zip(grad.as_slice()) {
                        *w -= self.lr * g;
                    }
                }
                OptimizerKind::Adam => {
                    let m = self.m[id.index()].as_mut_slice();
                    let v = self.v[id.index()].as_mut_slice();
                    for (((w, &g), m), v) in value.iter_mut().zip(grad.as_slice()).zip(m).zip(v) {
                        *m = self.beta1 * *m + (1.0 - self.beta1) * g;
                        *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
                        let m_hat = *m / bc1;
                        let v_hat = *v / bc2;
                        *w -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
                    }
                }
            }
        }
    }
}

fn batch_loss(model: &HonamModel, x: Matrix, y: &[f64]) -> Result<(Tape, crate::autodiff::Var), ModelError> {
    let mut tape = Tape::new();
    let xv = tape.constant(x);
    let out = model.forward_graph(&mut tape, xv)?;
    let yv = tape.constant(Matrix::column_vector(y));
    let loss = match model.task() {
        Task::Regression => {
            let diff = tape.sub(out, yv)?;
            let sq = tape.pow_int(diff, 2)?;
            tape.mean(sq)
        }
        Task::BinaryClassification => {
            let sp = tape.softplus(out);
            let yz = tape.mul(yv, out)?;
            let per_row = tape.sub(sp, yz)?;
            tape.mean(per_row)
        }
    };
    Ok((tape, loss))
}

/// Mean training loss of `model` on `data` (MSE or logistic loss).
pub fn dataset_loss(model: &HonamModel, data: &Dataset) -> Result<f64, ModelError> {
    let out = model.forward(&data.x)?;
    Ok(match model.task() {
        Task::Regression => metrics::mse(&data.y, &out),
        Task::BinaryClassification => metrics::log_loss(&data.y, &out),
    })
}

fn selection_score(model: &HonamModel, data: &Dataset, selection: Selection) -> Result<(f64, Option<f64>), ModelError> {
    let out = model.forward(&data.x)?;
    let loss = match model.task() {
        Task::Regression => metrics::mse(&data.y, &out),
        Task::BinaryClassification => metrics::log_loss(&data.y, &out),
    };
    let score = match (selection, model.task()) {
        (Selection::Loss, _) => Some(-loss),
        (Selection::Auto, Task::Regression) => metrics::r_squared(&data.y, &out),
        (Selection::Auto, Task::BinaryClassification) => metrics::auroc(&data.y, &out),
    };
    Ok((loss, score))
}

/// Trains in place and, unless `restore_best` is off, leaves the model at its
/// best validation epoch.
///
/// If the selection score is undefined on the validation data (for example a
/// single class), the negative validation loss is used for that epoch.
pub fn train(
    model: &mut HonamModel,
    train: &Dataset,
    valid: &Dataset,
    config: &TrainConfig,
) -> Result<TrainOutcome, TrainError> {
    config.validate()?;
    if train.is_empty() {
        return Err(TrainError::Config("training partition is empty".into()));
    }
    for d in [train, valid] {
        if d.n_features() != model.n_features() {
            return Err(ModelError::ColumnCount {
                expected: model.n_features(),
                found: d.n_features(),
            }
            .into());
        }
    }
    let ids: Vec<ParamId> = if config.freeze_feature_nets {
        vec![model.head_weight(), model.head_bias()]
    } else {
        model.params().ids().collect()
    };
    let mut opt = Optimizer::new(config, model.params());
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let n = train.len();
    let batch = config.batch_size_for(n);
    let mut order: Vec<usize> = (0..n).collect();

    let mut history = Vec::with_capacity(config.epochs);
    let mut best: Option<(usize, f64, Vec<Matrix>)> = None;
    for epoch in 1..=config.epochs {
        if config.shuffle {
            order.shuffle(&mut rng);
        }
        let mut total = 0.0;
        for (b, chunk) in order.chunks(batch).enumerate() {
            let x = train.x.select_rows(chunk);
            let y: Vec<f64> = chunk.iter().map(|&i| train.y[i]).collect();
            let (mut tape, loss) = batch_loss(model, x, &y)?;
            let value = tape.value(loss).item();
            model.params_mut().zero_grad();
            tape.backward(loss, model.params_mut()).map_err(ModelError::from)?;
            if !value.is_finite() {
                return Err(TrainError::NonFinite {
                    epoch,
                    batch: b,
                    loss: value,
                    param_norm: model.params().value_norm(),
                    grad_norm: model.params().grad_norm(),
                });
            }
            opt.apply(model.params_mut(), &ids);
            total += value * chunk.len() as f64;
        }
        let (valid_loss, valid_score) = if valid.is_empty() {
            (f64::NAN, None)
        } else {
            selection_score(model, valid, config.selection)?
        };
        let score = valid_score.unwrap_or(-valid_loss);
        let improved = match &best {
            None => true,
            Some((_, s, _)) => score > *s || (s.is_nan() && !score.is_nan()),
        };
        if improved {
            best = Some((epoch, score, model.params().snapshot()));
        }
        log::debug!("epoch {epoch}: train {:.6} valid {:.6} score {score:.6}", total / n as f64, valid_loss);
        history.push(EpochRecord {
            epoch,
            train_loss: total / n as f64,
            valid_loss,
            valid_score,
        });
    }
    let (best_epoch, best_score, snapshot) = best.expect("at least one epoch ran");
    if config.restore_best {
        model.params_mut().restore(&snapshot);
    }
    model.params_mut().zero_grad();
    Ok(TrainOutcome {
        history,
        best_epoch,
        best_score,
    })
}

/// Builds a model seeded from `config.seed` and trains it.
pub fn fit(
    model_config: HonamConfig,
    train_set: &Dataset,
    valid: &Dataset,
    config: &TrainConfig,
) -> Result<(HonamModel, TrainOutcome), TrainError> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x9E37_79B9_7F4A_7C15);
    let mut model = HonamModel::new(model_config, &mut rng)?;
    let outcome = train(&mut model, train_set, valid, config)?;
    Ok((model, outcome))
}

/// Task-appropriate metrics on one partition, keyed by name.
///
/// Regression: `r2`, `adj_r2`, `r_abs`, `adj_r_abs`, `rmse`, `mse`.
/// Classification: `auroc`, `auprc`, `log_loss`.
pub fn evaluate(model: &HonamModel, data: &Dataset) -> Result<BTreeMap<String, Option<f64>>, ModelError> {
    let out = model.forward(&data.x)?;
    let p = model.n_features();
    let y = &data.y;
    let mut m = BTreeMap::new();
    match model.task() {
        Task::Regression => {
            m.insert("r2".into(), metrics::r_squared(y, &out));
            m.insert("adj_r2".into(), metrics::adjusted_r_squared(y, &out, p));
            m.insert("r_abs".into(), metrics::r_absolute(y, &out));
            m.insert("adj_r_abs".into(), metrics::adjusted_r_absolute(y, &out, p));
            m.insert("rmse".into(), (!y.is_empty()).then(|| metrics::rmse(y, &out)));
            m.insert("mse".into(), (!y.is_empty()).then(|| metrics::mse(y, &out)));
        }
        Task::BinaryClassification => {
            m.insert("auroc".into(), metrics::auroc(y, &out));
            m.insert("auprc".into(), metrics::auprc(y, &out));
            m.insert("log_loss".into(), (!y.is_empty()).then(|| metrics::log_loss(y, &out)));
        }
    }
    Ok(m)
}
