//! One small network per input feature, each mapping a scalar to a
//! `k`-dimensional representation.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Activation, ParamStore, Tape, Var};
use crate::error::ModelError;
use crate::units::{UnitKind, UnitLayer};

/// Architecture shared by every net in a bank.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeatureNetConfig {
    pub hidden: Vec<usize>,
    /// Width `k` of each representation vector.
    pub repr_dim: usize,
    /// Unit family of the first hidden layer.
    pub unit: UnitKind,
    /// Use `unit` for every hidden layer instead of only the first.
    pub unit_all_layers: bool,
    /// Activation of ExU/ExpDive layers.
    pub unit_activation: Activation,
    /// Activation of linear hidden layers.
    pub hidden_activation: Activation,
    /// Whether ExU/ExpDive layers carry an input shift `b`.
    pub unit_shift: bool,
}

impl Default for FeatureNetConfig {
    fn default() -> Self {
        Self {
            hidden: vec![32, 64, 32],
            repr_dim: 32,
            unit: UnitKind::Linear,
            unit_all_layers: false,
            unit_activation: Activation::ReluN(1.0),
            hidden_activation: Activation::LeakyRelu(0.01),
            unit_shift: true,
        }
    }
}

impl FeatureNetConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.repr_dim == 0 {
            return Err(ModelError::Config("representation width must be positive".into()));
        }
        if self.hidden.contains(&0) {
            return Err(ModelError::Config("hidden layer sizes must be positive".into()));
        }
        self.unit_activation.validate()?;
        self.hidden_activation.validate()?;
        Ok(())
    }
}

/// A stack of layers `1 → hidden… → k`. The output layer is always linear
/// with no activation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureNet {
    pub layers: Vec<UnitLayer>,
}

impl FeatureNet {
    pub fn init<R: Rng + ?Sized>(
        config: &FeatureNetConfig,
        name: &str,
        store: &mut ParamStore,
        rng: &mut R,
    ) -> Result<Self, ModelError> {
        let mut dims = Vec::with_capacity(config.hidden.len() + 2);
        dims.push(1);
        dims.extend_from_slice(&config.hidden);
        dims.push(config.repr_dim);

        let n_layers = dims.len() - 1;
        let mut layers = Vec::with_capacity(n_layers);
        for (idx, pair) in dims.windows(2).enumerate() {
            let is_output = idx + 1 == n_layers;
            let use_unit = !is_output && (idx == 0 || config.unit_all_layers);
            let (kind, activation, with_bias) = if is_output {
                (UnitKind::Linear, Activation::Identity, true)
            } else if use_unit && config.unit != UnitKind::Linear {
                (config.unit, config.unit_activation, config.unit_shift)
            } else {
                (UnitKind::Linear, config.hidden_activation, true)
            };
            layers.push(UnitLayer::init(
                kind,
                pair[0],
                pair[1],
                activation,
                with_bias,
                &format!("{name}.layer{idx}"),
                store,
                rng,
            )?);
        }
        Ok(Self { layers })
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x_col: Var) -> Result<Var, ModelError> {
        let mut h = x_col;
        for layer in &self.layers {
            h = layer.forward(tape, store, h)?;
        }
        Ok(h)
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, |l| l.out_dim)
    }
}

/// `m` independent feature networks; net `i` only ever sees column `i`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureNetBank {
    pub nets: Vec<FeatureNet>,
    pub repr_dim: usize,
}

impl FeatureNetBank {
    pub fn init<R: Rng + ?Sized>(
        n_features: usize,
        config: &FeatureNetConfig,
        store: &mut ParamStore,
        rng: &mut R,
    ) -> Result<Self, ModelError> {
        config.validate()?;
        if n_features == 0 {
            return Err(ModelError::Config("a model needs at least one feature".into()));
        }
        let nets = (0..n_features)
            .map(|i| FeatureNet::init(config, &format!("feature{i}"), store, rng))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self {
            nets,
            repr_dim: config.repr_dim,
        })
    }

    pub fn len(&self) -> usize {
        self.nets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nets.is_empty()
    }

    /// `r_i = f_i(x_i)` for an `n×1` column.
    pub fn feature_net_forward(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        x_col: Var,
        index: usize,
    ) -> Result<Var, ModelError> {
        let net = self.nets.get(index).ok_or(ModelError::FeatureIndex {
            index,
            count: self.nets.len(),
        })?;
        net.forward(tape, store, x_col)
    }

    /// Representations `[r_1..r_m]` of an `n×m` input.
    pub fn bank_forward(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Result<Vec<Var>, ModelError> {
        let found = tape.shape(x).1;
        if found != self.nets.len() {
            return Err(ModelError::ColumnCount {
                expected: self.nets.len(),
                found,
            });
        }
        (0..self.nets.len())
            .map(|i| {
                let col = tape.column(x, i)?;
                self.feature_net_forward(tape, store, col, i)
            })
            .collect()
    }
}
