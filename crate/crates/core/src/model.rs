//! The full model: per-feature networks, exact interaction terms up to order
//! `t`, and an affine head over `concat(fi_1..fi_t)`.
//!
//! Rows `[(p−1)k, pk)` of the head weight belong to order `p`. Every
//! interpretation routine relies on that slicing.

use std::collections::BTreeSet;
use std::io::{Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::autodiff::{ParamId, ParamStore, Tape, Var};
use crate::error::ModelError;
use crate::feature_nets::{FeatureNetBank, FeatureNetConfig};
use crate::kernels::interaction_recursion_graph;
use crate::matrix::Matrix;
use crate::units::UnitKind;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    Regression,
    BinaryClassification,
}

impl Task {
    pub fn as_str(self) -> &'static str {
        match self {
            Task::Regression => "regression",
            Task::BinaryClassification => "binary-classification",
        }
    }
}

impl std::fmt::Display for Task {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HonamConfig {
    pub n_features: usize,
    pub order: usize,
    pub task: Task,
    #[serde(default)]
    pub net: FeatureNetConfig,
}

impl HonamConfig {
    pub fn new(n_features: usize, order: usize, task: Task) -> Self {
        Self {
            n_features,
            order,
            task,
            net: FeatureNetConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.n_features == 0 {
            return Err(ModelError::Config("a model needs at least one feature".into()));
        }
        if self.order == 0 {
            return Err(ModelError::Config("interaction order must be at least 1".into()));
        }
        self.net.validate()
    }
}

/// Free-form data that travels with a saved model.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ModelMeta {
    pub schema_hash: Option<String>,
    pub context: Option<serde_json::Value>,
}

#[derive(Clone, Debug)]
pub struct HonamModel {
    config: HonamConfig,
    params: ParamStore,
    bank: FeatureNetBank,
    head_weight: ParamId,
    head_bias: ParamId,
    ablated: BTreeSet<usize>,
    pub meta: ModelMeta,
}

/// One entry of a local explanation: the features in the subset and its
/// additive share of the model output.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Contribution {
    pub features: Vec<usize>,
    pub value: f64,
}

impl Contribution {
    pub fn order(&self) -> usize {
        self.features.len()
    }
}

/// Per-subset contributions up to `listed_order`, then one aggregate per
/// remaining order up to the model order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContributionReport {
    pub listed_order: usize,
    pub terms: Vec<Contribution>,
    /// `(order, fi_p · W_p)` for orders above `listed_order`.
    pub aggregates: Vec<(usize, f64)>,
    pub bias: f64,
    /// The model output for the row.
    pub total: f64,
}

impl ContributionReport {
    pub fn order(&self, p: usize) -> impl Iterator<Item = &Contribution> {
        self.terms.iter().filter(move |c| c.order() == p)
    }

    /// `bias + Σ terms + Σ aggregates`.
    pub fn reconstructed(&self) -> f64 {
        self.bias + self.terms.iter().map(|c| c.value).sum::<f64>() + self.aggregates.iter().map(|a| a.1).sum::<f64>()
    }
}

impl HonamModel {
    pub fn new<R: Rng + ?Sized>(config: HonamConfig, rng: &mut R) -> Result<Self, ModelError> {
        config.validate()?;
        let mut params = ParamStore::new();
        let bank = FeatureNetBank::init(config.n_features, &config.net, &mut params, rng)?;
        let width = config.order * config.net.repr_dim;
        let dist = Normal::new(0.0, 0.01).expect("valid normal");
        let w = Matrix::from_vec(width, 1, (0..width).map(|_| dist.sample(rng)).collect());
        let head_weight = params.add("head.weight", w);
        let head_bias = params.add("head.bias", Matrix::zeros(1, 1));
        Ok(Self {
            config,
            params,
            bank,
            head_weight,
            head_bias,
            ablated: BTreeSet::new(),
            meta: ModelMeta::default(),
        })
    }

    pub fn config(&self) -> &HonamConfig {
        &self.config
    }

    pub fn n_features(&self) -> usize {
        self.config.n_features
    }

    pub fn order(&self) -> usize {
        self.config.order
    }

    pub fn repr_dim(&self) -> usize {
        self.config.net.repr_dim
    }

    pub fn task(&self) -> Task {
        self.config.task
    }

    pub fn unit(&self) -> UnitKind {
        self.config.net.unit
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    pub fn bank(&self) -> &FeatureNetBank {
        &self.bank
    }

    pub fn head_weight(&self) -> ParamId {
        self.head_weight
    }

    pub fn head_bias(&self) -> ParamId {
        self.head_bias
    }

    /// Parameters of the feature networks (everything except the head).
    pub fn bank_param_ids(&self) -> Vec<ParamId> {
        self.params
            .ids()
            .filter(|&id| id != self.head_weight && id != self.head_bias)
            .collect()
    }

    pub fn bias(&self) -> f64 {
        self.params.value(self.head_bias).item()
    }

    /// Head weights of order `p` as a slice of length `k`.
    pub fn order_weights(&self, p: usize) -> &[f64] {
        let k = self.repr_dim();
        &self.params.value(self.head_weight).as_slice()[(p - 1) * k..p * k]
    }

    pub fn ablated(&self) -> &BTreeSet<usize> {
        &self.ablated
    }

    /// Zeroes the representations of the given features in every later
    /// forward pass. Weights are untouched, so this can be undone.
    pub fn ablate_features<I: IntoIterator<Item = usize>>(&mut self, features: I) -> Result<(), ModelError> {
        let features: Vec<usize> = features.into_iter().collect();
        for &i in &features {
            self.check_feature(i)?;
        }
        self.ablated.extend(features);
        Ok(())
    }

    pub fn clear_ablation(&mut self) {
        self.ablated.clear();
    }

    fn check_feature(&self, index: usize) -> Result<(), ModelError> {
        if index >= self.n_features() {
            return Err(ModelError::FeatureIndex {
                index,
                count: self.n_features(),
            });
        }
        Ok(())
    }

    /// Records the forward pass for an `n×m` input and returns the `n×1` output.
    pub fn forward_graph(&self, tape: &mut Tape, x: Var) -> Result<Var, ModelError> {
        self.forward_graph_with(tape, &self.params, x)
    }

    /// Like [`forward_graph`](Self::forward_graph) but reads parameters from
    /// an external store with the same layout.
    pub fn forward_graph_with(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Result<Var, ModelError> {
        let (n, m) = tape.shape(x);
        if m != self.n_features() {
            return Err(ModelError::ColumnCount {
                expected: self.n_features(),
                found: m,
            });
        }
        let mut reprs = Vec::with_capacity(m);
        for i in 0..m {
            if self.ablated.contains(&i) {
                continue;
            }
            let col = tape.column(x, i)?;
            reprs.push(self.bank.feature_net_forward(tape, store, col, i)?);
        }
        let fi = interaction_recursion_graph(tape, &reprs, self.order(), (n, self.repr_dim()))?;
        let z = tape.concat_cols(&fi)?;
        let w = tape.param(store, self.head_weight);
        let b = tape.param(store, self.head_bias);
        let out = tape.matmul(z, w)?;
        Ok(tape.add_row(out, b)?)
    }

    /// Raw outputs: predictions for regression, logits for classification.
    pub fn forward(&self, x: &Matrix) -> Result<Vec<f64>, ModelError> {
        let mut tape = Tape::new();
        let xv = tape.constant(x.clone());
        let out = self.forward_graph(&mut tape, xv)?;
        Ok(tape.value(out).as_slice().to_vec())
    }

    /// Forward output mapped through the logistic link for classification.
    pub fn predict(&self, x: &Matrix) -> Result<Vec<f64>, ModelError> {
        let raw = self.forward(x)?;
        Ok(match self.task() {
            Task::Regression => raw,
            Task::BinaryClassification => raw.into_iter().map(crate::autodiff::sigmoid).collect(),
        })
    }

    /// Representation `r_i(v)` for each grid value, zero when ablated.
    pub fn feature_representations(&self, feature: usize, values: &[f64]) -> Result<Matrix, ModelError> {
        self.check_feature(feature)?;
        if self.ablated.contains(&feature) {
            return Ok(Matrix::zeros(values.len(), self.repr_dim()));
        }
        let mut tape = Tape::new();
        let col = tape.constant(Matrix::column_vector(values));
        let r = self.bank.feature_net_forward(&mut tape, &self.params, col, feature)?;
        Ok(tape.value(r).clone())
    }

    fn row_representations(&self, x_row: &[f64]) -> Result<Vec<Vec<f64>>, ModelError> {
        if x_row.len() != self.n_features() {
            return Err(ModelError::ColumnCount {
                expected: self.n_features(),
                found: x_row.len(),
            });
        }
        x_row
            .iter()
            .enumerate()
            .map(|(i, &v)| Ok(self.feature_representations(i, &[v])?.into_vec()))
            .collect()
    }

    /// Additive breakdown of one row's output.
    ///
    /// Subsets are listed individually for orders `1..=max_order`; each
    /// higher order up to `t` is reported as a single aggregate.
    pub fn local_contributions(&self, x_row: &[f64], max_order: usize) -> Result<ContributionReport, ModelError> {
        if max_order > self.order() {
            return Err(ModelError::Order {
                requested: max_order,
                max: self.order(),
            });
        }
        let reprs = self.row_representations(x_row)?;
        let k = self.repr_dim();
        let m = self.n_features();
        let mut terms = Vec::new();
        for p in 1..=max_order {
            let w = self.order_weights(p);
            for subset in Combinations::new(m, p) {
                let value = (0..k)
                    .map(|d| subset.iter().map(|&i| reprs[i][d]).product::<f64>() * w[d])
                    .sum();
                terms.push(Contribution {
                    features: subset,
                    value,
                });
            }
        }
        let live: Vec<&Vec<f64>> = reprs
            .iter()
            .enumerate()
            .filter(|(i, _)| !self.ablated.contains(i))
            .map(|(_, r)| r)
            .collect();
        let mut aggregates = Vec::new();
        if max_order < self.order() && !live.is_empty() {
            let stack = crate::kernels::interaction_recursion(&live, self.order());
            for p in max_order + 1..=self.order() {
                let w = self.order_weights(p);
                aggregates.push((p, stack.fi(p).iter().zip(w).map(|(a, b)| a * b).sum()));
            }
        } else {
            aggregates.extend((max_order + 1..=self.order()).map(|p| (p, 0.0)));
        }
        let total = self.forward(&Matrix::row_vector(x_row))?[0];
        Ok(ContributionReport {
            listed_order: max_order,
            terms,
            aggregates,
            bias: self.bias(),
            total,
        })
    }

    /// Order-1 contribution of `feature` at each grid value. Independent of
    /// every other feature.
    pub fn global_shape(&self, feature: usize, grid: &[f64]) -> Result<Vec<(f64, f64)>, ModelError> {
        let r = self.feature_representations(feature, grid)?;
        let w = self.order_weights(1);
        Ok(grid
            .iter()
            .enumerate()
            .map(|(g, &v)| (v, r.row(g).iter().zip(w).map(|(a, b)| a * b).sum()))
            .collect())
    }

    /// `out[u][v] = (r_i(grid_i[u]) ⊙ r_j(grid_j[v])) · W_2`.
    pub fn global_pair_shape(
        &self,
        features: (usize, usize),
        grid_i: &[f64],
        grid_j: &[f64],
    ) -> Result<Matrix, ModelError> {
        if self.order() < 2 {
            return Err(ModelError::UnsupportedOrder {
                needed: 2,
                order: self.order(),
            });
        }
        if grid_i.is_empty() || grid_j.is_empty() {
            return Err(ModelError::Config("pair grids must be nonempty".into()));
        }
        let ri = self.feature_representations(features.0, grid_i)?;
        let rj = self.feature_representations(features.1, grid_j)?;
        let w = self.order_weights(2);
        let mut out = Matrix::zeros(grid_i.len(), grid_j.len());
        for u in 0..grid_i.len() {
            for v in 0..grid_j.len() {
                let s = (0..w.len()).map(|d| ri.get(u, d) * rj.get(v, d) * w[d]).sum();
                out.set(u, v, s);
            }
        }
        Ok(out)
    }
}

/// Strictly increasing index tuples of length `p` over `0..m`, in
/// lexicographic order.
pub struct Combinations {
    m: usize,
    idx: Option<Vec<usize>>,
}

impl Combinations {
    pub fn new(m: usize, p: usize) -> Self {
        let idx = (p >= 1 && p <= m).then(|| (0..p).collect());
        Self { m, idx }
    }
}

impl Iterator for Combinations {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        let current = self.idx.clone()?;
        let p = current.len();
        let idx = self.idx.as_mut().expect("checked above");
        let mut pos = p;
        loop {
            if pos == 0 {
                self.idx = None;
                break;
            }
            pos -= 1;
            if idx[pos] < self.m - p + pos {
                idx[pos] += 1;
                for q in pos + 1..p {
                    idx[q] = idx[q - 1] + 1;
                }
                break;
            }
        }
        Some(current)
    }
}

// ---------------------------------------------------------------------------
// Model files

pub const MODEL_MAGIC: &[u8; 8] = b"HONAM\0MD";
pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct ParamShape {
    name: String,
    rows: usize,
    cols: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct ModelHeader {
    format_version: u32,
    m: usize,
    k: usize,
    t: usize,
    task: Task,
    unit: UnitKind,
    schema_hash: Option<String>,
    config: HonamConfig,
    ablated: Vec<usize>,
    params: Vec<ParamShape>,
    context: Option<serde_json::Value>,
}

impl HonamModel {
    /// Writes the model as
    /// `magic | u32 version | u64 header length | JSON header | f64 params | sha256`.
    /// All integers and floats are little-endian.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ModelError> {
        let bytes = self.to_bytes()?;
        let mut f = std::fs::File::create(path)?;
        f.write_all(&bytes)?;
        f.sync_all()?;
        Ok(())
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>, ModelError> {
        let header = ModelHeader {
            format_version: MODEL_FORMAT_VERSION,
            m: self.n_features(),
            k: self.repr_dim(),
            t: self.order(),
            task: self.task(),
            unit: self.unit(),
            schema_hash: self.meta.schema_hash.clone(),
            config: self.config.clone(),
            ablated: self.ablated.iter().copied().collect(),
            params: self
                .params
                .iter()
                .map(|p| ParamShape {
                    name: p.name.clone(),
                    rows: p.value.rows(),
                    cols: p.value.cols(),
                })
                .collect(),
            context: self.meta.context.clone(),
        };
        let header = serde_json::to_vec(&header).map_err(|e| ModelError::Corrupt(e.to_string()))?;
        let mut out = Vec::with_capacity(header.len() + 8 * self.params.num_scalars() + 64);
        out.extend_from_slice(MODEL_MAGIC);
        out.extend_from_slice(&MODEL_FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        for p in self.params.iter() {
            for v in p.value.as_slice() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        let digest = Sha256::digest(&out);
        out.extend_from_slice(&digest);
        Ok(out)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ModelError> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes)
    }

    /// Loads and checks that the model takes `expected_features` inputs.
    pub fn load_with_features(path: impl AsRef<Path>, expected_features: usize) -> Result<Self, ModelError> {
        let model = Self::load(path)?;
        if model.n_features() != expected_features {
            return Err(ModelError::Schema(format!(
                "model has {} features, data has {expected_features}",
                model.n_features()
            )));
        }
        Ok(model)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, ModelError> {
        let corrupt = |msg: &str| ModelError::Corrupt(msg.to_string());
        if bytes.len() < 8 + 4 + 8 + 32 {
            return Err(corrupt("file is too short"));
        }
        if &bytes[..8] != MODEL_MAGIC {
            return Err(corrupt("missing model file signature"));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
        if version != MODEL_FORMAT_VERSION {
            return Err(ModelError::Version {
                found: version,
                supported: MODEL_FORMAT_VERSION,
            });
        }
        let (body, digest) = bytes.split_at(bytes.len() - 32);
        if Sha256::digest(body).as_slice() != digest {
            return Err(corrupt("checksum mismatch (truncated or modified file)"));
        }
        let header_len = u64::from_le_bytes(body[12..20].try_into().expect("8 bytes")) as usize;
        let header_end = 20usize
            .checked_add(header_len)
            .filter(|&e| e <= body.len())
            .ok_or_else(|| corrupt("header length exceeds file size"))?;
        let header: ModelHeader =
            serde_json::from_slice(&body[20..header_end]).map_err(|e| ModelError::Corrupt(format!("bad header: {e}")))?;
        let config = &header.config;
        if config.n_features != header.m || config.order != header.t || config.net.repr_dim != header.k {
            return Err(corrupt("header dimensions disagree with stored configuration"));
        }

        let mut model = Self::new(header.config.clone(), &mut ChaCha8Rng::seed_from_u64(0))
            .map_err(|e| ModelError::Corrupt(format!("stored configuration is invalid: {e}")))?;
        let expected: Vec<ParamShape> = model
            .params
            .iter()
            .map(|p| ParamShape {
                name: p.name.clone(),
                rows: p.value.rows(),
                cols: p.value.cols(),
            })
            .collect();
        if expected != header.params {
            return Err(corrupt("parameter layout does not match the stored configuration"));
        }
        let data = &body[header_end..];
        if data.len() != 8 * model.params.num_scalars() {
            return Err(corrupt("parameter section has the wrong size"));
        }
        let mut chunks = data.chunks_exact(8);
        for p in model.params.iter_mut() {
            for v in p.value.as_mut_slice() {
                *v = f64::from_le_bytes(chunks.next().expect("size checked").try_into().expect("8 bytes"));
            }
        }
        model.ablate_features(header.ablated)?;
        model.meta = ModelMeta {
            schema_hash: header.schema_hash,
            context: header.context,
        };
        Ok(model)
    }
}
