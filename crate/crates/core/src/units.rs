//! Hidden-unit layers: standard linear, ExU, and ExpDive.
//!
//! All three compute a weighted combination of their inputs followed by an
//! activation. They differ in where the bias enters and how the raw weight is
//! mapped to an effective slope:
//!
//! | kind    | pre-activation                     |
//! |---------|------------------------------------|
//! | linear  | `x·W + b`                          |
//! | exu     | `(x − b)·exp(W)`                   |
//! | expdive | `(x − b)·(exp(W) − exp(−W))`       |
//!
//! For ExU the effective slope is always positive, so with a ReLU-family
//! activation and `b = 0` a negative input never activates the unit and
//! receives no gradient. ExpDive's slope is odd in `W`, which lets negative
//! weights respond to negative inputs.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::autodiff::{Activation, AutodiffError, ParamId, ParamStore, Tape, Var};
use crate::matrix::Matrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UnitKind {
    Linear,
    Exu,
    #[serde(rename = "expdive")]
    ExpDive,
}

impl UnitKind {
    /// Maps a raw weight to the slope the unit actually applies.
    pub fn effective_slope(self, w: f64) -> f64 {
        match self {
            UnitKind::Linear => w,
            UnitKind::Exu => w.exp(),
            UnitKind::ExpDive => w.exp() - (-w).exp(),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            UnitKind::Linear => "linear",
            UnitKind::Exu => "exu",
            UnitKind::ExpDive => "expdive",
        }
    }
}

impl std::str::FromStr for UnitKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "linear" => Ok(UnitKind::Linear),
            "exu" => Ok(UnitKind::Exu),
            "expdive" => Ok(UnitKind::ExpDive),
            other => Err(format!("unknown unit kind `{other}` (expected linear, exu or expdive)")),
        }
    }
}

/// One layer of hidden units. Parameters live in an external [`ParamStore`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UnitLayer {
    pub kind: UnitKind,
    pub in_dim: usize,
    pub out_dim: usize,
    /// `[in × out]`.
    pub weight: ParamId,
    /// Linear: `[1 × out]` added after weighting. ExU/ExpDive: `[1 × in]`
    /// input shift. `None` drops the bias entirely.
    pub bias: Option<ParamId>,
    pub activation: Activation,
}

impl UnitLayer {
    /// Allocates and initializes a layer's parameters.
    ///
    /// Linear weights draw from `N(0, sqrt(2/in))` with zero bias. ExU and
    /// ExpDive weights draw from `N(0.5, 0.5)` and shifts from `N(0, 0.5)`,
    /// which keeps initial slopes away from ExpDive's dead point at `W = 0`.
    #[allow(clippy::too_many_arguments)]
    pub fn init<R: Rng + ?Sized>(
        kind: UnitKind,
        in_dim: usize,
        out_dim: usize,
        activation: Activation,
        with_bias: bool,
        name: &str,
        store: &mut ParamStore,
        rng: &mut R,
    ) -> Result<Self, AutodiffError> {
        activation.validate()?;
        if in_dim == 0 || out_dim == 0 {
            return Err(AutodiffError::Config(format!(
                "layer `{name}` needs positive dimensions, got {in_dim}x{out_dim}"
            )));
        }
        let (w_dist, b_dist) = match kind {
            UnitKind::Linear => (normal(0.0, (2.0 / in_dim as f64).sqrt()), None),
            UnitKind::Exu | UnitKind::ExpDive => (normal(0.5, 0.5), Some(normal(0.0, 0.5))),
        };
        let w = sample(rng, &w_dist, in_dim, out_dim);
        let weight = store.add(format!("{name}.weight"), w);
        let bias = with_bias.then(|| {
            let b = match (kind, &b_dist) {
                (UnitKind::Linear, _) | (_, None) => Matrix::zeros(1, out_dim),
                (_, Some(d)) => sample(rng, d, 1, in_dim),
            };
            store.add(format!("{name}.bias"), b)
        });
        Ok(Self {
            kind,
            in_dim,
            out_dim,
            weight,
            bias,
            activation,
        })
    }

    /// Wraps explicit weight and bias values.
    pub fn from_values(
        kind: UnitKind,
        weight: Matrix,
        bias: Option<Matrix>,
        activation: Activation,
        store: &mut ParamStore,
    ) -> Result<Self, AutodiffError> {
        activation.validate()?;
        let (in_dim, out_dim) = weight.shape();
        if let Some(b) = &bias {
            let expected = match kind {
                UnitKind::Linear => (1, out_dim),
                _ => (1, in_dim),
            };
            if b.shape() != expected {
                return Err(AutodiffError::shape("unit bias", expected, b.shape()));
            }
        }
        let weight = store.add("weight", weight);
        let bias = bias.map(|b| store.add("bias", b));
        Ok(Self {
            kind,
            in_dim,
            out_dim,
            weight,
            bias,
            activation,
        })
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Result<Var, AutodiffError> {
        match self.kind {
            UnitKind::Linear => self.linear_forward(tape, store, x),
            UnitKind::Exu => self.exu_forward(tape, store, x),
            UnitKind::ExpDive => self.expdive_forward(tape, store, x),
        }
    }

    /// `σ(x·W + b)`.
    pub fn linear_forward(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        x: Var,
    ) -> Result<Var, AutodiffError> {
        self.expect_kind(UnitKind::Linear)?;
        let w = tape.param(store, self.weight);
        let mut h = tape.matmul(x, w)?;
        if let Some(b) = self.bias {
            let b = tape.param(store, b);
            h = tape.add_row(h, b)?;
        }
        tape.activation(h, self.activation)
    }

    /// `σ((x − b)·exp(W))`.
    pub fn exu_forward(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Result<Var, AutodiffError> {
        self.expect_kind(UnitKind::Exu)?;
        let centered = self.centered(tape, store, x)?;
        let w = tape.param(store, self.weight);
        let slope = tape.exp(w);
        let h = tape.matmul(centered, slope)?;
        tape.activation(h, self.activation)
    }

    /// `σ((x − b)·(exp(W) − exp(−W)))`.
    pub fn expdive_forward(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        x: Var,
    ) -> Result<Var, AutodiffError> {
        self.expect_kind(UnitKind::ExpDive)?;
        let centered = self.centered(tape, store, x)?;
        let w = tape.param(store, self.weight);
        let pos = tape.exp(w);
        let neg_w = tape.neg(w);
        let neg = tape.exp(neg_w);
        let slope = tape.sub(pos, neg)?;
        let h = tape.matmul(centered, slope)?;
        tape.activation(h, self.activation)
    }

    fn centered(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Result<Var, AutodiffError> {
        match self.bias {
            Some(b) => {
                let b = tape.param(store, b);
                tape.sub_row(x, b)
            }
            None => Ok(x),
        }
    }

    fn expect_kind(&self, kind: UnitKind) -> Result<(), AutodiffError> {
        if self.kind == kind {
            Ok(())
        } else {
            Err(AutodiffError::Config(format!(
                "{}_forward called on a {} layer",
                kind.as_str(),
                self.kind.as_str()
            )))
        }
    }
}

fn normal(mean: f64, std: f64) -> Normal<f64> {
    Normal::new(mean, std).expect("finite normal parameters")
}

fn sample<R: Rng + ?Sized>(rng: &mut R, dist: &Normal<f64>, rows: usize, cols: usize) -> Matrix {
    Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| dist.sample(rng)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::grad_check;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn eval(layer: &UnitLayer, store: &ParamStore, x: Matrix) -> Matrix {
        let mut t = Tape::new();
        let xv = t.constant(x);
        let out = layer.forward(&mut t, store, xv).unwrap();
        t.value(out).clone()
    }

    fn layer(kind: UnitKind, w: &[&[f64]], b: Option<&[f64]>, act: Activation) -> (UnitLayer, ParamStore) {
        let mut store = ParamStore::new();
        let l = UnitLayer::from_values(
            kind,
            Matrix::from_rows(w),
            b.map(Matrix::row_vector),
            act,
            &mut store,
        )
        .unwrap();
        (l, store)
    }

    #[test]
    fn linear_hand_cases() {
        let (l, s) = layer(UnitKind::Linear, &[&[1.0], &[1.0]], Some(&[0.0]), Activation::Identity);
        assert_eq!(eval(&l, &s, Matrix::from_rows(&[[1.0, 1.0]])).item(), 2.0);
        let (l, s) = layer(UnitKind::Linear, &[&[1.0]], Some(&[0.0]), Activation::Relu);
        assert_eq!(eval(&l, &s, Matrix::from_rows(&[[-1.0]])).item(), 0.0);
    }

    #[test]
    fn linear_matches_loop_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut store = ParamStore::new();
        let l = UnitLayer::init(UnitKind::Linear, 3, 4, Activation::LeakyRelu(0.01), true, "l", &mut store, &mut rng).unwrap();
        store.value_mut(l.bias.unwrap()).as_mut_slice().copy_from_slice(&[0.1, -0.2, 0.3, -0.4]);
        let x = Matrix::from_rows(&[[0.5, -1.0, 2.0], [1.5, 0.25, -0.75]]);
        let out = eval(&l, &store, x.clone());
        let (w, b) = (store.value(l.weight), store.value(l.bias.unwrap()));
        for r in 0..2 {
            for c in 0..4 {
                let mut acc = b.get(0, c);
                for i in 0..3 {
                    acc += x.get(r, i) * w.get(i, c);
                }
                let want = if acc > 0.0 { acc } else { 0.01 * acc };
                assert!((out.get(r, c) - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn exu_hand_cases() {
        let (l, s) = layer(UnitKind::Exu, &[&[0.0]], Some(&[0.0]), Activation::Identity);
        assert_eq!(eval(&l, &s, Matrix::scalar(0.0)).item(), 0.0);
        let (l, s) = layer(UnitKind::Exu, &[&[2f64.ln()]], Some(&[0.0]), Activation::Identity);
        assert!((eval(&l, &s, Matrix::scalar(1.0)).item() - 2.0).abs() < 1e-15);
    }

    #[test]
    fn expdive_hand_cases() {
        let (l, s) = layer(UnitKind::ExpDive, &[&[0.0]], Some(&[0.0]), Activation::Identity);
        for x in [-3.0, 0.5, 7.0] {
            assert_eq!(eval(&l, &s, Matrix::scalar(x)).item(), 0.0);
        }
        let (l, s) = layer(UnitKind::ExpDive, &[&[-1.0]], Some(&[0.0]), Activation::Identity);
        let want = -((-1f64).exp() - 1f64.exp());
        let got = eval(&l, &s, Matrix::scalar(-1.0)).item();
        assert!((got - want).abs() < 1e-15);
        assert!((got - 2.3504).abs() < 1e-4);
    }

    #[test]
    fn expdive_slope_is_odd_and_increasing() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut prev = f64::NEG_INFINITY;
        for i in -50..=50 {
            let w = i as f64 / 10.0;
            let s = UnitKind::ExpDive.effective_slope(w);
            assert!(s > prev);
            prev = s;
        }
        for _ in 0..100 {
            let w: f64 = rng.random_range(-5.0..5.0);
            assert_eq!(
                UnitKind::ExpDive.effective_slope(w),
                -UnitKind::ExpDive.effective_slope(-w)
            );
        }
    }

    #[test]
    fn expdive_preactivation_sign_follows_inputs_and_weight() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..200 {
            let x: f64 = rng.random_range(-2.0..2.0);
            let b: f64 = rng.random_range(-1.0..1.0);
            let w: f64 = rng.random_range(-2.0..2.0);
            let (l, s) = layer(UnitKind::ExpDive, &[&[w]], Some(&[b]), Activation::Identity);
            let pre = eval(&l, &s, Matrix::scalar(x)).item();
            let expect = (x - b).signum() * w.signum();
            if pre != 0.0 {
                assert_eq!(pre.signum(), expect);
            }
        }
    }

    #[test]
    fn exu_relu_is_dead_on_negative_inputs() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let x: f64 = -rng.random_range(1e-6..3.0);
            let w: f64 = rng.random_range(-2.0..2.0);
            let (l, mut s) = layer(UnitKind::Exu, &[&[w]], Some(&[0.0]), Activation::Relu);
            let mut t = Tape::new();
            let xv = t.constant(Matrix::scalar(x));
            let out = l.forward(&mut t, &s, xv).unwrap();
            assert_eq!(t.value(out).item(), 0.0);
            let loss = t.sum(out);
            t.backward(loss, &mut s).unwrap();
            assert_eq!(s.grad(l.weight).item(), 0.0);
        }
    }

    #[test]
    fn kind_mismatch_is_rejected() {
        let (l, s) = layer(UnitKind::Exu, &[&[0.0]], None, Activation::Identity);
        let mut t = Tape::new();
        let x = t.constant(Matrix::scalar(1.0));
        assert!(l.linear_forward(&mut t, &s, x).is_err());
        assert!(l.expdive_forward(&mut t, &s, x).is_err());
    }

    #[test]
    fn bad_bias_shape_is_rejected() {
        let mut store = ParamStore::new();
        let err = UnitLayer::from_values(
            UnitKind::Exu,
            Matrix::zeros(2, 3),
            Some(Matrix::zeros(1, 3)),
            Activation::Identity,
            &mut store,
        );
        assert!(matches!(err, Err(AutodiffError::Shape { .. })));
    }

    #[test]
    fn all_unit_kinds_pass_grad_check() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let x = Matrix::from_rows(&[[0.3, -0.8], [-1.2, 0.45], [0.9, 1.1]]);
        for kind in [UnitKind::Linear, UnitKind::Exu, UnitKind::ExpDive] {
            let mut store = ParamStore::new();
            let l = UnitLayer::init(kind, 2, 3, Activation::LeakyRelu(0.1), true, "u", &mut store, &mut rng).unwrap();
            let err = grad_check(
                |t, s| {
                    let xv = t.constant(x.clone());
                    let h = l.forward(t, s, xv)?;
                    let h = t.pow_int(h, 2)?;
                    Ok(t.sum(h))
                },
                &store,
                1e-5,
            )
            .unwrap();
            assert!(err < 1e-4, "{kind:?}: {err}");
        }
    }

    #[test]
    fn parses_kind_names() {
        assert_eq!("ExpDive".parse::<UnitKind>().unwrap(), UnitKind::ExpDive);
        assert!("gelu".parse::<UnitKind>().is_err());
        assert_eq!(serde_json::to_string(&UnitKind::ExpDive).unwrap(), "\"expdive\"");
    }
}
