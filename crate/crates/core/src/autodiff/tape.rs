use serde::{Deserialize, Serialize};

use super::{AutodiffError, ParamId, ParamStore};
use crate::matrix::Matrix;

type Result<T> = std::result::Result<T, AutodiffError>;

/// Handle to a node on a [`Tape`]. Only meaningful for the tape that made it.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

/// Point-wise nonlinearities.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "param", rename_all = "snake_case")]
pub enum Activation {
    Identity,
    Relu,
    /// `min(max(0, x), n)`.
    ReluN(f64),
    /// `x` for `x > 0`, otherwise `slope * x`.
    LeakyRelu(f64),
}

impl Activation {
    pub fn validate(self) -> Result<()> {
        match self {
            Activation::ReluN(n) if !(n > 0.0 && n.is_finite()) => Err(AutodiffError::Config(
                format!("relu_n cap must be positive, got {n}"),
            )),
            Activation::LeakyRelu(s) if !(s > 0.0 && s < 1.0) => Err(AutodiffError::Config(
                format!("leaky_relu slope must lie in (0, 1), got {s}"),
            )),
            _ => Ok(()),
        }
    }

    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Identity => x,
            Activation::Relu => x.max(0.0),
            Activation::ReluN(n) => x.max(0.0).min(n),
            Activation::LeakyRelu(s) => {
                if x > 0.0 {
                    x
                } else {
                    s * x
                }
            }
        }
    }

    /// Derivative used by backpropagation. Kinks take the left-hand value
    /// (0 for relu/relu_n at 0, `slope` for leaky_relu at 0, 0 at the relu_n cap).
    pub fn derivative(self, x: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::ReluN(n) => {
                if x > 0.0 && x < n {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::LeakyRelu(s) => {
                if x > 0.0 {
                    1.0
                } else {
                    s
                }
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ElementwiseKind {
    Add,
    Sub,
    Mul,
    PowInt,
    Exp,
    Neg,
    Scale,
}

/// Second operand of [`Tape::elementwise`].
#[derive(Clone, Copy, Debug)]
pub enum Operand {
    Tensor(Var),
    Scalar(f64),
    /// For the unary kinds (`exp`, `neg`).
    None,
}

#[derive(Clone, Debug)]
enum Op {
    Constant,
    Param(ParamId),
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddScalar(Var),
    Scale(Var, f64),
    Neg(Var),
    Exp(Var),
    PowInt(Var, u32),
    AddRow(Var, Var),
    SubRow(Var, Var),
    Activation(Var, Activation),
    Softplus(Var),
    Sum(Var),
    Mean(Var),
    SumMany(Vec<Var>),
    ConcatCols(Vec<Var>),
    Column(Var, usize),
}

#[derive(Debug)]
struct Node {
    value: Matrix,
    op: Op,
    requires_grad: bool,
}

/// Record of one forward pass.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    grads: Vec<Option<Matrix>>,
    backpropagated: bool,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.shape()
    }

    /// Gradient of the last backward's loss with respect to `v`, if one reached it.
    pub fn grad(&self, v: Var) -> Option<&Matrix> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    fn push(&mut self, value: Matrix, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn req(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn constant(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Constant, false)
    }

    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        self.push(store.value(id).clone(), Op::Param(id), true)
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(AutodiffError::shape(op, sa, sb));
        }
        Ok(())
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.1 != sb.0 {
            return Err(AutodiffError::shape("matmul", sa, sb));
        }
        let value = self.value(a).matmul(self.value(b));
        let rg = self.req(a) || self.req(b);
        Ok(self.push(value, Op::MatMul(a, b), rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        let value = self.value(a).zip_map(self.value(b), |x, y| x + y);
        let rg = self.req(a) || self.req(b);
        Ok(self.push(value, Op::Add(a, b), rg))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("sub", a, b)?;
        let value = self.value(a).zip_map(self.value(b), |x, y| x - y);
        let rg = self.req(a) || self.req(b);
        Ok(self.push(value, Op::Sub(a, b), rg))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mul", a, b)?;
        let value = self.value(a).zip_map(self.value(b), |x, y| x * y);
        let rg = self.req(a) || self.req(b);
        Ok(self.push(value, Op::Mul(a, b), rg))
    }

    pub fn add_scalar(&mut self, a: Var, s: f64) -> Var {
        let value = self.value(a).map(|x| x + s);
        let rg = self.req(a);
        self.push(value, Op::AddScalar(a), rg)
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let value = self.value(a).map(|x| x * s);
        let rg = self.req(a);
        self.push(value, Op::Scale(a, s), rg)
    }

    pub fn neg(&mut self, a: Var) -> Var {
        let value = self.value(a).map(|x| -x);
        let rg = self.req(a);
        self.push(value, Op::Neg(a), rg)
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let value = self.value(a).map(f64::exp);
        let rg = self.req(a);
        self.push(value, Op::Exp(a), rg)
    }

    /// Element-wise integer power. Negative exponents are rejected.
    pub fn pow_int(&mut self, a: Var, exponent: i32) -> Result<Var> {
        let e = u32::try_from(exponent).map_err(|_| {
            AutodiffError::Config(format!("pow_int exponent must be >= 0, got {exponent}"))
        })?;
        let value = self.value(a).map(|x| x.powi(exponent));
        let rg = self.req(a);
        Ok(self.push(value, Op::PowInt(a, e), rg))
    }

    /// Dispatches on [`ElementwiseKind`]; scalar operands are allowed for the
    /// binary kinds, and give the exponent for `PowInt` and the factor for `Scale`.
    pub fn elementwise(&mut self, kind: ElementwiseKind, a: Var, b: Operand) -> Result<Var> {
        let missing = |k: ElementwiseKind| {
            AutodiffError::Config(format!("{k:?} requires a tensor or scalar operand"))
        };
        match (kind, b) {
            (ElementwiseKind::Add, Operand::Tensor(b)) => self.add(a, b),
            (ElementwiseKind::Add, Operand::Scalar(s)) => Ok(self.add_scalar(a, s)),
            (ElementwiseKind::Sub, Operand::Tensor(b)) => self.sub(a, b),
            (ElementwiseKind::Sub, Operand::Scalar(s)) => Ok(self.add_scalar(a, -s)),
            (ElementwiseKind::Mul, Operand::Tensor(b)) => self.mul(a, b),
            (ElementwiseKind::Mul | ElementwiseKind::Scale, Operand::Scalar(s)) => {
                Ok(self.scale(a, s))
            }
            (ElementwiseKind::PowInt, Operand::Scalar(s)) => {
                if s.fract() != 0.0 || s.abs() > i32::MAX as f64 {
                    return Err(AutodiffError::Config(format!(
                        "pow_int exponent must be an integer, got {s}"
                    )));
                }
                self.pow_int(a, s as i32)
            }
            (ElementwiseKind::Exp, _) => Ok(self.exp(a)),
            (ElementwiseKind::Neg, _) => Ok(self.neg(a)),
            (k, Operand::None) => Err(missing(k)),
            (k, Operand::Tensor(_)) => Err(AutodiffError::Config(format!(
                "{k:?} takes a scalar operand, not a tensor"
            ))),
        }
    }

    /// `a[n×q] + row[1×q]`, the row added to every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let value = self.row_op("add_row", a, row, |x, y| x + y)?;
        let rg = self.req(a) || self.req(row);
        Ok(self.push(value, Op::AddRow(a, row), rg))
    }

    /// `a[n×q] - row[1×q]`.
    pub fn sub_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let value = self.row_op("sub_row", a, row, |x, y| x - y)?;
        let rg = self.req(a) || self.req(row);
        Ok(self.push(value, Op::SubRow(a, row), rg))
    }

    fn row_op(
        &self,
        op: &'static str,
        a: Var,
        row: Var,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Matrix> {
        let (sa, sr) = (self.shape(a), self.shape(row));
        if sr.0 != 1 || sr.1 != sa.1 {
            return Err(AutodiffError::shape(op, sa, sr));
        }
        let r = self.value(row).as_slice();
        let mut out = self.value(a).clone();
        for chunk in out.as_mut_slice().chunks_mut(sa.1.max(1)) {
            for (x, &y) in chunk.iter_mut().zip(r) {
                *x = f(*x, y);
            }
        }
        Ok(out)
    }

    pub fn activation(&mut self, a: Var, act: Activation) -> Result<Var> {
        act.validate()?;
        if act == Activation::Identity {
            return Ok(a);
        }
        let value = self.value(a).map(|x| act.apply(x));
        let rg = self.req(a);
        Ok(self.push(value, Op::Activation(a, act), rg))
    }

    /// Numerically stable `ln(1 + exp(x))`.
    pub fn softplus(&mut self, a: Var) -> Var {
        let value = self.value(a).map(softplus);
        let rg = self.req(a);
        self.push(value, Op::Softplus(a), rg)
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let value = Matrix::scalar(self.value(a).sum());
        let rg = self.req(a);
        self.push(value, Op::Sum(a), rg)
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let m = self.value(a);
        let value = Matrix::scalar(m.sum() / m.len().max(1) as f64);
        let rg = self.req(a);
        self.push(value, Op::Mean(a), rg)
    }

    /// Element-wise sum of equally shaped tensors.
    pub fn sum_many(&mut self, vars: &[Var]) -> Result<Var> {
        let first = *vars
            .first()
            .ok_or_else(|| AutodiffError::Config("sum_many of an empty list".into()))?;
        let mut value = self.value(first).clone();
        for &v in &vars[1..] {
            self.same_shape("sum_many", first, v)?;
            value.add_assign(self.value(v));
        }
        let rg = vars.iter().any(|&v| self.req(v));
        Ok(self.push(value, Op::SumMany(vars.to_vec()), rg))
    }

    /// Concatenates tensors with equal row counts side by side.
    pub fn concat_cols(&mut self, vars: &[Var]) -> Result<Var> {
        let first = *vars
            .first()
            .ok_or_else(|| AutodiffError::Config("concat of an empty list".into()))?;
        let rows = self.shape(first).0;
        let mut cols = 0;
        for &v in vars {
            let s = self.shape(v);
            if s.0 != rows {
                return Err(AutodiffError::shape("concat_cols", self.shape(first), s));
            }
            cols += s.1;
        }
        let mut out = Matrix::zeros(rows, cols);
        let mut offset = 0;
        for &v in vars {
            let m = self.value(v);
            for r in 0..rows {
                let dst = &mut out.as_mut_slice()[r * cols + offset..r * cols + offset + m.cols()];
                dst.copy_from_slice(m.row(r));
            }
            offset += m.cols();
        }
        let rg = vars.iter().any(|&v| self.req(v));
        Ok(self.push(out, Op::ConcatCols(vars.to_vec()), rg))
    }

    /// Column `j` of `a` as an `n×1` tensor.
    pub fn column(&mut self, a: Var, j: usize) -> Result<Var> {
        let s = self.shape(a);
        if j >= s.1 {
            return Err(AutodiffError::shape("column", s, (s.0, j + 1)));
        }
        let value = Matrix::column_vector(&self.value(a).column(j));
        let rg = self.req(a);
        Ok(self.push(value, Op::Column(a, j), rg))
    }

    /// Backpropagates from the scalar `loss`, adding parameter gradients into `store`.
    pub fn backward(&mut self, loss: Var, store: &mut ParamStore) -> Result<()> {
        if self.backpropagated {
            return Err(AutodiffError::AlreadyBackpropagated);
        }
        let (rows, cols) = self.shape(loss);
        if (rows, cols) != (1, 1) {
            return Err(AutodiffError::NonScalarLoss { rows, cols });
        }
        self.backpropagated = true;
        self.grads = vec![None; self.nodes.len()];
        self.grads[loss.0] = Some(Matrix::ones(1, 1));

        for idx in (0..=loss.0).rev() {
            if !self.nodes[idx].requires_grad {
                continue;
            }
            let Some(g) = self.grads[idx].take() else {
                continue;
            };
            self.propagate(idx, &g, store);
            self.grads[idx] = Some(g);
        }
        Ok(())
    }

    fn accumulate(&mut self, target: Var, contribution: Matrix) {
        if !self.nodes[target.0].requires_grad {
            return;
        }
        match &mut self.grads[target.0] {
            Some(g) => g.add_assign(&contribution),
            slot @ None => *slot = Some(contribution),
        }
    }

    fn propagate(&mut self, idx: usize, g: &Matrix, store: &mut ParamStore) {
        let op = self.nodes[idx].op.clone();
        match op {
            Op::Constant => {}
            Op::Param(id) => store.accumulate_grad(id, g),
            Op::MatMul(a, b) => {
                if self.req(a) {
                    let da = g.matmul_t(self.value(b));
                    self.accumulate(a, da);
                }
                if self.req(b) {
                    let db = self.value(a).t_matmul(g);
                    self.accumulate(b, db);
                }
            }
            Op::Add(a, b) => {
                self.accumulate(a, g.clone());
                self.accumulate(b, g.clone());
            }
            Op::Sub(a, b) => {
                self.accumulate(a, g.clone());
                self.accumulate(b, g.map(|x| -x));
            }
            Op::Mul(a, b) => {
                if self.req(a) {
                    let da = g.zip_map(self.value(b), |x, y| x * y);
                    self.accumulate(a, da);
                }
                if self.req(b) {
                    let db = g.zip_map(self.value(a), |x, y| x * y);
                    self.accumulate(b, db);
                }
            }
            Op::AddScalar(a) => self.accumulate(a, g.clone()),
            Op::Scale(a, s) => self.accumulate(a, g.map(|x| x * s)),
            Op::Neg(a) => self.accumulate(a, g.map(|x| -x)),
            Op::Exp(a) => {
                let da = g.zip_map(&self.nodes[idx].value, |x, y| x * y);
                self.accumulate(a, da);
            }
            Op::PowInt(a, e) => {
                let da = if e == 0 {
                    Matrix::zeros(g.rows(), g.cols())
                } else {
                    let ef = e as f64;
                    g.zip_map(self.value(a), |x, y| x * ef * y.powi(e as i32 - 1))
                };
                self.accumulate(a, da);
            }
            Op::AddRow(a, row) | Op::SubRow(a, row) => {
                let sign = if matches!(self.nodes[idx].op, Op::SubRow(..)) {
                    -1.0
                } else {
                    1.0
                };
                if self.req(row) {
                    let cols = g.cols();
                    let mut dr = vec![0.0; cols];
                    for r in 0..g.rows() {
                        for (d, &x) in dr.iter_mut().zip(g.row(r)) {
                            *d += sign * x;
                        }
                    }
                    self.accumulate(row, Matrix::from_vec(1, cols, dr));
                }
                self.accumulate(a, g.clone());
            }
            Op::Activation(a, act) => {
                let da = g.zip_map(self.value(a), |x, y| x * act.derivative(y));
                self.accumulate(a, da);
            }
            Op::Softplus(a) => {
                let da = g.zip_map(self.value(a), |x, y| x * sigmoid(y));
                self.accumulate(a, da);
            }
            Op::Sum(a) => {
                let (r, c) = self.shape(a);
                self.accumulate(a, Matrix::filled(r, c, g.item()));
            }
            Op::Mean(a) => {
                let (r, c) = self.shape(a);
                let n = (r * c).max(1) as f64;
                self.accumulate(a, Matrix::filled(r, c, g.item() / n));
            }
            Op::SumMany(vars) => {
                for v in vars {
                    self.accumulate(v, g.clone());
                }
            }
            Op::ConcatCols(vars) => {
                let mut offset = 0;
                for v in vars {
                    let (rows, cols) = self.shape(v);
                    if self.req(v) {
                        let mut part = Matrix::zeros(rows, cols);
                        for r in 0..rows {
                            part.as_mut_slice()[r * cols..(r + 1) * cols]
                                .copy_from_slice(&g.row(r)[offset..offset + cols]);
                        }
                        self.accumulate(v, part);
                    }
                    offset += cols;
                }
            }
            Op::Column(a, j) => {
                let (rows, cols) = self.shape(a);
                let mut da = Matrix::zeros(rows, cols);
                for r in 0..rows {
                    da.set(r, j, g.get(r, 0));
                }
                self.accumulate(a, da);
            }
        }
    }
}

pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
