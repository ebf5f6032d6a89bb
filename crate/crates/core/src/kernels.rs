//! Feature-interaction kernels over per-feature representation vectors.
//!
//! Given representations `r_1..r_m ∈ R^k`, the order-`j` interaction `fi_j`
//! is the element-wise sum, over every `j`-subset of features, of the
//! element-wise product of the subset's representations. Per output
//! dimension this is the elementary symmetric polynomial `e_j(r_1[d]..r_m[d])`.
//!
//! Three ways to compute it live here:
//!
//! * [`enumerate_interactions`] walks all `C(m, j)` subsets. Exact and slow;
//!   it is the reference every other route is checked against.
//! * [`interaction_recursion`] uses the power sums `pfi_i = Σ r^i` and
//!   `fi_j = (1/j) Σ_{i=1..j} (−1)^{i+1} · pfi_i ⊙ fi_{j−i}`, `fi_0 = 1`,
//!   which costs `O(t·(t+m)·k)` for all orders up to `t`.
//! * [`crossnet_forward`] stacks `g_j = (g_1 ⊙ g_{j−1})·W_j`. Unlike the other
//!   two it keeps self-products such as `x_1²`.
//!
//! The `*_graph` variants record the recursion on a [`Tape`] so it can be
//! trained through.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::autodiff::{AutodiffError, ParamId, ParamStore, Tape, Var};
use crate::matrix::Matrix;

/// Interaction sums `fi_1..fi_t` and power sums `pfi_1..pfi_t`.
///
/// `fi_0 = 1` is implicit and never stored.
#[derive(Clone, Debug, PartialEq)]
pub struct InteractionStack {
    pub order: usize,
    /// `fi[j - 1]` holds `fi_j`.
    pub fi: Vec<Vec<f64>>,
    /// `pfi[j - 1]` holds `pfi_j`.
    pub pfi: Vec<Vec<f64>>,
}

impl InteractionStack {
    pub fn fi(&self, j: usize) -> &[f64] {
        &self.fi[j - 1]
    }

    pub fn pfi(&self, j: usize) -> &[f64] {
        &self.pfi[j - 1]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelKind {
    Enumeration,
    Recursion,
}

impl KernelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            KernelKind::Enumeration => "enumeration",
            KernelKind::Recursion => "recursion",
        }
    }
}

impl std::str::FromStr for KernelKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "enumeration" | "enum" => Ok(KernelKind::Enumeration),
            "recursion" | "rec" => Ok(KernelKind::Recursion),
            other => Err(format!("unknown kernel `{other}` (expected enumeration or recursion)")),
        }
    }
}

/// Arithmetic performed by a kernel call.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct OpCount {
    pub multiplies: u64,
    pub additions: u64,
}

fn repr_dim<R: AsRef<[f64]>>(reprs: &[R]) -> usize {
    let k = reprs.first().map_or(0, |r| r.as_ref().len());
    assert!(
        reprs.iter().all(|r| r.as_ref().len() == k),
        "representation vectors must share one width"
    );
    k
}

/// Sum over all strictly increasing index tuples `i_1 < … < i_t` of the
/// element-wise product `r_{i_1} ⊙ … ⊙ r_{i_t}`. Zero when `t > m`.
///
/// Panics if `t == 0`, `reprs` is empty, or widths differ.
pub fn enumerate_interactions<R: AsRef<[f64]>>(reprs: &[R], t: usize) -> Vec<f64> {
    enumerate_counted(reprs, t, &mut OpCount::default())
}

fn enumerate_counted<R: AsRef<[f64]>>(reprs: &[R], t: usize, ops: &mut OpCount) -> Vec<f64> {
    assert!(t >= 1, "interaction order must be at least 1");
    assert!(!reprs.is_empty(), "need at least one representation");
    let k = repr_dim(reprs);
    let m = reprs.len();
    let mut acc = vec![0.0; k];
    if t > m {
        return acc;
    }
    let mut idx: Vec<usize> = (0..t).collect();
    loop {
        for (d, a) in acc.iter_mut().enumerate() {
            let mut prod = reprs[idx[0]].as_ref()[d];
            for &i in &idx[1..] {
                prod *= reprs[i].as_ref()[d];
            }
            *a += prod;
        }
        ops.multiplies += ((t - 1) * k) as u64;
        ops.additions += k as u64;

        // next combination in lexicographic order
        let mut pos = t;
        while pos > 0 {
            pos -= 1;
            if idx[pos] < m - t + pos {
                idx[pos] += 1;
                for q in pos + 1..t {
                    idx[q] = idx[q - 1] + 1;
                }
                break;
            }
            if pos == 0 {
                return acc;
            }
        }
    }
}

/// `pfi_j[d] = Σ_i r_i[d]^j` for `j = 1..=t`.
pub fn power_sums<R: AsRef<[f64]>>(reprs: &[R], t: usize) -> Vec<Vec<f64>> {
    power_sums_counted(reprs, t, &mut OpCount::default())
}

fn power_sums_counted<R: AsRef<[f64]>>(reprs: &[R], t: usize, ops: &mut OpCount) -> Vec<Vec<f64>> {
    assert!(t >= 1, "interaction order must be at least 1");
    let k = repr_dim(reprs);
    let mut pfi = vec![vec![0.0; k]; t];
    let mut power = vec![0.0; k];
    for r in reprs {
        let r = r.as_ref();
        power.copy_from_slice(r);
        for (j, sums) in pfi.iter_mut().enumerate() {
            if j > 0 {
                for (p, &x) in power.iter_mut().zip(r) {
                    *p *= x;
                }
                ops.multiplies += k as u64;
            }
            for (s, &p) in sums.iter_mut().zip(&power) {
                *s += p;
            }
            ops.additions += k as u64;
        }
    }
    pfi
}

/// All interaction orders `1..=t` via the power-sum recursion.
///
/// Orders above `m` are set to exact zeros rather than left to rounding.
pub fn interaction_recursion<R: AsRef<[f64]>>(reprs: &[R], t: usize) -> InteractionStack {
    recursion_counted(reprs, t, &mut OpCount::default())
}

fn recursion_counted<R: AsRef<[f64]>>(reprs: &[R], t: usize, ops: &mut OpCount) -> InteractionStack {
    assert!(!reprs.is_empty(), "need at least one representation");
    let k = repr_dim(reprs);
    let m = reprs.len();
    let pfi = power_sums_counted(reprs, t, ops);
    let mut fi: Vec<Vec<f64>> = Vec::with_capacity(t);
    fi.push(pfi[0].clone());
    for j in 2..=t {
        if j > m {
            fi.push(vec![0.0; k]);
            continue;
        }
        let mut acc = vec![0.0; k];
        for i in 1..=j {
            let sign = if i % 2 == 1 { 1.0 } else { -1.0 };
            if i == j {
                for (a, &p) in acc.iter_mut().zip(&pfi[i - 1]) {
                    *a += sign * p;
                }
            } else {
                for ((a, &p), &f) in acc.iter_mut().zip(&pfi[i - 1]).zip(&fi[j - i - 1]) {
                    *a += sign * p * f;
                }
                ops.multiplies += k as u64;
            }
            ops.additions += k as u64;
        }
        let inv = 1.0 / j as f64;
        acc.iter_mut().for_each(|a| *a *= inv);
        ops.multiplies += k as u64;
        fi.push(acc);
    }
    InteractionStack { order: t, fi, pfi }
}

/// Exact arithmetic counts of one kernel call on `m` representations of width `k`.
///
/// Enumeration: `C(m,t)·(t−1)·k` multiplies. Recursion: `(t−1)·m·k` for the
/// power sums plus `j·k` for each order `j ≥ 2` (products and the `1/j` scale).
pub fn count_kernel_ops(kind: KernelKind, m: usize, k: usize, t: usize) -> OpCount {
    let (m64, k64, t64) = (m as u64, k as u64, t as u64);
    match kind {
        KernelKind::Enumeration => {
            let tuples = binomial(m64, t64);
            OpCount {
                multiplies: tuples.saturating_mul(t64.saturating_sub(1)).saturating_mul(k64),
                additions: tuples.saturating_mul(k64),
            }
        }
        KernelKind::Recursion => {
            let power = OpCount {
                multiplies: t64.saturating_sub(1) * m64 * k64,
                additions: t64 * m64 * k64,
            };
            let live = t64.min(m64);
            // orders 2..=min(t, m) do j·k multiplies and j·k additions each
            let tri = if live >= 2 { live * (live + 1) / 2 - 1 } else { 0 };
            OpCount {
                multiplies: power.multiplies + tri * k64,
                additions: power.additions + tri * k64,
            }
        }
    }
}

/// Counts obtained by actually running the kernel on zeros.
pub fn measure_kernel_ops(kind: KernelKind, m: usize, k: usize, t: usize) -> OpCount {
    let reprs = vec![vec![0.0; k]; m];
    let mut ops = OpCount::default();
    match kind {
        KernelKind::Enumeration => {
            enumerate_counted(&reprs, t, &mut ops);
        }
        KernelKind::Recursion => {
            recursion_counted(&reprs, t, &mut ops);
        }
    }
    ops
}

/// `C(n, r)`, saturating at `u64::MAX`.
pub fn binomial(n: u64, r: u64) -> u64 {
    if r > n {
        return 0;
    }
    let r = r.min(n - r);
    let mut acc: u128 = 1;
    for i in 0..r {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
        if acc > u64::MAX as u128 {
            return u64::MAX;
        }
    }
    acc as u64
}

/// Records the power sums `pfi_1..pfi_t` on a tape.
pub fn power_sums_graph(tape: &mut Tape, reprs: &[Var], t: usize) -> Result<Vec<Var>, AutodiffError> {
    if t == 0 || reprs.is_empty() {
        return Err(AutodiffError::Config("power sums need t >= 1 and m >= 1".into()));
    }
    (1..=t)
        .map(|j| {
            let powers = reprs
                .iter()
                .map(|&r| if j == 1 { Ok(r) } else { tape.pow_int(r, j as i32) })
                .collect::<Result<Vec<_>, _>>()?;
            if powers.len() == 1 {
                Ok(powers[0])
            } else {
                tape.sum_many(&powers)
            }
        })
        .collect()
}

/// Records `fi_1..fi_t` on a tape.
///
/// `zero_shape` gives the `(n, k)` shape used for orders with no subsets,
/// which also covers an empty `reprs` (every feature ablated).
pub fn interaction_recursion_graph(
    tape: &mut Tape,
    reprs: &[Var],
    t: usize,
    zero_shape: (usize, usize),
) -> Result<Vec<Var>, AutodiffError> {
    if t == 0 {
        return Err(AutodiffError::Config("interaction order must be at least 1".into()));
    }
    let m = reprs.len();
    if m == 0 {
        let z = tape.constant(Matrix::zeros(zero_shape.0, zero_shape.1));
        return Ok(vec![z; t]);
    }
    let live = t.min(m);
    let pfi = power_sums_graph(tape, reprs, live)?;
    let mut fi: Vec<Var> = Vec::with_capacity(t);
    fi.push(pfi[0]);
    for j in 2..=live {
        let mut acc = pfi[0];
        acc = tape.mul(acc, fi[j - 2])?;
        for i in 2..=j {
            let term = if i == j {
                pfi[i - 1]
            } else {
                tape.mul(pfi[i - 1], fi[j - i - 1])?
            };
            acc = if i % 2 == 1 {
                tape.add(acc, term)?
            } else {
                tape.sub(acc, term)?
            };
        }
        fi.push(tape.scale(acc, 1.0 / j as f64));
    }
    if t > live {
        let z = tape.constant(Matrix::zeros(zero_shape.0, zero_shape.1));
        fi.extend(std::iter::repeat_n(z, t - live));
    }
    Ok(fi)
}

/// Weights of a CrossNet: `W_1 [m×k]`, then `W_2..W_t [k×k]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrossNetStack {
    pub n_inputs: usize,
    pub width: usize,
    pub weights: Vec<ParamId>,
}

impl CrossNetStack {
    pub fn init<R: Rng + ?Sized>(
        n_inputs: usize,
        width: usize,
        order: usize,
        store: &mut ParamStore,
        rng: &mut R,
    ) -> Self {
        let mut weights = Vec::with_capacity(order);
        for j in 0..order {
            let rows = if j == 0 { n_inputs } else { width };
            let dist = Normal::new(0.0, (1.0 / rows as f64).sqrt()).expect("valid normal");
            let w = Matrix::from_vec(rows, width, (0..rows * width).map(|_| dist.sample(rng)).collect());
            weights.push(store.add(format!("crossnet.w{}", j + 1), w));
        }
        Self {
            n_inputs,
            width,
            weights,
        }
    }

    pub fn from_values(weights: Vec<Matrix>, store: &mut ParamStore) -> Result<Self, AutodiffError> {
        let first = weights
            .first()
            .ok_or_else(|| AutodiffError::Config("CrossNet needs at least one weight".into()))?;
        let (n_inputs, width) = first.shape();
        for w in &weights[1..] {
            if w.shape() != (width, width) {
                return Err(AutodiffError::shape("crossnet weight", (width, width), w.shape()));
            }
        }
        let weights = weights
            .into_iter()
            .enumerate()
            .map(|(j, w)| store.add(format!("crossnet.w{}", j + 1), w))
            .collect();
        Ok(Self {
            n_inputs,
            width,
            weights,
        })
    }

    pub fn order(&self) -> usize {
        self.weights.len()
    }
}

/// `g_1 = x·W_1`, `g_j = (g_1 ⊙ g_{j−1})·W_j`; returns `g_t`.
pub fn crossnet_forward(
    tape: &mut Tape,
    store: &ParamStore,
    x: Var,
    stack: &CrossNetStack,
    t: usize,
) -> Result<Var, AutodiffError> {
    if t == 0 || t > stack.order() {
        return Err(AutodiffError::Config(format!(
            "CrossNet order {t} outside 1..={}",
            stack.order()
        )));
    }
    let w1 = tape.param(store, stack.weights[0]);
    let g1 = tape.matmul(x, w1)?;
    let mut g = g1;
    for &w in &stack.weights[1..t] {
        let cross = tape.mul(g1, g)?;
        let w = tape.param(store, w);
        g = tape.matmul(cross, w)?;
    }
    Ok(g)
}
