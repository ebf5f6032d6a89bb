use super::{AutodiffError, ParamStore, Tape, Var};

/// Compares backpropagated gradients against central finite differences.
///
/// `forward` must deterministically build a 1×1 loss from the given store.
/// Returns the maximum over all parameter entries of
/// `|analytic - numeric| / max(1, |analytic|, |numeric|)`.
pub fn grad_check<F>(forward: F, params: &ParamStore, eps: f64) -> Result<f64, AutodiffError>
where
    F: Fn(&mut Tape, &ParamStore) -> Result<Var, AutodiffError>,
{
    if !(1e-7..=1e-3).contains(&eps) {
        return Err(AutodiffError::Config(format!(
            "finite-difference step must lie in [1e-7, 1e-3], got {eps}"
        )));
    }

    let mut analytic = params.clone();
    analytic.zero_grad();
    let mut tape = Tape::new();
    let loss = forward(&mut tape, &analytic)?;
    let value = tape.value(loss).item();
    if !value.is_finite() {
        return Err(AutodiffError::NonFinite(value));
    }
    tape.backward(loss, &mut analytic)?;

    let eval = |store: &ParamStore| -> Result<f64, AutodiffError> {
        let mut t = Tape::new();
        let l = forward(&mut t, store)?;
        let v = t.value(l).item();
        if v.is_finite() {
            Ok(v)
        } else {
            Err(AutodiffError::NonFinite(v))
        }
    };

    let mut probe = params.clone();
    let mut worst = 0.0f64;
    for id in params.ids() {
        for i in 0..params.value(id).len() {
            let orig = params.value(id).as_slice()[i];
            probe.value_mut(id).as_mut_slice()[i] = orig + eps;
            let plus = eval(&probe)?;
            probe.value_mut(id).as_mut_slice()[i] = orig - eps;
            let minus = eval(&probe)?;
            probe.value_mut(id).as_mut_slice()[i] = orig;

            let numeric = (plus - minus) / (2.0 * eps);
            let a = analytic.grad(id).as_slice()[i];
            let rel = (a - numeric).abs() / 1f64.max(a.abs()).max(numeric.abs());
            worst = worst.max(rel);
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::Matrix;

    #[test]
    fn single_linear_layer_is_tight() {
        let mut store = ParamStore::new();
        let w = store.add("w", Matrix::from_rows(&[[0.3, -0.2], [1.1, 0.4], [-0.7, 0.9]]));
        let b = store.add("b", Matrix::row_vector(&[0.1, -0.1]));
        let x = Matrix::from_rows(&[[1.0, 2.0, -1.0], [0.5, -0.5, 0.25]]);
        let err = grad_check(
            |t, s| {
                let xv = t.constant(x.clone());
                let (w, b) = (t.param(s, w), t.param(s, b));
                let h = t.matmul(xv, w)?;
                let h = t.add_row(h, b)?;
                Ok(t.sum(h))
            },
            &store,
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-8, "{err}");
    }

    #[test]
    fn rejects_out_of_range_step() {
        let store = ParamStore::new();
        let f = |t: &mut Tape, _: &ParamStore| Ok(t.constant(Matrix::scalar(0.0)));
        assert!(matches!(grad_check(f, &store, 1e-2), Err(AutodiffError::Config(_))));
        assert!(matches!(grad_check(f, &store, 1e-9), Err(AutodiffError::Config(_))));
    }

    #[test]
    fn non_finite_loss_is_reported() {
        let mut store = ParamStore::new();
        let w = store.add("w", Matrix::scalar(1000.0));
        let res = grad_check(
            |t, s| {
                let w = t.param(s, w);
                let e = t.exp(w);
                Ok(t.sum(e))
            },
            &store,
            1e-5,
        );
        assert!(matches!(res, Err(AutodiffError::NonFinite(_))));
    }
}
