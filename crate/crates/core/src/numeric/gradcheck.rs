use super::{Graph, NumericError, OpResult, ParamStore, Session, Tensor, Var};

/// Compares the analytic gradient of a scalar function with central
/// differences and returns `max_i |analytic_i - numeric_i| / (|analytic_i| + 1e-12)`.
///
/// `f` receives a fresh graph and the input node for `x` and must return a
/// scalar node.
pub fn finite_difference_check<F>(f: F, x: &Tensor, eps: f64) -> Result<f64, NumericError>
where
    F: Fn(&mut Graph, Var) -> OpResult,
{
    assert!(eps > 0.0, "finite-difference step must be positive");
    let eval = |t: Tensor| -> Result<(f64, Option<Vec<f64>>), NumericError> {
        let mut g = Graph::new();
        let need_grad = t.requires_grad;
        let xv = g.input(t);
        let out = f(&mut g, xv)?;
        let value = g.value(out).data()[0];
        if need_grad {
            let grads = g.backward(out)?;
            let n = g.value(xv).numel();
            Ok((value, Some(grads.get(xv).map(<[f64]>::to_vec).unwrap_or(vec![0.0; n]))))
        } else {
            Ok((value, None))
        }
    };
    let mut probe = x.clone();
    probe.requires_grad = true;
    let analytic = eval(probe)?.1.unwrap_or_default();

    let mut worst = 0.0f64;
    for i in 0..x.numel() {
        let mut plus = x.clone();
        plus.requires_grad = false;
        plus.data_mut()[i] += eps;
        let mut minus = x.clone();
        minus.requires_grad = false;
        minus.data_mut()[i] -= eps;
        let numeric = (eval(plus)?.0 - eval(minus)?.0) / (2.0 * eps);
        worst = worst.max(relative_error(analytic[i], numeric));
    }
    Ok(worst)
}

fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + 1e-12)
}

/// Same check for one named parameter of a store, driven through a
/// [`Session`]. `coords` restricts the perturbed coordinates (all when `None`).
pub fn param_gradient_check<F>(
    store: &ParamStore,
    name: &str,
    coords: Option<&[usize]>,
    eps: f64,
    f: F,
) -> Result<f64, NumericError>
where
    F: Fn(&mut Session) -> OpResult,
{
    let base = store
        .get(name)
        .ok_or_else(|| NumericError::MissingParam(name.to_string()))?;
    let analytic = {
        let mut s = Session::new(store, &[name]);
        let out = f(&mut s)?;
        let grads = s.backward(out)?;
        grads
            .into_iter()
            .find(|(n, _)| n == name)
            .map(|(_, g)| g)
            .unwrap_or_else(|| vec![0.0; base.numel()])
    };
    let all: Vec<usize>;
    let coords = match coords {
        Some(c) => c,
        None => {
            all = (0..base.numel()).collect();
            &all
        }
    };
    let eval_at = |i: usize, delta: f64| -> Result<f64, NumericError> {
        let mut perturbed = store.clone();
        let t = perturbed.get_mut(name).expect("checked above");
        t.data_mut()[i] += delta;
        let mut s = Session::frozen(&perturbed);
        let out = f(&mut s)?;
        Ok(s.graph.value(out).data()[0])
    };
    let mut worst = 0.0f64;
    for &i in coords {
        let numeric = (eval_at(i, eps)? - eval_at(i, -eps)?) / (2.0 * eps);
        worst = worst.max(relative_error(analytic[i], numeric));
    }
    Ok(worst)
}
