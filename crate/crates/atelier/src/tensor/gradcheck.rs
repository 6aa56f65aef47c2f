//! Central finite-difference verification of analytic gradients.

use super::{Graph, Tensor, Var};
use crate::error::{Error, Result};

/// Max relative error between the analytic gradient of `f` at `x` and a
/// central finite difference with the given step.
///
/// The error for one component is |analytic - numeric| divided by
/// max(|analytic|, |numeric|, 1e-8).
pub fn grad_check<F>(f: F, x: &Tensor, step: f64) -> Result<f64>
where
    F: Fn(&mut Graph, Var) -> Result<Var>,
{
    grad_check_multi(|g, vars| f(g, vars[0]), &[x.clone()], step)
}

/// [`grad_check`] over several input tensors at once.
pub fn grad_check_multi<F>(f: F, xs: &[Tensor], step: f64) -> Result<f64>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    let inputs: Vec<Tensor> = xs.iter().cloned().map(Tensor::with_grad).collect();

    let eval = |tensors: &[Tensor]| -> Result<f64> {
        let mut g = Graph::new();
        let vars: Vec<Var> = tensors.iter().map(|t| g.leaf(t)).collect();
        let out = f(&mut g, &vars)?;
        if g.data(out).len() != 1 {
            return Err(Error::NotScalar {
                op: "grad_check",
                shape: g.shape(out).to_vec(),
            });
        }
        Ok(g.value(out))
    };

    // Analytic pass.
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.leaf(t)).collect();
    let out = f(&mut g, &vars)?;
    if g.data(out).len() != 1 {
        return Err(Error::NotScalar {
            op: "grad_check",
            shape: g.shape(out).to_vec(),
        });
    }
    g.backward(out)?;
    let analytic: Vec<Vec<f64>> = vars
        .iter()
        .zip(&inputs)
        .map(|(&v, t)| g.grad(v).map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; t.numel()]))
        .collect();

    let mut worst: f64 = 0.0;
    let mut probe = inputs.clone();
    for (ti, t) in inputs.iter().enumerate() {
        for i in 0..t.numel() {
            probe[ti].data[i] = t.data[i] + step;
            let plus = eval(&probe)?;
            probe[ti].data[i] = t.data[i] - step;
            let minus = eval(&probe)?;
            probe[ti].data[i] = t.data[i];
            let numeric = (plus - minus) / (2.0 * step);
            let a = analytic[ti][i];
            let denom = a.abs().max(numeric.abs()).max(1e-8);
            worst = worst.max((a - numeric).abs() / denom);
        }
    }
    Ok(worst)
}
