use super::{Graph, Tensor, Var};
use crate::error::{Error, Result};

/// Largest relative disagreement between an analytic gradient and central
/// differences: `max_i |ad_i − fd_i| / max(1, |fd_i|)`.
///
/// `f` returns the objective value and its analytic gradient at the given
/// parameters.
pub fn grad_check<F>(theta: &Tensor, eps: f64, mut f: F) -> Result<f64>
where
    F: FnMut(&Tensor) -> Result<(f64, Tensor)>,
{
    if !(eps > 0.0) || !eps.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "finite-difference step must be positive, got {}",
            eps
        )));
    }
    let (value, analytic) = f(theta)?;
    if !value.is_finite() || !analytic.is_finite() {
        return Err(Error::NonFinite("gradient check at base point".into()));
    }
    if analytic.shape() != theta.shape() {
        return Err(Error::Shape(format!(
            "gradient shape {:?} vs parameter shape {:?}",
            analytic.shape(),
            theta.shape()
        )));
    }
    let mut probe = theta.clone();
    let mut worst = 0.0f64;
    for i in 0..theta.len() {
        let x = theta.data()[i];
        probe.data_mut()[i] = x + eps;
        let up = f(&probe)?.0;
        probe.data_mut()[i] = x - eps;
        let down = f(&probe)?.0;
        probe.data_mut()[i] = x;
        if !up.is_finite() || !down.is_finite() {
            return Err(Error::NonFinite(format!(
                "gradient check at coordinate {}",
                i
            )));
        }
        let fd = (up - down) / (2.0 * eps);
        let err = (analytic.data()[i] - fd).abs() / fd.abs().max(1.0);
        worst = worst.max(err);
    }
    Ok(worst)
}

/// [`grad_check`] for a scalar objective built on a fresh [`Graph`] with
/// `theta` bound as parameter 0.
pub fn grad_check_graph<F>(theta: &Tensor, eps: f64, build: F) -> Result<f64>
where
    F: Fn(&mut Graph, Var) -> Result<Var>,
{
    grad_check(theta, eps, |t| {
        let mut g = Graph::new();
        let p = g.param(0, t)?;
        let root = build(&mut g, p)?;
        let value = g.value(root).item()?;
        g.backward(root)?;
        let grad = g
            .param_grad(0)
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(t.shape()));
        Ok((value, grad))
    })
}
