use super::Tensor;
use crate::error::{Error, Result};

/// Compares analytic gradients against central finite differences.
///
/// `f` returns the scalar value and one gradient buffer per input tensor.
/// The result is the largest `|analytic - numeric| / max(|analytic|, |numeric|, 1e-8)`
/// over every coordinate of every input.
pub fn grad_check<F>(mut f: F, params: &[Tensor], eps: f64) -> Result<f64>
where
    F: FnMut(&[Tensor]) -> Result<(f64, Vec<Vec<f64>>)>,
{
    if eps.is_nan() || eps <= 0.0 {
        return Err(Error::invalid("finite-difference step must be positive"));
    }
    let (value, analytic) = f(params)?;
    if !value.is_finite() {
        return Err(Error::NonFinite("grad_check"));
    }
    if analytic.len() != params.len() {
        return Err(Error::invalid(format!(
            "expected {} gradient buffers, got {}",
            params.len(),
            analytic.len()
        )));
    }

    let mut work = params.to_vec();
    let mut worst: f64 = 0.0;
    for (p, grad) in analytic.iter().enumerate() {
        if grad.len() != params[p].len() {
            return Err(Error::ShapeMismatch {
                op: "grad_check",
                left: params[p].shape().to_vec(),
                right: vec![grad.len()],
            });
        }
        for i in 0..params[p].len() {
            let orig = params[p].data()[i];
            work[p].data_mut()[i] = orig + eps;
            let (plus, _) = f(&work)?;
            work[p].data_mut()[i] = orig - eps;
            let (minus, _) = f(&work)?;
            work[p].data_mut()[i] = orig;
            if !plus.is_finite() || !minus.is_finite() {
                return Err(Error::NonFinite("grad_check"));
            }
            let numeric = (plus - minus) / (2.0 * eps);
            let a = grad[i];
            let denom = a.abs().max(numeric.abs()).max(1e-8);
            worst = worst.max((a - numeric).abs() / denom);
        }
    }
    Ok(worst)
}
