use super::LossOutput;
use crate::error::{Error, Result};
use crate::numerics::ops::{log_softmax_into, log_softmax_rows, matmul_kernel};
use crate::numerics::Tensor;
use crate::pretrain::LabelTensor;

/// A fully connected layer `x · weight + bias`.
#[derive(Debug, Clone, PartialEq)]
pub struct Affine {
    pub weight: Tensor,
    pub bias: Tensor,
}

impl Affine {
    pub fn zeros(input: usize, output: usize) -> Self {
        Self {
            weight: Tensor::zeros(&[input, output]),
            bias: Tensor::zeros(&[output]),
        }
    }

    pub fn apply(&self, x: &Tensor) -> Result<Tensor> {
        let (k, n) = (self.weight.rows(), self.weight.cols());
        if x.ndim() != 2 || x.cols() != k || self.bias.len() != n {
            return Err(Error::ShapeMismatch {
                op: "affine",
                left: x.shape().to_vec(),
                right: self.weight.shape().to_vec(),
            });
        }
        let mut out = matmul_kernel(x.data(), self.weight.data(), x.rows(), k, n);
        for row in out.chunks_exact_mut(n) {
            for (o, b) in row.iter_mut().zip(self.bias.data()) {
                *o += b;
            }
        }
        Tensor::new(vec![x.rows(), n], out)
    }
}

/// Mean cross-entropy over the selected `(row, class)` pairs of a
/// row-major score buffer; rows not selected get zero gradient.
fn selected_ce(data: &[f64], width: usize, picks: &[(usize, usize)]) -> Result<(f64, Vec<f64>)> {
    if picks.is_empty() {
        return Err(Error::Empty("cross-entropy selection"));
    }
    if data.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("cross-entropy"));
    }
    let n = picks.len() as f64;
    let mut grad = vec![0.0; data.len()];
    let mut total = 0.0;
    let mut lp = vec![0.0; width];
    for &(row, class) in picks {
        if class >= width {
            return Err(Error::TokenOutOfRange { id: class, limit: width });
        }
        let src = &data[row * width..(row + 1) * width];
        log_softmax_into(src, &mut lp);
        total -= lp[class];
        let g = &mut grad[row * width..(row + 1) * width];
        for k in 0..width {
            g[k] += lp[k].exp() / n;
        }
        g[class] -= 1.0 / n;
    }
    Ok((total / n, grad))
}

/// Frame-level cross-entropy on `logits: T×(K+1)`, averaged over frames.
pub fn frame_ce_from_logits(logits: &Tensor, frame_targets: &[usize]) -> Result<LossOutput> {
    if logits.ndim() != 2 || logits.rows() != frame_targets.len() {
        return Err(Error::ShapeMismatch {
            op: "frame_ce",
            left: logits.shape().to_vec(),
            right: vec![frame_targets.len()],
        });
    }
    let picks: Vec<(usize, usize)> = frame_targets.iter().copied().enumerate().collect();
    let (value, grad) = selected_ce(logits.data(), logits.cols(), &picks)?;
    Ok(LossOutput {
        value,
        grad_logits: Tensor::new(logits.shape().to_vec(), grad)?,
    })
}

/// Encoder classification loss: an extra fully connected layer over the
/// encoder output, then frame cross-entropy. The gradient is with respect to
/// that layer's output scores.
pub fn frame_ce_loss(enc_out: &Tensor, fc: &Affine, frame_targets: &[usize]) -> Result<LossOutput> {
    frame_ce_from_logits(&fc.apply(enc_out)?, frame_targets)
}

/// Cross-entropy over the masked cells of a label tensor, averaged over
/// those cells.
pub fn masked_ce_3d(logits: &Tensor, label: &LabelTensor) -> Result<LossOutput> {
    if logits.shape() != label.shape() {
        return Err(Error::ShapeMismatch {
            op: "masked_ce_3d",
            left: logits.shape().to_vec(),
            right: label.shape().to_vec(),
        });
    }
    let picks: Vec<(usize, usize)> = label.masked_cells().collect();
    if picks.is_empty() {
        return Err(Error::Empty("masked_ce_3d mask"));
    }
    let (value, grad) = selected_ce(logits.data(), logits.last_dim(), &picks)?;
    Ok(LossOutput {
        value,
        grad_logits: Tensor::new(logits.shape().to_vec(), grad)?,
    })
}

/// Next-token cross-entropy on prediction-network scores `(U+1)×(K+1)`:
/// row `u` predicts `targets[u]`; the last row has no successor and is
/// ignored.
pub fn lm_ce_from_logits(logits: &Tensor, targets: &[usize]) -> Result<LossOutput> {
    if targets.is_empty() {
        return Err(Error::Empty("lm_ce_loss targets"));
    }
    if logits.ndim() != 2 || logits.rows() != targets.len() + 1 {
        return Err(Error::ShapeMismatch {
            op: "lm_ce",
            left: logits.shape().to_vec(),
            right: vec![targets.len() + 1],
        });
    }
    let picks: Vec<(usize, usize)> = targets.iter().copied().enumerate().collect();
    let (value, grad) = selected_ce(logits.data(), logits.cols(), &picks)?;
    Ok(LossOutput {
        value,
        grad_logits: Tensor::new(logits.shape().to_vec(), grad)?,
    })
}

pub fn lm_ce_loss(pred_out: &Tensor, fc: &Affine, targets: &[usize]) -> Result<LossOutput> {
    if targets.is_empty() {
        return Err(Error::Empty("lm_ce_loss targets"));
    }
    lm_ce_from_logits(&fc.apply(pred_out)?, targets)
}

/// Log-probabilities for a whole lattice; convenience for callers that only
/// need posteriors.
pub fn lattice_log_probs(logits: &Tensor) -> Tensor {
    Tensor::new(logits.shape().to_vec(), log_softmax_rows(logits.data(), logits.last_dim()))
        .expect("shape preserved")
}
