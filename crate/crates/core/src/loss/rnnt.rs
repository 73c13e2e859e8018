use super::LossOutput;
use crate::error::{Error, Result};
use crate::numerics::ops::{log_add, log_softmax_rows};
use crate::numerics::Tensor;

/// Log-domain forward/backward variables over the `T×(U+1)` lattice.
///
/// `alpha[t,u]` is the log-probability of emitting `y_1..y_u` while reaching
/// frame `t`; `beta[t,u]` the log-probability of finishing from there,
/// including the emission taken at `(t,u)`. `alpha + beta` at a cell is the
/// log-mass of the paths through that cell. Each step of a path raises
/// `t + u` by one, so every path crosses each anti-diagonal `t + u = n`
/// exactly once and the mass on each anti-diagonal sums to `log_likelihood`.
#[derive(Debug, Clone)]
pub struct LogLattice {
    pub alpha: Tensor,
    pub beta: Tensor,
    pub log_probs: Tensor,
    pub log_likelihood: f64,
}

pub(crate) fn validate_lattice_input(logits: &Tensor, targets: &[usize], blank: usize) -> Result<(usize, usize, usize)> {
    if logits.ndim() != 3 {
        return Err(Error::invalid(format!(
            "transducer logits must be T×(U+1)×(K+1), got {:?}",
            logits.shape()
        )));
    }
    let (t, u1, v) = (logits.shape()[0], logits.shape()[1], logits.shape()[2]);
    if u1 != targets.len() + 1 {
        return Err(Error::ShapeMismatch {
            op: "rnnt_loss",
            left: logits.shape().to_vec(),
            right: vec![targets.len()],
        });
    }
    if blank >= v {
        return Err(Error::TokenOutOfRange { id: blank, limit: v });
    }
    for &y in targets {
        if y == blank {
            return Err(Error::invalid("blank may not appear in the target sequence"));
        }
        if y >= v {
            return Err(Error::TokenOutOfRange { id: y, limit: v });
        }
    }
    if !logits.all_finite() {
        return Err(Error::NonFinite("rnnt_loss"));
    }
    Ok((t, u1, v))
}

/// Forward-backward over the transducer lattice.
pub fn rnnt_lattice(logits: &Tensor, targets: &[usize], blank: usize) -> Result<LogLattice> {
    let (tn, u1, v) = validate_lattice_input(logits, targets, blank)?;
    let lp = log_softmax_rows(logits.data(), v);
    let at = |t: usize, u: usize, k: usize| lp[(t * u1 + u) * v + k];
    let un = u1 - 1;

    let mut alpha = vec![f64::NEG_INFINITY; tn * u1];
    alpha[0] = 0.0;
    for t in 0..tn {
        for u in 0..u1 {
            if t == 0 && u == 0 {
                continue;
            }
            let from_blank = if t > 0 {
                alpha[(t - 1) * u1 + u] + at(t - 1, u, blank)
            } else {
                f64::NEG_INFINITY
            };
            let from_label = if u > 0 {
                alpha[t * u1 + u - 1] + at(t, u - 1, targets[u - 1])
            } else {
                f64::NEG_INFINITY
            };
            alpha[t * u1 + u] = log_add(from_blank, from_label);
        }
    }

    let mut beta = vec![f64::NEG_INFINITY; tn * u1];
    for t in (0..tn).rev() {
        for u in (0..u1).rev() {
            let by_blank = if t + 1 < tn {
                beta[(t + 1) * u1 + u] + at(t, u, blank)
            } else if u == un {
                at(t, u, blank)
            } else {
                f64::NEG_INFINITY
            };
            let by_label = if u < un {
                beta[t * u1 + u + 1] + at(t, u, targets[u])
            } else {
                f64::NEG_INFINITY
            };
            beta[t * u1 + u] = log_add(by_blank, by_label);
        }
    }

    let log_likelihood = alpha[(tn - 1) * u1 + un] + at(tn - 1, un, blank);
    Ok(LogLattice {
        alpha: Tensor::new(vec![tn, u1], alpha)?,
        beta: Tensor::new(vec![tn, u1], beta)?,
        log_probs: Tensor::new(vec![tn, u1, v], lp)?,
        log_likelihood,
    })
}

impl LogLattice {
    /// Number of anti-diagonals, `T + U`.
    pub fn num_diagonals(&self) -> usize {
        self.alpha.rows() + self.alpha.cols() - 1
    }

    /// `log Σ_{t+u=n} exp(alpha[t,u] + beta[t,u])`.
    pub fn diagonal_log_mass(&self, n: usize) -> f64 {
        let (tn, u1) = (self.alpha.rows(), self.alpha.cols());
        let terms: Vec<f64> = (0..tn)
            .filter(|&t| n >= t && n - t < u1)
            .map(|t| self.alpha.at(&[t, n - t]) + self.beta.at(&[t, n - t]))
            .collect();
        crate::numerics::ops::logsumexp_unchecked(&terms)
    }

    /// Expected count of each lattice transition: element `[t,u,k]` is the
    /// posterior probability that a path takes class `k` at `(t,u)`.
    /// Only blank and the next target carry mass.
    pub fn occupancy(&self, targets: &[usize], blank: usize) -> Tensor {
        let (tn, u1, v) = (
            self.log_probs.shape()[0],
            self.log_probs.shape()[1],
            self.log_probs.shape()[2],
        );
        let un = u1 - 1;
        let alpha = self.alpha.data();
        let beta = self.beta.data();
        let lp = self.log_probs.data();
        let ll = self.log_likelihood;
        let mut occ = vec![0.0; tn * u1 * v];
        for t in 0..tn {
            for u in 0..u1 {
                let a = alpha[t * u1 + u];
                let base = (t * u1 + u) * v;
                let next_blank = if t + 1 < tn {
                    beta[(t + 1) * u1 + u]
                } else if u == un {
                    0.0
                } else {
                    f64::NEG_INFINITY
                };
                occ[base + blank] = (a + lp[base + blank] + next_blank - ll).exp();
                if u < un {
                    let y = targets[u];
                    occ[base + y] = (a + lp[base + y] + beta[t * u1 + u + 1] - ll).exp();
                }
            }
        }
        Tensor::new(vec![tn, u1, v], occ).expect("lattice shape")
    }
}

/// Negative log-likelihood of `targets` under the transducer lattice, with
/// its exact gradient with respect to `logits`.
pub fn rnnt_loss(logits: &Tensor, targets: &[usize], blank: usize) -> Result<LossOutput> {
    let lattice = rnnt_lattice(logits, targets, blank)?;
    if !lattice.log_likelihood.is_finite() {
        return Err(Error::NonFinite("rnnt_loss"));
    }
    let occ = lattice.occupancy(targets, blank);
    let v = logits.last_dim();
    let mut grad = vec![0.0; logits.len()];
    for ((g, o), lp) in grad
        .chunks_exact_mut(v)
        .zip(occ.data().chunks_exact(v))
        .zip(lattice.log_probs.data().chunks_exact(v))
    {
        // d(-log P)/d log_prob = -occ; through log-softmax that becomes
        // softmax * Σocc - occ.
        let total: f64 = o.iter().sum();
        for k in 0..v {
            g[k] = lp[k].exp() * total - o[k];
        }
    }
    Ok(LossOutput {
        value: -lattice.log_likelihood,
        grad_logits: Tensor::new(logits.shape().to_vec(), grad)?,
    })
}
