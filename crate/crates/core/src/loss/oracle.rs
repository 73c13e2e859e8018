//! Path-enumeration references for the lattice losses.
//!
//! These work in the probability domain with direct softmax evaluation and
//! share no code with the dynamic programs they check.

use crate::error::{Error, Result};
use crate::numerics::Tensor;

/// Largest `T + U` accepted by [`rnnt_brute_force`].
pub const RNNT_ENUMERATION_LIMIT: usize = 14;
/// Largest number of frame paths `(K+1)^T` accepted by [`ctc_brute_force`].
pub const CTC_ENUMERATION_LIMIT: usize = 2_000_000;

fn softmax(row: &[f64]) -> Vec<f64> {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = row.iter().map(|v| (v - max).exp()).collect();
    let z: f64 = e.iter().sum();
    e.into_iter().map(|v| v / z).collect()
}

/// Every monotonic lattice path as its symbol sequence (blank or label),
/// each ending with the final blank.
pub fn rnnt_paths(frames: usize, labels: usize) -> Vec<Vec<bool>> {
    fn walk(t: usize, u: usize, frames: usize, labels: usize, cur: &mut Vec<bool>, out: &mut Vec<Vec<bool>>) {
        if t == frames - 1 && u == labels {
            cur.push(false);
            out.push(cur.clone());
            cur.pop();
            return;
        }
        if t + 1 < frames {
            cur.push(false);
            walk(t + 1, u, frames, labels, cur, out);
            cur.pop();
        }
        if u < labels {
            cur.push(true);
            walk(t, u + 1, frames, labels, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    if frames > 0 {
        walk(0, 0, frames, labels, &mut Vec::new(), &mut out);
    }
    out
}

/// `-log P(y|x)` by summing the probability of every lattice path.
pub fn rnnt_brute_force(logits: &Tensor, targets: &[usize], blank: usize) -> Result<f64> {
    if logits.ndim() != 3 || logits.shape()[1] != targets.len() + 1 {
        return Err(Error::invalid(format!(
            "logits {:?} do not fit {} targets",
            logits.shape(),
            targets.len()
        )));
    }
    let (tn, u1, v) = (logits.shape()[0], logits.shape()[1], logits.shape()[2]);
    if tn + targets.len() > RNNT_ENUMERATION_LIMIT {
        return Err(Error::invalid(format!(
            "T + U = {} exceeds the enumeration bound {RNNT_ENUMERATION_LIMIT}",
            tn + targets.len()
        )));
    }
    if blank >= v || targets.iter().any(|&y| y >= v || y == blank) {
        return Err(Error::invalid("target or blank id out of range"));
    }
    let probs: Vec<Vec<f64>> = logits.data().chunks_exact(v).map(softmax).collect();
    let mut total = 0.0;
    for path in rnnt_paths(tn, targets.len()) {
        let (mut t, mut u, mut p) = (0, 0, 1.0);
        for emit in path {
            let cell = &probs[t * u1 + u];
            if emit {
                p *= cell[targets[u]];
                u += 1;
            } else {
                p *= cell[blank];
                t += 1;
            }
        }
        total += p;
    }
    Ok(-total.ln())
}

/// `-log P(y|x)` for CTC by visiting all `(K+1)^T` frame labelings.
pub fn ctc_brute_force(logits: &Tensor, targets: &[usize], blank: usize) -> Result<f64> {
    if logits.ndim() != 2 {
        return Err(Error::invalid("ctc logits must be a matrix"));
    }
    let (tn, v) = (logits.rows(), logits.cols());
    let count = (v as f64).powi(tn as i32);
    if count > CTC_ENUMERATION_LIMIT as f64 {
        return Err(Error::invalid(format!(
            "{count} paths exceed the enumeration bound {CTC_ENUMERATION_LIMIT}"
        )));
    }
    let probs: Vec<Vec<f64>> = logits.data().chunks_exact(v).map(softmax).collect();
    let mut labels = vec![0usize; tn];
    let mut total = 0.0;
    loop {
        let mut collapsed = Vec::new();
        let mut prev = None;
        for &k in &labels {
            if Some(k) != prev && k != blank {
                collapsed.push(k);
            }
            prev = Some(k);
        }
        if collapsed == targets {
            total += labels.iter().enumerate().map(|(t, &k)| probs[t][k]).product::<f64>();
        }
        // Odometer increment.
        let mut pos = 0;
        loop {
            if pos == tn {
                return Ok(-total.ln());
            }
            labels[pos] += 1;
            if labels[pos] < v {
                break;
            }
            labels[pos] = 0;
            pos += 1;
        }
    }
}
