use super::LossOutput;
use crate::error::{Error, Result};
use crate::numerics::ops::{log_add, log_softmax_rows};
use crate::numerics::Tensor;

/// Frames needed to emit `targets`: one per label plus a separating blank
/// between every pair of equal neighbours.
pub fn ctc_min_frames(targets: &[usize]) -> usize {
    targets.len() + targets.windows(2).filter(|w| w[0] == w[1]).count()
}

/// Connectionist temporal classification loss over `logits: T×(K+1)`.
pub fn ctc_loss(logits: &Tensor, targets: &[usize], blank: usize) -> Result<LossOutput> {
    if logits.ndim() != 2 {
        return Err(Error::invalid(format!(
            "ctc logits must be T×(K+1), got {:?}",
            logits.shape()
        )));
    }
    let (tn, v) = (logits.rows(), logits.cols());
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
    let required = ctc_min_frames(targets);
    if tn < required {
        return Err(Error::SequenceTooShort { frames: tn, required });
    }
    if !logits.all_finite() {
        return Err(Error::NonFinite("ctc_loss"));
    }

    let lp = log_softmax_rows(logits.data(), v);
    let ext: Vec<usize> = std::iter::once(blank)
        .chain(targets.iter().flat_map(|&y| [y, blank]))
        .collect();
    let s_len = ext.len();
    // Skipping over a blank is allowed only between distinct labels.
    let can_skip = |s: usize| s >= 2 && ext[s] != blank && ext[s] != ext[s - 2];

    let ninf = f64::NEG_INFINITY;
    let mut alpha = vec![ninf; tn * s_len];
    alpha[0] = lp[blank];
    if s_len > 1 {
        alpha[1] = lp[ext[1]];
    }
    for t in 1..tn {
        for s in 0..s_len {
            let prev = &alpha[(t - 1) * s_len..t * s_len];
            let mut acc = prev[s];
            if s >= 1 {
                acc = log_add(acc, prev[s - 1]);
            }
            if can_skip(s) {
                acc = log_add(acc, prev[s - 2]);
            }
            alpha[t * s_len + s] = acc + lp[t * v + ext[s]];
        }
    }
    let last = &alpha[(tn - 1) * s_len..];
    let log_likelihood = if s_len > 1 {
        log_add(last[s_len - 1], last[s_len - 2])
    } else {
        last[0]
    };
    if !log_likelihood.is_finite() {
        return Err(Error::NonFinite("ctc_loss"));
    }

    // beta excludes the emission at its own frame.
    let mut beta = vec![ninf; tn * s_len];
    beta[(tn - 1) * s_len + s_len - 1] = 0.0;
    if s_len > 1 {
        beta[(tn - 1) * s_len + s_len - 2] = 0.0;
    }
    for t in (0..tn - 1).rev() {
        for s in 0..s_len {
            let next = |s2: usize| beta[(t + 1) * s_len + s2] + lp[(t + 1) * v + ext[s2]];
            let mut acc = next(s);
            if s + 1 < s_len {
                acc = log_add(acc, next(s + 1));
            }
            if s + 2 < s_len && can_skip(s + 2) {
                acc = log_add(acc, next(s + 2));
            }
            beta[t * s_len + s] = acc;
        }
    }

    let mut grad = vec![0.0; tn * v];
    for t in 0..tn {
        let mut occ = vec![0.0; v];
        for s in 0..s_len {
            let a = alpha[t * s_len + s];
            let b = beta[t * s_len + s];
            if a.is_finite() && b.is_finite() {
                occ[ext[s]] += (a + b - log_likelihood).exp();
            }
        }
        let row = &lp[t * v..(t + 1) * v];
        let total: f64 = occ.iter().sum();
        for k in 0..v {
            grad[t * v + k] = row[k].exp() * total - occ[k];
        }
    }
    Ok(LossOutput {
        value: -log_likelihood,
        grad_logits: Tensor::new(vec![tn, v], grad)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::loss::oracle::ctc_brute_force;
    use crate::numerics::{grad_check, log_softmax};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_logits(rng: &mut ChaCha8Rng, t: usize, v: usize) -> Tensor {
        Tensor::new(vec![t, v], (0..t * v).map(|_| rng.random_range(-2.0..2.0)).collect()).unwrap()
    }

    #[test]
    fn single_frame_single_label() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let logits = random_logits(&mut rng, 1, 2);
        let lp = log_softmax(&logits).unwrap();
        let out = ctc_loss(&logits, &[0], 1).unwrap();
        assert!((out.value + lp.at(&[0, 0])).abs() < 1e-14);
    }

    #[test]
    fn repeated_label_needs_separating_blank() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let logits = random_logits(&mut rng, 3, 3);
        let dp = ctc_loss(&logits, &[0, 0], 2).unwrap().value;
        let bf = ctc_brute_force(&logits, &[0, 0], 2).unwrap();
        assert!((dp - bf).abs() < 1e-10);
        // With three frames only "a Φ a" survives.
        let lp = log_softmax(&logits).unwrap();
        let path = lp.at(&[0, 0]) + lp.at(&[1, 2]) + lp.at(&[2, 0]);
        assert!((dp + path).abs() < 1e-12);
    }

    #[test]
    fn too_short_reports_requirement() {
        let logits = Tensor::zeros(&[2, 3]);
        match ctc_loss(&logits, &[0, 0], 2) {
            Err(Error::SequenceTooShort { frames: 2, required: 3 }) => {}
            other => panic!("unexpected {other:?}"),
        }
        assert_eq!(ctc_min_frames(&[1, 1, 2, 2, 2]), 8);
    }

    #[test]
    fn empty_target_is_all_blank() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let logits = random_logits(&mut rng, 4, 3);
        let lp = log_softmax(&logits).unwrap();
        let expected: f64 = (0..4).map(|t| -lp.at(&[t, 2])).sum();
        assert!((ctc_loss(&logits, &[], 2).unwrap().value - expected).abs() < 1e-12);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let logits = random_logits(&mut rng, 6, 4);
        let targets = [1, 1, 0];
        let err = grad_check(
            |p| {
                let out = ctc_loss(&p[0], &targets, 3)?;
                Ok((out.value, vec![out.grad_logits.into_data()]))
            },
            &[logits],
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-4, "rel err {err}");
    }
}
