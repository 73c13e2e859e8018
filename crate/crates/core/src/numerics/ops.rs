//! Plain (untaped) kernels shared by the tape, the losses and inference.

use super::Tensor;
use crate::error::{Error, Result};

/// `log Σ exp(x_i)`, max-shifted. All `-inf` input yields `-inf`.
pub fn logsumexp(xs: &[f64]) -> Result<f64> {
    if xs.is_empty() {
        return Err(Error::Empty("logsumexp"));
    }
    Ok(logsumexp_unchecked(xs))
}

pub(crate) fn logsumexp_unchecked(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// Two-term log-add, the hot path of every lattice recursion.
#[inline]
pub fn log_add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

pub(crate) fn log_softmax_into(x: &[f64], out: &mut [f64]) {
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = x.iter().map(|v| (v - max).exp()).sum();
    let norm = max + sum.ln();
    for (o, v) in out.iter_mut().zip(x) {
        *o = v - norm;
    }
}

/// Row-wise log-softmax over `width`-sized slices of `x`.
pub(crate) fn log_softmax_rows(x: &[f64], width: usize) -> Vec<f64> {
    let mut out = vec![0.0; x.len()];
    for (src, dst) in x.chunks_exact(width).zip(out.chunks_exact_mut(width)) {
        log_softmax_into(src, dst);
    }
    out
}

/// Log-softmax over the last axis.
pub fn log_softmax(x: &Tensor) -> Result<Tensor> {
    if !x.all_finite() {
        return Err(Error::NonFinite("log_softmax"));
    }
    let out = log_softmax_rows(x.data(), x.last_dim());
    Tensor::new(x.shape().to_vec(), out)
}

/// `c[m×n] = a[m×k] · b[k×n]` on raw row-major buffers.
pub(crate) fn matmul_kernel(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut c = vec![0.0; m * n];
    for i in 0..m {
        let crow = &mut c[i * n..(i + 1) * n];
        for (p, &av) in a[i * k..(i + 1) * k].iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for (cv, bv) in crow.iter_mut().zip(brow) {
                *cv += av * bv;
            }
        }
    }
    c
}

/// `x · W` for a single row vector.
pub fn vec_mat(x: &[f64], w: &Tensor) -> Vec<f64> {
    debug_assert_eq!(x.len(), w.rows());
    matmul_kernel(x, w.data(), 1, w.rows(), w.cols())
}

pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if a.ndim() != 2 || b.ndim() != 2 || a.shape()[1] != b.shape()[0] {
        return Err(Error::ShapeMismatch {
            op: "matmul",
            left: a.shape().to_vec(),
            right: b.shape().to_vec(),
        });
    }
    let (m, k, n) = (a.shape()[0], a.shape()[1], b.shape()[1]);
    Tensor::new(vec![m, n], matmul_kernel(a.data(), b.data(), m, k, n))
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in xs.iter().enumerate().skip(1) {
        if v > xs[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::LN_2;

    #[test]
    fn logsumexp_cases() {
        assert_eq!(logsumexp(&[1.25]).unwrap(), 1.25);
        assert!((logsumexp(&[0.0, 0.0]).unwrap() - LN_2).abs() < 1e-15);
        assert_eq!(logsumexp(&[f64::NEG_INFINITY, 0.0]).unwrap(), 0.0);
        assert_eq!(
            logsumexp(&[f64::NEG_INFINITY, f64::NEG_INFINITY]).unwrap(),
            f64::NEG_INFINITY
        );
        assert!(matches!(logsumexp(&[]), Err(Error::Empty(_))));
    }

    #[test]
    fn log_add_agrees_with_logsumexp() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let a: f64 = rng.random_range(-50.0..50.0);
            let b: f64 = rng.random_range(-50.0..50.0);
            assert!((log_add(a, b) - logsumexp(&[a, b]).unwrap()).abs() < 1e-12);
        }
        assert_eq!(log_add(f64::NEG_INFINITY, -3.0), -3.0);
    }

    #[test]
    fn log_softmax_uniform_and_shifted() {
        let t = Tensor::new(vec![2], vec![0.0, 0.0]).unwrap();
        let y = log_softmax(&t).unwrap();
        assert!(y.data().iter().all(|v| (v + LN_2).abs() < 1e-15));

        let t = Tensor::new(vec![2], vec![1000.0, 0.0]).unwrap();
        let y = log_softmax(&t).unwrap();
        assert!(y.data()[0].abs() < 1e-12);
        assert!((y.data()[1] + 1000.0).abs() < 1e-9);
    }

    #[test]
    fn log_softmax_normalizes() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let data: Vec<f64> = (0..5).map(|_| rng.random_range(-3.0..3.0)).collect();
        let y = log_softmax(&Tensor::new(vec![5], data).unwrap()).unwrap();
        let total: f64 = y.data().iter().map(|v| v.exp()).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn log_softmax_rejects_non_finite() {
        let t = Tensor::new(vec![2], vec![f64::NAN, 0.0]).unwrap();
        assert!(matches!(log_softmax(&t), Err(Error::NonFinite(_))));
    }

    #[test]
    fn matmul_small_cases() {
        let eye = Tensor::new(vec![2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let col = Tensor::new(vec![2, 1], vec![3.0, 4.0]).unwrap();
        assert_eq!(matmul(&eye, &col).unwrap().data(), &[3.0, 4.0]);
        let row = Tensor::new(vec![1, 2], vec![1.0, 2.0]).unwrap();
        assert_eq!(matmul(&row, &col).unwrap().data(), &[11.0]);
        match matmul(&col, &col) {
            Err(Error::ShapeMismatch { left, right, .. }) => {
                assert_eq!(left, vec![2, 1]);
                assert_eq!(right, vec![2, 1]);
            }
            other => panic!("expected shape mismatch, got {other:?}"),
        }
    }

    #[test]
    fn argmax_breaks_ties_low() {
        assert_eq!(argmax(&[0.5, 0.5, 0.1]), 0);
        assert_eq!(argmax(&[0.1, 0.5, 0.5]), 1);
    }
}
