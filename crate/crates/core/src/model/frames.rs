use crate::error::{Error, Result};
use crate::numerics::Tensor;

/// Concatenates `stack` consecutive raw vectors every `stride` vectors.
///
/// Output frame `t` holds raw rows `[t*stride, t*stride + stack)`, zero-padded
/// past the end; there are `ceil(N / stride)` output frames.
pub fn stack_frames(features: &Tensor, stack: usize, stride: usize) -> Result<Tensor> {
    if stack == 0 || stride == 0 {
        return Err(Error::invalid("stack and stride must be at least 1"));
    }
    if features.ndim() != 2 {
        return Err(Error::invalid(format!(
            "features must be a matrix, got shape {:?}",
            features.shape()
        )));
    }
    let (n, d) = (features.rows(), features.cols());
    let frames = n.div_ceil(stride);
    let mut out = vec![0.0; frames * stack * d];
    for t in 0..frames {
        for j in 0..stack {
            let src = t * stride + j;
            if src >= n {
                break;
            }
            let dst = (t * stack + j) * d;
            out[dst..dst + d].copy_from_slice(features.row(src));
        }
    }
    Tensor::new(vec![frames, stack * d], out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(n: usize, d: usize) -> Tensor {
        Tensor::new(vec![n, d], (0..n * d).map(|v| v as f64 + 1.0).collect()).unwrap()
    }

    #[test]
    fn unit_stack_is_identity() {
        let f = ramp(5, 3);
        assert_eq!(stack_frames(&f, 1, 1).unwrap(), f);
    }

    #[test]
    fn eight_by_two_stack_eight_stride_three() {
        let f = ramp(8, 2);
        let s = stack_frames(&f, 8, 3).unwrap();
        assert_eq!(s.shape(), &[3, 16]);
        assert_eq!(s.row(0), f.data());
        // Frame 1 starts at raw row 3: rows 3..7 present, 3 rows of padding.
        assert_eq!(&s.row(1)[..10], &f.data()[6..16]);
        assert!(s.row(1)[10..].iter().all(|&v| v == 0.0));
        // Frame 2 starts at raw row 6.
        assert_eq!(&s.row(2)[..4], &f.data()[12..16]);
        assert!(s.row(2)[4..].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn short_input_is_tail_padded() {
        let f = ramp(7, 1);
        let s = stack_frames(&f, 8, 3).unwrap();
        assert_eq!(s.shape(), &[3, 8]);
        assert_eq!(s.row(0), &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 0.0]);
        assert_eq!(s.row(1), &[4.0, 5.0, 6.0, 7.0, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(s.row(2), &[7.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn rejects_zero_stack() {
        assert!(stack_frames(&ramp(2, 2), 0, 1).is_err());
        assert!(stack_frames(&ramp(2, 2), 1, 0).is_err());
    }
}
