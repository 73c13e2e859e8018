//! Training objectives. Each returns the loss value together with its
//! gradient with respect to the scores it was given.

pub mod ce;
pub mod ctc;
pub mod oracle;
pub mod rnnt;

use crate::numerics::Tensor;

pub use ce::{frame_ce_from_logits, frame_ce_loss, lm_ce_from_logits, lm_ce_loss, masked_ce_3d, Affine};
pub use ctc::{ctc_loss, ctc_min_frames};
pub use rnnt::{rnnt_lattice, rnnt_loss, LogLattice};

#[derive(Debug, Clone, PartialEq)]
pub struct LossOutput {
    pub value: f64,
    /// Same shape as the scores passed in.
    pub grad_logits: Tensor,
}
