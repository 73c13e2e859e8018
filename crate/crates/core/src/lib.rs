//! A desk-scale laboratory for training RNN transducers.
//!
//! The crate bundles everything needed to compare initialization strategies
//! for transducer training on synthetic speech-like corpora:
//!
//! * [`numerics`]: tensors and reverse-mode differentiation.
//! * [`model`]: LSTM encoder, LSTM prediction network and additive joint network.
//! * [`loss`]: transducer, CTC and cross-entropy objectives with analytic gradients.
//! * [`alignment`]: word spans to frame-level targets.
//! * [`pretrain`]: label tensors and the pre-training schedules.
//! * [`decoding`]: greedy and beam search, emission-delay statistics.
//! * [`harness`]: corpus generation, metrics and the experiment runner.

pub mod alignment;
pub mod decoding;
pub mod error;
pub mod harness;
pub mod loss;
pub mod model;
pub mod numerics;
pub mod pretrain;

pub use error::{Error, Result};
