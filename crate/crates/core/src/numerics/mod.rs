//! Dense `f64` tensors, a recorded-operation reverse-mode differentiator,
//! finite-difference checking and the Adam optimizer.

pub mod gradcheck;
pub mod ops;
pub mod optim;
pub mod params;
pub mod tape;
pub mod tensor;

pub use gradcheck::grad_check;
pub use ops::{argmax, log_softmax, logsumexp, matmul};
pub use optim::{Adam, AdamConfig};
pub use params::{xavier_uniform, ParamId, ParamSet};
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;
