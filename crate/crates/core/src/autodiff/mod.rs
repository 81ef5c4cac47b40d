//! Dense tensors, a reverse-mode tape, optimizers and parameter checkpoints.

pub mod optim;
pub mod params;
pub mod tape;
pub mod tensor;

pub use optim::{clip_grad_norm, sgd_step, RmsProp, RmsPropConfig};
pub use params::{ParamId, ParamStore};
pub use tape::{sigmoid, Gradients, Tape, Var};
pub use tensor::Tensor;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum AutodiffError {
    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    ShapeMismatch { op: &'static str, left: (usize, usize), right: (usize, usize) },
    #[error("non-finite value produced by {op}")]
    NonFiniteValue { op: &'static str },
    #[error("loss is not recorded on this tape")]
    DisconnectedLoss,
    #[error("loss must be 1x1, got {shape:?}")]
    NotScalar { shape: (usize, usize) },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}
