//! Minimal neural-network kernel in 64-bit floats with exact analytic
//! gradients. Layers return caches on the forward pass; backward passes
//! return input gradients plus parameter gradients in the layer's
//! `params()` order, so composite networks concatenate gradient lists in
//! their documented flattening order.

pub mod attention;
pub mod brnn;
pub mod checkpoint;
pub mod conv;
pub mod dense;
pub mod encoder;
pub mod gradcheck;
pub mod lstm;
pub mod optim;
pub mod tensor;

pub use attention::Attention;
pub use brnn::Brnn;
pub use conv::Conv1d;
pub use dense::{Activation, Dense};
pub use encoder::StateEncoder;
pub use lstm::LstmCell;
pub use optim::{add_scaled, sgd_step, soft_update, zeros_like, Params};
pub use tensor::Tensor2;

#[derive(Debug, thiserror::Error)]
pub enum NnError {
    #[error("shape mismatch: expected {expected}, got {got}")]
    Shape { expected: String, got: String },
    #[error("checkpoint format error: {0}")]
    Checkpoint(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}
