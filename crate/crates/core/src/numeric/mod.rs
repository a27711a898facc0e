//! Dense `f64` tensors, an eager reverse-mode autodiff graph, named parameter
//! stores and the binary checkpoint format.

mod checkpoint;
mod gradcheck;
mod graph;
pub mod kernels;
mod params;
mod tensor;

pub use checkpoint::{read_tensors, write_tensors, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use gradcheck::{finite_difference_check, param_gradient_check};
pub use graph::{Gradients, Graph, OpResult, Var};
pub use params::{ParamStore, Session};
pub use tensor::Tensor;

#[derive(Debug, thiserror::Error)]
pub enum NumericError {
    #[error("dimension error in {op} (node {node:?}): {detail}")]
    Shape {
        op: &'static str,
        node: Option<usize>,
        detail: String,
    },
    #[error("backward needs a scalar output, got shape {shape:?}")]
    NonScalar { shape: Vec<usize> },
    #[error("unknown parameter `{0}`")]
    MissingParam(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
