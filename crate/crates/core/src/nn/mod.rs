//! Numeric kernel for the sentence CNN: embedding lookup, narrow
//! convolution with max-over-time pooling, dropout, dense softmax head,
//! cross entropy and Adam.
//!
//! All arithmetic is `f64`.

mod adam;
mod layers;
mod tensor;

pub use adam::{adam_step, AdamState};
pub use layers::{
    conv_max, conv_max_gather, cross_entropy, dense, dense_softmax, dropout, embed_lookup,
    softmax, ConvMax, PROB_FLOOR,
};
pub(crate) use layers::matvec;
pub use tensor::Tensor2;
pub(crate) use tensor::axpy;

use thiserror::Error;

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum NnError {
    #[error("index {index} out of range for {len} rows")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("sequence of length {len} is shorter than filter width {width}")]
    WindowTooWide { len: usize, width: usize },
    #[error("shape mismatch: expected {expected}, got {actual}")]
    ShapeMismatch { expected: usize, actual: usize },
}
