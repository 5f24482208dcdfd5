//! The sentence CNN: embedding, multi-width convolution with max-over-time
//! pooling, dropout, and a two-class softmax head.

mod config;
mod io;
mod model;
mod predict;
mod train;

pub use config::{ModelConfig, TrainConfig};
pub use io::{load_model, save_model, TrainedModel, MODEL_MAGIC, MODEL_VERSION};
pub use model::{
    backward, backward_into, example_loss, forward, init_model, predict_probs, ConvBank,
    ForwardCache, Gradients, ModelParams, NUM_CLASSES,
};
pub use predict::{predict_mask, predict_mask_with, Pipeline};
pub use train::{
    argmax, batch_gradients, encode_examples, evaluate, evaluate_with, train, train_with,
    EncodedExample, Metrics, StepRecord, TrainReport,
};

use thiserror::Error;

use crate::nn::NnError;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("empty dataset")]
    EmptyDataset,
    #[error(transparent)]
    Nn(NnError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad model file: {0}")]
    Format(String),
}
