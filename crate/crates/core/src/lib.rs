//! Comment-quality filtering for danmaku (bullet-screen) video comments.
//!
//! The crate covers the offline half of the system:
//!
//! * [`corpus`]: crawler JSON and display XML formats, quality scores,
//! * [`preprocess`]: segmentation, stopwords, aggregation, labels, vocabulary,
//! * [`nn`]: the numeric layers of the sentence CNN and the Adam optimizer,
//! * [`classifier`]: model assembly, training, metrics, persistence and
//!   batch prediction,
//! * [`synth`]: a seeded synthetic corpus generator with known ground truth.
//!
//! Batch work (gradients, evaluation, prediction) runs on rayon when the
//! `parallel` feature is enabled and falls back to a plain loop otherwise.

pub mod classifier;
pub mod corpus;
pub mod nn;
pub mod par;
pub mod preprocess;
pub mod seed;
pub mod synth;

pub use classifier::{
    evaluate, init_model, predict_mask, train, Metrics, ModelConfig, ModelError, ModelParams,
    Pipeline, TrainConfig, TrainReport, TrainedModel,
};
pub use corpus::{Bullet, DanmakuFile, DisplayBullet, ScoredRecord};
pub use par::Execution;
pub use preprocess::{Label, LabeledExample, Lexicon, StopwordSet, Vocabulary};
