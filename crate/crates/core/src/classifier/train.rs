use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::model::{backward_into, forward, predict_probs, Gradients, ModelParams};
use super::{ModelError, TrainConfig};
use crate::nn::{adam_step, cross_entropy, AdamState};
use crate::par::Execution;
use crate::preprocess::{encode, Label, LabeledExample, Vocabulary};
use crate::seed;

/// An example after vocabulary encoding.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncodedExample {
    pub ids: Vec<usize>,
    pub label: Label,
}

pub fn encode_examples(
    examples: &[LabeledExample],
    vocab: &Vocabulary,
    max_len: usize,
) -> Vec<EncodedExample> {
    examples
        .iter()
        .map(|e| EncodedExample {
            ids: encode(&e.tokens, vocab, max_len),
            label: e.label,
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    /// Of the examples predicted low-quality, the fraction that are.
    pub precision_negative: f64,
    /// Of the low-quality examples, the fraction predicted as such.
    pub recall_negative: f64,
    /// Mean cross entropy.
    pub loss: f64,
}

impl Metrics {
    /// Metrics from `(predicted_class_probabilities, true_label)` pairs.
    /// Undefined ratios (no predicted or no actual negatives) are reported
    /// as 0.
    pub fn from_predictions<'a, I>(pairs: I) -> Self
    where
        I: IntoIterator<Item = (&'a [f64], Label)>,
    {
        let (mut n, mut correct, mut tp, mut pred_neg, mut actual_neg) = (0usize, 0, 0, 0, 0);
        let mut loss = 0.0;
        for (probs, label) in pairs {
            let predicted = argmax(probs);
            n += 1;
            loss += cross_entropy(probs, label.class());
            if predicted == label {
                correct += 1;
            }
            if predicted == Label::Negative {
                pred_neg += 1;
                if label == Label::Negative {
                    tp += 1;
                }
            }
            if label == Label::Negative {
                actual_neg += 1;
            }
        }
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        Metrics {
            accuracy: ratio(correct, n),
            precision_negative: ratio(tp, pred_neg),
            recall_negative: ratio(tp, actual_neg),
            loss: if n == 0 { 0.0 } else { loss / n as f64 },
        }
    }
}

/// Predicted label; ties go to the positive class so the filter keeps
/// comments it cannot decide on.
pub fn argmax(probs: &[f64]) -> Label {
    if probs[Label::Negative.class()] > probs[Label::Positive.class()] {
        Label::Negative
    } else {
        Label::Positive
    }
}

pub fn evaluate(model: &ModelParams, examples: &[EncodedExample]) -> Result<Metrics, ModelError> {
    evaluate_with(model, examples, Execution::default())
}

pub fn evaluate_with(
    model: &ModelParams,
    examples: &[EncodedExample],
    exec: Execution,
) -> Result<Metrics, ModelError> {
    if examples.is_empty() {
        return Err(ModelError::EmptyDataset);
    }
    let probs = exec
        .map(examples, |e| predict_probs(model, &e.ids))
        .into_iter()
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Metrics::from_predictions(
        probs.iter().map(Vec::as_slice).zip(examples.iter().map(|e| e.label)),
    ))
}

/// Examples per gradient chunk. Fixed so that the reduction tree does not
/// depend on the thread count.
const GRAD_CHUNK: usize = 8;

/// Mean loss and mean gradient over a batch, with dropout active.
///
/// Example `i` draws its dropout mask from a generator seeded by
/// `seed::derive(seed, [i])`.
pub fn batch_gradients(
    model: &ModelParams,
    batch: &[&EncodedExample],
    seed: u64,
    exec: Execution,
) -> Result<(f64, Gradients), ModelError> {
    let partials = exec.map_chunks(batch, GRAD_CHUNK, |ci, chunk| {
        let mut grads = Gradients::zeros_like(model);
        let mut loss = 0.0;
        for (k, ex) in chunk.iter().enumerate() {
            let slot = (ci * GRAD_CHUNK + k) as u64;
            let mut rng = ChaCha8Rng::seed_from_u64(seed::derive(seed, &[slot]));
            let (probs, cache) = forward(model, &ex.ids, true, &mut rng)?;
            loss += cross_entropy(&probs, ex.label.class());
            backward_into(model, &cache, ex.label.class(), &mut grads);
        }
        Ok::<_, ModelError>((loss, grads))
    });

    let mut total = Gradients::zeros_like(model);
    let mut loss = 0.0;
    for part in partials {
        let (l, g) = part?;
        loss += l;
        total.add_assign(&g);
    }
    let n = batch.len().max(1) as f64;
    total.scale(1.0 / n);
    Ok((loss / n, total))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    /// Mean batch loss of this step; absent for the step-0 baseline.
    pub train_loss: Option<f64>,
    /// Test-set metrics, present on evaluation steps.
    pub test: Option<Metrics>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub records: Vec<StepRecord>,
    /// Test metrics after the last step, or training-set metrics when no
    /// test set was given.
    pub final_metrics: Metrics,
    pub steps: usize,
}

impl TrainReport {
    pub fn test_metrics_at(&self, step: usize) -> Option<Metrics> {
        self.records
            .iter()
            .find(|r| r.step == step)
            .and_then(|r| r.test)
    }

    pub fn to_json_lines(&self) -> String {
        self.records
            .iter()
            .map(|r| serde_json::to_string(r).expect("report serialization is infallible") + "\n")
            .collect()
    }
}

/// Mini-batch training with Adam.
///
/// Batches are drawn from epochs shuffled under `tcfg.seed`. The test set is
/// evaluated before the first step, every `eval_every` steps, and after the
/// last step.
pub fn train(
    model: ModelParams,
    train_set: &[EncodedExample],
    test_set: &[EncodedExample],
    tcfg: &TrainConfig,
) -> Result<(ModelParams, TrainReport), ModelError> {
    train_with(model, train_set, test_set, tcfg, Execution::default())
}

pub fn train_with(
    mut model: ModelParams,
    train_set: &[EncodedExample],
    test_set: &[EncodedExample],
    tcfg: &TrainConfig,
    exec: Execution,
) -> Result<(ModelParams, TrainReport), ModelError> {
    tcfg.validate()?;
    if train_set.is_empty() {
        return Err(ModelError::EmptyDataset);
    }
    let max_width = model.config.filter_widths.iter().copied().max().unwrap_or(1);
    if let Some(short) = train_set.iter().chain(test_set).find(|e| e.ids.len() < max_width) {
        return Err(crate::nn::NnError::WindowTooWide {
            len: short.ids.len(),
            width: max_width,
        }
        .into());
    }

    let mut adam = AdamState::new(&model.tensor_sizes());
    let mut order_rng = ChaCha8Rng::seed_from_u64(seed::derive(tcfg.seed, &[0]));
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    order.shuffle(&mut order_rng);
    let mut cursor = 0;

    let eval = |m: &ModelParams| -> Result<Option<Metrics>, ModelError> {
        if test_set.is_empty() {
            Ok(None)
        } else {
            evaluate_with(m, test_set, exec).map(Some)
        }
    };

    let mut records = vec![StepRecord {
        step: 0,
        train_loss: None,
        test: eval(&model)?,
    }];

    let mut batch: Vec<&EncodedExample> = Vec::with_capacity(tcfg.batch_size);
    for step in 1..=tcfg.max_steps {
        batch.clear();
        while batch.len() < tcfg.batch_size {
            if cursor == order.len() {
                order.shuffle(&mut order_rng);
                cursor = 0;
            }
            batch.push(&train_set[order[cursor]]);
            cursor += 1;
        }

        let step_seed = seed::derive(tcfg.seed, &[1, step as u64]);
        let (loss, grads) = batch_gradients(&model, &batch, step_seed, exec)?;
        let dense = grads.to_dense(&model);
        let dense_refs: Vec<&[f64]> = dense.iter().map(Vec::as_slice).collect();
        adam_step(&mut model.tensors_mut(), &dense_refs, &mut adam, tcfg.lr)?;

        let test = if step % tcfg.eval_every == 0 || step == tcfg.max_steps {
            eval(&model)?
        } else {
            None
        };
        records.push(StepRecord {
            step,
            train_loss: Some(loss),
            test,
        });
    }

    let final_metrics = match records.last().and_then(|r| r.test) {
        Some(m) => m,
        None => evaluate_with(&model, train_set, exec)?,
    };
    Ok((
        model,
        TrainReport {
            records,
            final_metrics,
            steps: tcfg.max_steps,
        },
    ))
}
