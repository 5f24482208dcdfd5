use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{ModelConfig, ModelError};
use crate::nn::{
    axpy, conv_max_gather, cross_entropy, dense, dropout, matvec, softmax, ConvMax, NnError,
    Tensor2,
};

/// One filter bank: all feature maps of a single width.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvBank {
    pub width: usize,
    /// `[width*d x m]`
    pub w: Tensor2,
    pub b: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub config: ModelConfig,
    /// `[V x d]`
    pub embedding: Tensor2,
    pub convs: Vec<ConvBank>,
    /// `[(|widths|*m) x 2]`
    pub dense_w: Tensor2,
    pub dense_b: Vec<f64>,
}

pub const NUM_CLASSES: usize = 2;

/// Seeded initialisation: embeddings uniform in ±0.25, weights Glorot
/// uniform, biases zero.
pub fn init_model(cfg: &ModelConfig) -> Result<ModelParams, ModelError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let d = cfg.embed_dim;
    let m = cfg.feature_maps;

    let mut uniform = |rows: usize, cols: usize, a: f64| {
        let data = (0..rows * cols).map(|_| rng.random_range(-a..a)).collect();
        Tensor2::from_vec(rows, cols, data).expect("length matches shape")
    };
    let glorot = |fan_in: usize, fan_out: usize| (6.0 / (fan_in + fan_out) as f64).sqrt();

    let embedding = uniform(cfg.vocab_size, d, 0.25);
    let convs = cfg
        .filter_widths
        .iter()
        .map(|&h| ConvBank {
            width: h,
            w: uniform(h * d, m, glorot(h * d, m)),
            b: vec![0.0; m],
        })
        .collect();
    let k = cfg.feature_len();
    let dense_w = uniform(k, NUM_CLASSES, glorot(k, NUM_CLASSES));

    Ok(ModelParams {
        config: cfg.clone(),
        embedding,
        convs,
        dense_w,
        dense_b: vec![0.0; NUM_CLASSES],
    })
}

impl ModelParams {
    /// Mutable views of every parameter tensor in a fixed order: embedding,
    /// then `(W, b)` per filter bank, then dense `W`, dense `b`.
    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = vec![self.embedding.as_mut_slice()];
        for bank in &mut self.convs {
            out.push(bank.w.as_mut_slice());
            out.push(&mut bank.b);
        }
        out.push(self.dense_w.as_mut_slice());
        out.push(&mut self.dense_b);
        out
    }

    pub fn tensors(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = vec![self.embedding.as_slice()];
        for bank in &self.convs {
            out.push(bank.w.as_slice());
            out.push(&bank.b);
        }
        out.push(self.dense_w.as_slice());
        out.push(&self.dense_b);
        out
    }

    pub fn tensor_sizes(&self) -> Vec<usize> {
        self.tensors().iter().map(|t| t.len()).collect()
    }

    pub fn num_parameters(&self) -> usize {
        self.tensor_sizes().iter().sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|v| v.is_finite()))
    }
}

/// Everything `backward` needs from one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    pub ids: Vec<usize>,
    pub convs: Vec<ConvMax>,
    /// Concatenated pooled features, before dropout.
    pub pooled: Vec<f64>,
    /// Dropout multipliers (0 or `1/(1-rate)`; all ones at inference).
    pub mask: Vec<f64>,
    pub dropped: Vec<f64>,
    pub probs: Vec<f64>,
}

/// Runs the network on one encoded sentence.
pub fn forward<R: Rng + ?Sized>(
    model: &ModelParams,
    ids: &[usize],
    training: bool,
    rng: &mut R,
) -> Result<(Vec<f64>, ForwardCache), ModelError> {
    let mut convs = Vec::with_capacity(model.convs.len());
    let mut pooled = Vec::with_capacity(model.config.feature_len());
    for bank in &model.convs {
        let c = conv_max_gather(ids, &model.embedding, &bank.w, &bank.b)?;
        pooled.extend_from_slice(&c.values);
        convs.push(c);
    }
    let (dropped, mask) = dropout(&pooled, model.config.dropout_rate, rng, training);
    let probs = softmax(&dense(&dropped, &model.dense_w, &model.dense_b)?);
    Ok((
        probs.clone(),
        ForwardCache {
            ids: ids.to_vec(),
            convs,
            pooled,
            mask,
            dropped,
            probs,
        },
    ))
}

/// Inference-mode class probabilities.
pub fn predict_probs(model: &ModelParams, ids: &[usize]) -> Result<Vec<f64>, ModelError> {
    // The RNG is never drawn from at inference.
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    forward(model, ids, false, &mut rng).map(|(p, _)| p)
}

/// Loss gradients. Embedding gradients are kept per touched row.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub embedding: BTreeMap<usize, Vec<f64>>,
    pub conv_w: Vec<Tensor2>,
    pub conv_b: Vec<Vec<f64>>,
    pub dense_w: Tensor2,
    pub dense_b: Vec<f64>,
}

impl Gradients {
    pub fn zeros_like(model: &ModelParams) -> Self {
        Self {
            embedding: BTreeMap::new(),
            conv_w: model
                .convs
                .iter()
                .map(|b| Tensor2::zeros(b.w.rows(), b.w.cols()))
                .collect(),
            conv_b: model.convs.iter().map(|b| vec![0.0; b.b.len()]).collect(),
            dense_w: Tensor2::zeros(model.dense_w.rows(), model.dense_w.cols()),
            dense_b: vec![0.0; model.dense_b.len()],
        }
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        for (row, g) in &other.embedding {
            match self.embedding.get_mut(row) {
                Some(acc) => axpy(1.0, g, acc),
                None => {
                    self.embedding.insert(*row, g.clone());
                }
            }
        }
        for (a, b) in self.conv_w.iter_mut().zip(&other.conv_w) {
            axpy(1.0, b.as_slice(), a.as_mut_slice());
        }
        for (a, b) in self.conv_b.iter_mut().zip(&other.conv_b) {
            axpy(1.0, b, a);
        }
        axpy(1.0, other.dense_w.as_slice(), self.dense_w.as_mut_slice());
        axpy(1.0, &other.dense_b, &mut self.dense_b);
    }

    pub fn scale(&mut self, s: f64) {
        let scale = |xs: &mut [f64]| xs.iter_mut().for_each(|x| *x *= s);
        self.embedding.values_mut().for_each(|g| scale(g));
        self.conv_w.iter_mut().for_each(|g| scale(g.as_mut_slice()));
        self.conv_b.iter_mut().for_each(|g| scale(g));
        scale(self.dense_w.as_mut_slice());
        scale(&mut self.dense_b);
    }

    /// Dense buffers in `ModelParams::tensors` order.
    pub fn to_dense(&self, model: &ModelParams) -> Vec<Vec<f64>> {
        let d = model.embedding.cols();
        let mut emb = vec![0.0; model.embedding.as_slice().len()];
        for (&row, g) in &self.embedding {
            emb[row * d..(row + 1) * d].copy_from_slice(g);
        }
        let mut out = vec![emb];
        for (w, b) in self.conv_w.iter().zip(&self.conv_b) {
            out.push(w.as_slice().to_vec());
            out.push(b.clone());
        }
        out.push(self.dense_w.as_slice().to_vec());
        out.push(self.dense_b.clone());
        out
    }

    pub fn max_abs(&self) -> f64 {
        let mut m: f64 = 0.0;
        let mut see = |xs: &[f64]| xs.iter().for_each(|x| m = m.max(x.abs()));
        self.embedding.values().for_each(|g| see(g));
        self.conv_w.iter().for_each(|g| see(g.as_slice()));
        self.conv_b.iter().for_each(|g| see(g));
        see(self.dense_w.as_slice());
        see(&self.dense_b);
        m
    }
}

/// Gradients of the cross-entropy loss for one example.
pub fn backward(model: &ModelParams, cache: &ForwardCache, label: usize) -> Gradients {
    let mut grads = Gradients::zeros_like(model);
    backward_into(model, cache, label, &mut grads);
    grads
}

/// Adds the gradients of one example into `grads`.
pub fn backward_into(model: &ModelParams, cache: &ForwardCache, label: usize, grads: &mut Gradients) {
    let d = model.embedding.cols();

    let mut dlogits = cache.probs.clone();
    dlogits[label] -= 1.0;
    axpy(1.0, &dlogits, &mut grads.dense_b);
    for (r, &z) in cache.dropped.iter().enumerate() {
        if z != 0.0 {
            axpy(z, &dlogits, grads.dense_w.row_mut(r));
        }
    }

    let dpooled: Vec<f64> = matvec(&model.dense_w, &dlogits)
        .into_iter()
        .zip(&cache.mask)
        .map(|(g, s)| g * s)
        .collect();

    let m = model.config.feature_maps;
    for (bi, (bank, conv)) in model.convs.iter().zip(&cache.convs).enumerate() {
        let gw = &mut grads.conv_w[bi];
        let gb = &mut grads.conv_b[bi];
        for k in 0..m {
            let g = dpooled[bi * m + k];
            // relu'(x) = 0 for x <= 0; the pooled value is the rectified max.
            if g == 0.0 || conv.values[k] <= 0.0 {
                continue;
            }
            gb[k] += g;
            let pos = conv.argmax[k];
            for j in 0..bank.width {
                let tok = cache.ids[pos + j];
                let x = model.embedding.row(tok);
                let de = grads.embedding.entry(tok).or_insert_with(|| vec![0.0; d]);
                for a in 0..d {
                    let r = j * d + a;
                    let cur = gw.get(r, k);
                    gw.set(r, k, cur + g * x[a]);
                    de[a] += g * bank.w.get(r, k);
                }
            }
        }
    }
}

/// Loss of one example, convenience for checks.
pub fn example_loss<R: Rng + ?Sized>(
    model: &ModelParams,
    ids: &[usize],
    label: usize,
    training: bool,
    rng: &mut R,
) -> Result<f64, ModelError> {
    forward(model, ids, training, rng).map(|(p, _)| cross_entropy(&p, label))
}

impl From<NnError> for ModelError {
    fn from(e: NnError) -> Self {
        ModelError::Nn(e)
    }
}
