use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::model::{ConvBank, ModelParams, NUM_CLASSES};
use super::{ModelConfig, ModelError};
use crate::nn::Tensor2;
use crate::preprocess::Vocabulary;

pub const MODEL_MAGIC: &str = "smartbullets-model";
pub const MODEL_VERSION: u32 = 1;

/// Parameters together with the vocabulary their embedding rows refer to.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub params: ModelParams,
    pub vocab: Vocabulary,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    magic: String,
    version: u32,
    config: ModelConfig,
    vocab: Vec<String>,
    params: ParamsJson,
}

#[derive(Serialize, Deserialize)]
struct ParamsJson {
    #[serde(rename = "E")]
    embedding: Vec<Vec<f64>>,
    conv: BTreeMap<String, LayerJson>,
    dense: LayerJson,
}

#[derive(Serialize, Deserialize)]
struct LayerJson {
    #[serde(rename = "W")]
    w: Vec<Vec<f64>>,
    b: Vec<f64>,
}

impl TrainedModel {
    pub fn to_json_bytes(&self) -> Vec<u8> {
        let p = &self.params;
        let file = ModelFile {
            magic: MODEL_MAGIC.into(),
            version: MODEL_VERSION,
            config: p.config.clone(),
            vocab: self.vocab.tokens().to_vec(),
            params: ParamsJson {
                embedding: p.embedding.to_rows(),
                conv: p
                    .convs
                    .iter()
                    .map(|c| {
                        (
                            c.width.to_string(),
                            LayerJson {
                                w: c.w.to_rows(),
                                b: c.b.clone(),
                            },
                        )
                    })
                    .collect(),
                dense: LayerJson {
                    w: p.dense_w.to_rows(),
                    b: p.dense_b.clone(),
                },
            },
        };
        let mut out = serde_json::to_vec(&file).expect("model serialization is infallible");
        out.push(b'\n');
        out
    }

    pub fn from_json_bytes(bytes: &[u8]) -> Result<Self, ModelError> {
        let fmt = |msg: String| ModelError::Format(msg);
        let header: serde_json::Value =
            serde_json::from_slice(bytes).map_err(|e| fmt(e.to_string()))?;
        if header.get("magic").and_then(|m| m.as_str()) != Some(MODEL_MAGIC) {
            return Err(fmt("bad magic".into()));
        }
        match header.get("version").and_then(|v| v.as_u64()) {
            Some(v) if v == u64::from(MODEL_VERSION) => {}
            other => return Err(fmt(format!("unsupported version {other:?}"))),
        }
        let file: ModelFile = serde_json::from_value(header).map_err(|e| fmt(e.to_string()))?;
        let cfg = file.config;
        cfg.validate().map_err(|e| fmt(e.to_string()))?;
        let (v, d, m) = (cfg.vocab_size, cfg.embed_dim, cfg.feature_maps);

        if file.vocab.len() + 2 != v {
            return Err(fmt(format!(
                "vocab has {} tokens, config expects {}",
                file.vocab.len(),
                v - 2
            )));
        }
        let vocab = Vocabulary::from_tokens(file.vocab);
        if vocab.len() != v {
            return Err(fmt("vocab contains duplicate tokens".into()));
        }

        let embedding = tensor("E", &file.params.embedding, v, d)?;
        let mut conv = file.params.conv;
        if conv.len() != cfg.filter_widths.len() {
            return Err(fmt("filter bank count does not match config".into()));
        }
        let convs = cfg
            .filter_widths
            .iter()
            .map(|&h| {
                let layer = conv
                    .remove(&h.to_string())
                    .ok_or_else(|| fmt(format!("missing filter bank {h}")))?;
                let w = tensor("conv W", &layer.w, h * d, m)?;
                vector("conv b", &layer.b, m)?;
                Ok(ConvBank {
                    width: h,
                    w,
                    b: layer.b,
                })
            })
            .collect::<Result<Vec<_>, ModelError>>()?;
        let dense_w = tensor("dense W", &file.params.dense.w, cfg.feature_len(), NUM_CLASSES)?;
        vector("dense b", &file.params.dense.b, NUM_CLASSES)?;

        let params = ModelParams {
            config: cfg,
            embedding,
            convs,
            dense_w,
            dense_b: file.params.dense.b,
        };
        if !params.is_finite() {
            return Err(fmt("non-finite parameter".into()));
        }
        Ok(TrainedModel { params, vocab })
    }
}

fn tensor(name: &str, rows: &[Vec<f64>], r: usize, c: usize) -> Result<Tensor2, ModelError> {
    if rows.len() != r || rows.iter().any(|row| row.len() != c) {
        return Err(ModelError::Format(format!("{name} is not {r}x{c}")));
    }
    if r == 0 {
        return Ok(Tensor2::zeros(0, c));
    }
    Tensor2::from_rows(rows).map_err(|e| ModelError::Format(format!("{name}: {e}")))
}

fn vector(name: &str, v: &[f64], n: usize) -> Result<(), ModelError> {
    if v.len() == n {
        Ok(())
    } else {
        Err(ModelError::Format(format!("{name} has length {}, expected {n}", v.len())))
    }
}

pub fn save_model(model: &TrainedModel, path: impl AsRef<Path>) -> Result<(), ModelError> {
    fs::write(path, model.to_json_bytes())?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<TrainedModel, ModelError> {
    TrainedModel::from_json_bytes(&fs::read(path)?)
}
