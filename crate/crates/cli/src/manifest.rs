//! Optional TOML manifest holding the paths and hyperparameters of a run.
//!
//! ```toml
//! seed = 7
//! test_fraction = 0.2
//!
//! [paths]
//! corpus = ["corpus.json"]
//! labels = "corpus.labels.tsv"
//! dataset = "dataset.json"
//! model = "model.json"
//! report = "train.jsonl"
//!
//! [model]
//! embed_dim = 128
//! filter_widths = [3, 4, 5]
//!
//! [train]
//! max_steps = 3000
//! ```
//!
//! Relative paths are resolved against the manifest's directory. Command-line
//! flags take precedence over manifest values.

use std::path::{Path, PathBuf};

use serde::Deserialize;
use smartbullets::classifier::{ModelConfig, TrainConfig};

use crate::error::CliError;

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineManifest {
    pub seed: Option<u64>,
    pub test_fraction: Option<f64>,
    #[serde(default)]
    pub paths: ManifestPaths,
    #[serde(default)]
    pub model: ModelOverrides,
    #[serde(default)]
    pub train: TrainOverrides,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestPaths {
    pub lexicon: Option<PathBuf>,
    pub stopwords: Option<PathBuf>,
    pub labels: Option<PathBuf>,
    #[serde(default)]
    pub corpus: Vec<PathBuf>,
    pub dataset: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub report: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelOverrides {
    pub embed_dim: Option<usize>,
    pub filter_widths: Option<Vec<usize>>,
    pub feature_maps: Option<usize>,
    pub dropout_rate: Option<f64>,
    pub max_len: Option<usize>,
    /// Minimum training-set frequency for a token to enter the vocabulary.
    pub min_count: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainOverrides {
    pub lr: Option<f64>,
    pub batch_size: Option<usize>,
    pub max_steps: Option<usize>,
    pub eval_every: Option<usize>,
}

impl ModelOverrides {
    /// Field-wise `self` or else `fallback`.
    pub fn or(self, fallback: &Self) -> Self {
        Self {
            embed_dim: self.embed_dim.or(fallback.embed_dim),
            filter_widths: self.filter_widths.or_else(|| fallback.filter_widths.clone()),
            feature_maps: self.feature_maps.or(fallback.feature_maps),
            dropout_rate: self.dropout_rate.or(fallback.dropout_rate),
            max_len: self.max_len.or(fallback.max_len),
            min_count: self.min_count.or(fallback.min_count),
        }
    }

    pub fn apply(&self, cfg: &mut ModelConfig) {
        if let Some(v) = self.embed_dim {
            cfg.embed_dim = v;
        }
        if let Some(v) = &self.filter_widths {
            cfg.filter_widths = v.clone();
        }
        if let Some(v) = self.feature_maps {
            cfg.feature_maps = v;
        }
        if let Some(v) = self.dropout_rate {
            cfg.dropout_rate = v;
        }
        if let Some(v) = self.max_len {
            cfg.max_len = v;
        }
    }
}

impl TrainOverrides {
    pub fn or(self, fallback: &Self) -> Self {
        Self {
            lr: self.lr.or(fallback.lr),
            batch_size: self.batch_size.or(fallback.batch_size),
            max_steps: self.max_steps.or(fallback.max_steps),
            eval_every: self.eval_every.or(fallback.eval_every),
        }
    }

    pub fn apply(&self, cfg: &mut TrainConfig) {
        if let Some(v) = self.lr {
            cfg.lr = v;
        }
        if let Some(v) = self.batch_size {
            cfg.batch_size = v;
        }
        if let Some(v) = self.max_steps {
            cfg.max_steps = v;
        }
        if let Some(v) = self.eval_every {
            cfg.eval_every = v;
        }
    }
}

impl PipelineManifest {
    pub fn parse(text: &str, base: &Path) -> Result<Self, CliError> {
        let mut m: Self =
            toml::from_str(text).map_err(|e| CliError::Usage(format!("manifest: {e}")))?;
        m.resolve(base);
        Ok(m)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(CliError::io(path))?;
        let base = path.parent().unwrap_or(Path::new(""));
        Self::parse(&text, base).map_err(|e| match e {
            CliError::Usage(msg) => CliError::Usage(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    /// Loads `path` if given, else an empty manifest.
    pub fn load_opt(path: Option<&Path>) -> Result<Self, CliError> {
        path.map_or_else(|| Ok(Self::default()), Self::load)
    }

    fn resolve(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        let paths = &mut self.paths;
        for p in [
            &mut paths.lexicon,
            &mut paths.stopwords,
            &mut paths.labels,
            &mut paths.dataset,
            &mut paths.model,
            &mut paths.report,
        ]
        .into_iter()
        .flatten()
        {
            fix(p);
        }
        paths.corpus.iter_mut().for_each(fix);
    }

    /// Checks that every input file the manifest names exists.
    pub fn check_inputs(&self) -> Result<(), CliError> {
        let p = &self.paths;
        let inputs = [&p.lexicon, &p.stopwords, &p.labels]
            .into_iter()
            .flatten()
            .chain(&p.corpus);
        for path in inputs {
            if !path.is_file() {
                return Err(CliError::Io {
                    path: path.clone(),
                    source: std::io::Error::new(std::io::ErrorKind::NotFound, "no such file"),
                });
            }
        }
        Ok(())
    }
}
