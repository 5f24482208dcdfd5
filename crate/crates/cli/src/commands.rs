use std::collections::HashMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use smartbullets::classifier::{
    encode_examples, evaluate, init_model, predict_mask, save_model, train, Metrics, ModelConfig,
    Pipeline, StepRecord, TrainConfig, TrainedModel,
};
use smartbullets::corpus::{
    parse_bilibili_xml, parse_tencent_json, serialize_bilibili_xml, serialize_tencent_json,
    ScoredRecord,
};
use smartbullets::preprocess::{
    aggregate, apply_labels, build_vocabulary, format_label_file, parse_label_file,
    split_train_test, Label, LabeledExample, Lexicon, StopwordSet,
};
use smartbullets::synth::{generate, to_danmaku_file, SynthConfig};

use crate::error::CliError;
use crate::manifest::{ModelOverrides, TrainOverrides};

fn read(path: &Path) -> Result<Vec<u8>, CliError> {
    std::fs::read(path).map_err(CliError::io(path))
}

fn write(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    std::fs::write(path, bytes).map_err(CliError::io(path))
}

fn read_text(path: &Path) -> Result<String, CliError> {
    String::from_utf8(read(path)?)
        .map_err(|_| CliError::Data(format!("{}: not valid UTF-8", path.display())))
}

pub fn load_lexicon(path: Option<&Path>) -> Result<Lexicon, CliError> {
    Ok(match path {
        Some(p) => Lexicon::parse(&read_text(p)?),
        None => Lexicon::bundled(),
    })
}

pub fn load_stopwords(path: Option<&Path>) -> Result<StopwordSet, CliError> {
    Ok(match path {
        Some(p) => StopwordSet::parse(&read_text(p)?),
        None => StopwordSet::bundled(),
    })
}

pub fn load_trained(path: &Path) -> Result<TrainedModel, CliError> {
    TrainedModel::from_json_bytes(&read(path)?).map_err(|e| CliError::data_in(path)(e.to_string()))
}

/// Default label-file location next to a corpus file.
pub fn default_labels_path(corpus: &Path) -> PathBuf {
    corpus.with_extension("labels.tsv")
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenCorpusOpts {
    pub out: PathBuf,
    pub labels: Option<PathBuf>,
    /// Also lay the bullets out as a Bilibili display file.
    pub xml: Option<PathBuf>,
    pub size: usize,
    pub seed: u64,
    pub label_noise: f64,
    pub duplicate_rate: f64,
}

impl GenCorpusOpts {
    pub fn new(out: impl Into<PathBuf>, size: usize, seed: u64) -> Self {
        let defaults = SynthConfig::new(size, seed);
        Self {
            out: out.into(),
            labels: None,
            xml: None,
            size,
            seed,
            label_noise: defaults.label_noise,
            duplicate_rate: defaults.duplicate_rate,
        }
    }

    pub fn labels_path(&self) -> PathBuf {
        self.labels.clone().unwrap_or_else(|| default_labels_path(&self.out))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenCorpusSummary {
    pub records: usize,
    pub distinct: usize,
    pub negative: usize,
    pub noisy: usize,
}

/// Writes a synthetic Tencent-format corpus and its label file.
pub fn cmd_gen_corpus(opts: &GenCorpusOpts) -> Result<GenCorpusSummary, CliError> {
    let cfg = SynthConfig {
        size: opts.size,
        seed: opts.seed,
        label_noise: opts.label_noise,
        duplicate_rate: opts.duplicate_rate,
    };
    let corpus = generate(&cfg)?;
    write(&opts.out, &serialize_tencent_json(&corpus.bullets))?;
    write(
        &opts.labels_path(),
        format_label_file(corpus.labels.iter().map(|(c, l)| (c.as_str(), *l))).as_bytes(),
    )?;
    if let Some(xml) = &opts.xml {
        let file = to_danmaku_file(&corpus.bullets, &opts.seed.to_string(), opts.seed);
        write(xml, &serialize_bilibili_xml(&file))?;
    }
    Ok(GenCorpusSummary {
        records: corpus.bullets.len(),
        distinct: corpus.labels.len(),
        negative: corpus
            .labels
            .iter()
            .filter(|(_, l)| *l == Label::Negative)
            .count(),
        noisy: corpus.noisy_count(),
    })
}

/// Reads a corpus file, Tencent JSON or Bilibili XML, as scored records.
/// Display files carry no vote counts, so their bullets score 0.
pub fn read_corpus(path: &Path) -> Result<Vec<ScoredRecord>, CliError> {
    let bytes = read(path)?;
    let first = bytes.iter().find(|b| !b.is_ascii_whitespace()).copied();
    let to_data = |e: smartbullets::corpus::CorpusError| CliError::data_in(path)(e.to_string());
    match first {
        Some(b'<') => Ok(parse_bilibili_xml(&bytes)
            .map_err(to_data)?
            .bullets
            .into_iter()
            .map(|b| ScoredRecord::new(b.content, 0))
            .collect()),
        _ => Ok(parse_tencent_json(&bytes)
            .map_err(to_data)?
            .iter()
            .map(ScoredRecord::from)
            .collect()),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PreprocessOpts {
    pub corpus: Vec<PathBuf>,
    pub labels: PathBuf,
    pub lexicon: Option<PathBuf>,
    pub stopwords: Option<PathBuf>,
    pub test_fraction: f64,
    pub seed: u64,
    pub out: PathBuf,
}

/// Record counts after each preprocessing stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PreprocessReport {
    pub raw: usize,
    pub aggregated: usize,
    /// Aggregated records that had a label.
    pub labeled: usize,
    pub unlabeled: usize,
    /// Labeled records with nothing left after stopword removal.
    pub dropped_empty: usize,
    pub train: usize,
    pub test: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub report: PreprocessReport,
    pub seed: u64,
    pub test_fraction: f64,
    pub train: Vec<LabeledExample>,
    pub test: Vec<LabeledExample>,
}

impl Dataset {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        serde_json::from_slice(&read(path)?).map_err(|e| CliError::data_in(path)(e.to_string()))
    }

    pub fn to_json_bytes(&self) -> Vec<u8> {
        let mut out = serde_json::to_vec(self).expect("dataset serialization is infallible");
        out.push(b'\n');
        out
    }
}

pub fn cmd_preprocess(opts: &PreprocessOpts) -> Result<PreprocessReport, CliError> {
    if opts.corpus.is_empty() {
        return Err(CliError::Usage("at least one corpus file is required".into()));
    }
    if !(opts.test_fraction > 0.0 && opts.test_fraction < 1.0) {
        return Err(CliError::Usage(format!(
            "test fraction must lie in (0, 1), got {}",
            opts.test_fraction
        )));
    }
    let lex = load_lexicon(opts.lexicon.as_deref())?;
    let stop = load_stopwords(opts.stopwords.as_deref())?;
    let labels: HashMap<String, Label> = parse_label_file(&read_text(&opts.labels)?)
        .map_err(|e| CliError::data_in(&opts.labels)(e.to_string()))?;

    let mut records = Vec::new();
    for path in &opts.corpus {
        records.extend(read_corpus(path)?);
    }
    let raw = records.len();
    let aggregated = aggregate(&records);
    let outcome = apply_labels(&aggregated, &labels, &lex, &stop);
    let labeled = outcome.examples.len() + outcome.dropped_empty;
    if outcome.examples.is_empty() {
        return Err(CliError::Data("no labeled examples left after preprocessing".into()));
    }
    let (train, test) = split_train_test(outcome.examples, opts.test_fraction, opts.seed)?;
    let report = PreprocessReport {
        raw,
        aggregated: aggregated.len(),
        labeled,
        unlabeled: outcome.unlabeled,
        dropped_empty: outcome.dropped_empty,
        train: train.len(),
        test: test.len(),
    };
    let dataset = Dataset {
        report,
        seed: opts.seed,
        test_fraction: opts.test_fraction,
        train,
        test,
    };
    write(&opts.out, &dataset.to_json_bytes())?;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOpts {
    pub dataset: PathBuf,
    pub model_out: PathBuf,
    /// JSON-lines progress report.
    pub report_out: Option<PathBuf>,
    pub model: ModelOverrides,
    pub train: TrainOverrides,
    pub seed: u64,
}

impl TrainOpts {
    pub fn new(dataset: impl Into<PathBuf>, model_out: impl Into<PathBuf>) -> Self {
        Self {
            dataset: dataset.into(),
            model_out: model_out.into(),
            report_out: None,
            model: ModelOverrides::default(),
            train: TrainOverrides::default(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub steps: usize,
    pub vocab_size: usize,
    pub train_examples: usize,
    pub test_examples: usize,
    pub elapsed_s: f64,
    pub final_metrics: Metrics,
}

pub fn cmd_train(opts: &TrainOpts) -> Result<(TrainSummary, Vec<StepRecord>), CliError> {
    let dataset = Dataset::load(&opts.dataset)?;
    let vocab = build_vocabulary(&dataset.train, opts.model.min_count.unwrap_or(1));
    let mut mcfg = ModelConfig::new(vocab.len());
    mcfg.seed = opts.seed;
    opts.model.apply(&mut mcfg);
    let mut tcfg = TrainConfig {
        seed: opts.seed,
        ..TrainConfig::default()
    };
    opts.train.apply(&mut tcfg);
    tcfg.validate()?;

    let train_set = encode_examples(&dataset.train, &vocab, mcfg.max_len);
    let test_set = encode_examples(&dataset.test, &vocab, mcfg.max_len);
    let started = Instant::now();
    let (params, report) = train(init_model(&mcfg)?, &train_set, &test_set, &tcfg)?;
    let elapsed_s = started.elapsed().as_secs_f64();

    let model = TrainedModel { params, vocab };
    save_model(&model, &opts.model_out).map_err(|e| match e {
        smartbullets::ModelError::Io(source) => CliError::Io {
            path: opts.model_out.clone(),
            source,
        },
        other => other.into(),
    })?;
    if let Some(path) = &opts.report_out {
        write(path, report.to_json_lines().as_bytes())?;
    }
    Ok((
        TrainSummary {
            steps: report.steps,
            vocab_size: model.params.config.vocab_size,
            train_examples: train_set.len(),
            test_examples: test_set.len(),
            elapsed_s,
            final_metrics: report.final_metrics,
        },
        report.records,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, clap::ValueEnum)]
pub enum Split {
    #[default]
    Test,
    Train,
    All,
}

pub fn cmd_eval(model_path: &Path, dataset_path: &Path, split: Split) -> Result<Metrics, CliError> {
    let model = load_trained(model_path)?;
    let dataset = Dataset::load(dataset_path)?;
    let examples: Vec<LabeledExample> = match split {
        Split::Test => dataset.test,
        Split::Train => dataset.train,
        Split::All => dataset.train.into_iter().chain(dataset.test).collect(),
    };
    let encoded = encode_examples(&examples, &model.vocab, model.params.config.max_len);
    Ok(evaluate(&model.params, &encoded)?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterFileOpts {
    pub model: PathBuf,
    pub input: PathBuf,
    pub output: PathBuf,
    pub lexicon: Option<PathBuf>,
    pub stopwords: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterSummary {
    pub total: usize,
    pub kept: usize,
    pub removed: usize,
}

/// Removes the bullets the model flags from a Bilibili display file.
pub fn cmd_filter_file(opts: &FilterFileOpts) -> Result<FilterSummary, CliError> {
    let model = load_trained(&opts.model)?;
    let pipeline = Pipeline {
        lexicon: load_lexicon(opts.lexicon.as_deref())?,
        stopwords: load_stopwords(opts.stopwords.as_deref())?,
        vocab: model.vocab.clone(),
    };
    let file = parse_bilibili_xml(&read(&opts.input)?)
        .map_err(|e| CliError::data_in(&opts.input)(e.to_string()))?;
    let mask = predict_mask(&model.params, &file.contents(), &pipeline);
    let (kept, removed) = file.retain_by_mask(&mask);
    write(&opts.output, &serialize_bilibili_xml(&kept))?;
    Ok(FilterSummary {
        total: file.bullets.len(),
        kept: kept.bullets.len(),
        removed,
    })
}

/// Flattens a JSON-lines training report into CSV.
pub fn cmd_report_to_csv(input: &Path, out: &mut dyn Write) -> Result<usize, CliError> {
    let text = read_text(input)?;
    let mut w = csv::Writer::from_writer(out);
    let io_err = |e: csv::Error| CliError::Io {
        path: PathBuf::from("<output>"),
        source: e.into(),
    };
    w.write_record([
        "step",
        "train_loss",
        "test_loss",
        "test_accuracy",
        "test_precision_negative",
        "test_recall_negative",
    ])
    .map_err(io_err)?;
    let fmt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    let mut rows = 0;
    for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let rec: StepRecord = serde_json::from_str(line)
            .map_err(|e| CliError::data_in(input)(format!("line {}: {e}", i + 1)))?;
        w.write_record([
            rec.step.to_string(),
            fmt(rec.train_loss),
            fmt(rec.test.map(|m| m.loss)),
            fmt(rec.test.map(|m| m.accuracy)),
            fmt(rec.test.map(|m| m.precision_negative)),
            fmt(rec.test.map(|m| m.recall_negative)),
        ])
        .map_err(io_err)?;
        rows += 1;
    }
    w.flush().map_err(|e| CliError::Io {
        path: PathBuf::from("<output>"),
        source: e,
    })?;
    Ok(rows)
}
