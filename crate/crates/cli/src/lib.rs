//! The `smartbullets` command line: corpus generation, preprocessing,
//! training, evaluation, offline file filtering and serving.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 I/O error.

pub mod commands;
pub mod error;
pub mod manifest;

use std::ffi::OsString;
use std::io::Write;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

pub use commands::*;
pub use error::CliError;
pub use manifest::{ModelOverrides, PipelineManifest, TrainOverrides};

#[derive(Debug, Parser)]
#[command(name = "smartbullets", version, about = "Danmaku quality filter")]
pub struct Cli {
    /// TOML manifest supplying paths and hyperparameters; flags win.
    #[arg(long, global = true, value_name = "PATH")]
    pub manifest: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic labeled corpus (Tencent JSON plus label file).
    GenCorpus(GenCorpusArgs),
    /// Aggregate, label, tokenize and split a corpus into a dataset file.
    Preprocess(PreprocessArgs),
    /// Train a model on a dataset file.
    Train(TrainArgs),
    /// Print metrics of a model on a dataset split.
    Eval(EvalArgs),
    /// Remove low-quality bullets from a Bilibili danmaku XML file.
    FilterFile(FilterFileArgs),
    /// Run the HTTP filtering service.
    Serve(ServeArgs),
    /// Convert a JSON-lines training report to CSV.
    ReportToCsv(ReportToCsvArgs),
}

#[derive(Debug, Args)]
pub struct GenCorpusArgs {
    /// Output corpus (Tencent JSON).
    #[arg(long)]
    pub out: PathBuf,
    /// Output label file [default: <out>.labels.tsv].
    #[arg(long)]
    pub labels: Option<PathBuf>,
    /// Also write the bullets as a Bilibili XML display file.
    #[arg(long)]
    pub xml: Option<PathBuf>,
    #[arg(long)]
    pub size: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.05)]
    pub label_noise: f64,
    #[arg(long, default_value_t = 0.15)]
    pub duplicate_rate: f64,
}

#[derive(Debug, Args)]
pub struct PreprocessArgs {
    /// Corpus file, Tencent JSON or Bilibili XML; repeatable.
    #[arg(long = "corpus")]
    pub corpus: Vec<PathBuf>,
    /// Label file of `content<TAB>0|1` lines [default: next to a single corpus].
    #[arg(long)]
    pub labels: Option<PathBuf>,
    #[arg(long)]
    pub lexicon: Option<PathBuf>,
    #[arg(long)]
    pub stopwords: Option<PathBuf>,
    /// Fraction of examples held out for testing [default: 0.2].
    #[arg(long)]
    pub test_fraction: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output dataset file.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// Output model file.
    #[arg(long = "model-out")]
    pub model_out: Option<PathBuf>,
    /// Output JSON-lines progress report.
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub embed_dim: Option<usize>,
    /// Comma-separated convolution widths.
    #[arg(long, value_delimiter = ',')]
    pub filter_widths: Option<Vec<usize>>,
    #[arg(long)]
    pub feature_maps: Option<usize>,
    #[arg(long)]
    pub dropout: Option<f64>,
    #[arg(long)]
    pub max_len: Option<usize>,
    #[arg(long)]
    pub min_count: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub eval_every: Option<usize>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Split::Test)]
    pub split: Split,
}

#[derive(Debug, Args)]
pub struct FilterFileArgs {
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
    #[arg(long)]
    pub lexicon: Option<PathBuf>,
    #[arg(long)]
    pub stopwords: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, env = "SB_LISTEN", default_value = "127.0.0.1:8080")]
    pub listen: SocketAddr,
    #[arg(long, env = "SB_MODEL")]
    pub model: Option<PathBuf>,
    #[arg(long, default_value_t = smartbullets_server::DEFAULT_MAX_COMMENTS)]
    pub max_comments: usize,
    #[arg(long, default_value_t = smartbullets_server::DEFAULT_MAX_CONCURRENT)]
    pub max_concurrent: usize,
    #[arg(long, default_value_t = smartbullets_server::DEFAULT_TIMEOUT.as_secs_f64())]
    pub timeout_s: f64,
    #[arg(long)]
    pub lexicon: Option<PathBuf>,
    #[arg(long)]
    pub stopwords: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReportToCsvArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// Output file; standard output when omitted.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

fn required(value: Option<PathBuf>, flag: &str) -> Result<PathBuf, CliError> {
    value.ok_or_else(|| CliError::Usage(format!("--{flag} is required (or set it in the manifest)")))
}

fn print_json<T: Serialize>(out: &mut dyn Write, value: &T) -> Result<(), CliError> {
    let line = serde_json::to_string(value).expect("summary serialization is infallible");
    writeln!(out, "{line}").map_err(CliError::io(Path::new("<stdout>")))
}

/// Runs a parsed command, writing its result to `out`.
pub fn run(cli: Cli, out: &mut dyn Write) -> Result<(), CliError> {
    let manifest = PipelineManifest::load_opt(cli.manifest.as_deref())?;
    manifest.check_inputs()?;
    let paths = &manifest.paths;
    match cli.command {
        Command::GenCorpus(a) => {
            let opts = GenCorpusOpts {
                out: a.out,
                labels: a.labels,
                xml: a.xml,
                size: a.size,
                seed: a.seed,
                label_noise: a.label_noise,
                duplicate_rate: a.duplicate_rate,
            };
            print_json(out, &cmd_gen_corpus(&opts)?)
        }
        Command::Preprocess(a) => {
            let corpus = if a.corpus.is_empty() {
                paths.corpus.clone()
            } else {
                a.corpus
            };
            let labels = match a.labels.or_else(|| paths.labels.clone()) {
                Some(l) => l,
                None if corpus.len() == 1 => default_labels_path(&corpus[0]),
                None => return Err(CliError::Usage("--labels is required".into())),
            };
            let opts = PreprocessOpts {
                corpus,
                labels,
                lexicon: a.lexicon.or_else(|| paths.lexicon.clone()),
                stopwords: a.stopwords.or_else(|| paths.stopwords.clone()),
                test_fraction: a.test_fraction.or(manifest.test_fraction).unwrap_or(0.2),
                seed: a.seed.or(manifest.seed).unwrap_or(0),
                out: required(a.out.or_else(|| paths.dataset.clone()), "out")?,
            };
            print_json(out, &cmd_preprocess(&opts)?)
        }
        Command::Train(a) => {
            let flags_model = ModelOverrides {
                embed_dim: a.embed_dim,
                filter_widths: a.filter_widths,
                feature_maps: a.feature_maps,
                dropout_rate: a.dropout,
                max_len: a.max_len,
                min_count: a.min_count,
            };
            let flags_train = TrainOverrides {
                lr: a.lr,
                batch_size: a.batch_size,
                max_steps: a.steps,
                eval_every: a.eval_every,
            };
            let opts = TrainOpts {
                dataset: required(a.dataset.or_else(|| paths.dataset.clone()), "dataset")?,
                model_out: required(a.model_out.or_else(|| paths.model.clone()), "model-out")?,
                report_out: a.report.or_else(|| paths.report.clone()),
                model: flags_model.or(&manifest.model),
                train: flags_train.or(&manifest.train),
                seed: a.seed.or(manifest.seed).unwrap_or(0),
            };
            let (summary, _) = cmd_train(&opts)?;
            print_json(out, &summary.final_metrics)
        }
        Command::Eval(a) => {
            let model = required(a.model.or_else(|| paths.model.clone()), "model")?;
            let dataset = required(a.dataset.or_else(|| paths.dataset.clone()), "dataset")?;
            print_json(out, &cmd_eval(&model, &dataset, a.split)?)
        }
        Command::FilterFile(a) => {
            let opts = FilterFileOpts {
                model: required(a.model.or_else(|| paths.model.clone()), "model")?,
                input: a.input,
                output: a.output,
                lexicon: a.lexicon.or_else(|| paths.lexicon.clone()),
                stopwords: a.stopwords.or_else(|| paths.stopwords.clone()),
            };
            print_json(out, &cmd_filter_file(&opts)?)
        }
        Command::Serve(a) => {
            if !(a.timeout_s.is_finite() && a.timeout_s > 0.0) {
                return Err(CliError::Usage(format!("--timeout-s must be positive, got {}", a.timeout_s)));
            }
            let model = required(a.model.or_else(|| paths.model.clone()), "model")?;
            let mut cfg = smartbullets_server::ServerConfig::new(a.listen, model);
            cfg.lexicon_path = a.lexicon.or_else(|| paths.lexicon.clone());
            cfg.stopwords_path = a.stopwords.or_else(|| paths.stopwords.clone());
            cfg.max_comments = a.max_comments;
            cfg.max_concurrent_requests = a.max_concurrent;
            cfg.request_timeout = Duration::from_secs_f64(a.timeout_s);
            let rt = tokio::runtime::Runtime::new().map_err(CliError::io(Path::new("<runtime>")))?;
            rt.block_on(smartbullets_server::serve(cfg))?;
            Ok(())
        }
        Command::ReportToCsv(a) => {
            match &a.output {
                Some(path) => {
                    let mut f = std::fs::File::create(path).map_err(CliError::io(path))?;
                    cmd_report_to_csv(&a.input, &mut f)?;
                }
                None => {
                    cmd_report_to_csv(&a.input, out)?;
                }
            }
            Ok(())
        }
    }
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn main_with<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let text = e.render().to_string();
            let _ = if code == 0 {
                write!(out, "{text}")
            } else {
                write!(err, "{text}")
            };
            return code;
        }
    };
    match run(cli, out) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}
