//! Text pipeline: segmentation, stopword removal, duplicate aggregation,
//! labeling, train/test splitting, vocabulary and integer encoding.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::ScoredRecord;

pub const BUNDLED_LEXICON: &str = include_str!("../data/lexicon.txt");
pub const BUNDLED_STOPWORDS: &str = include_str!("../data/stopwords.txt");

pub const PAD: usize = 0;
pub const UNK: usize = 1;

/// Default encoded sentence length.
pub const DEFAULT_MAX_LEN: usize = 32;

#[derive(Debug, Error, PartialEq)]
pub enum PreprocessError {
    #[error("test fraction must lie strictly between 0 and 1, got {0}")]
    InvalidFraction(f64),
    #[error("cannot split an empty example set")]
    EmptyDataset,
    #[error("label file line {line}: {reason}")]
    BadLabelLine { line: usize, reason: String },
}

/// Word list for forward maximum matching.
#[derive(Debug, Clone, Default)]
pub struct Lexicon {
    words: HashSet<String>,
    max_word_len: usize,
}

impl Lexicon {
    /// Builds a lexicon, skipping empty entries and entries containing
    /// whitespace (those could never match whitespace-free text).
    pub fn new<I, S>(words: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut lex = Lexicon::default();
        for w in words {
            let w: String = w.into();
            if w.is_empty() || w.chars().any(char::is_whitespace) {
                continue;
            }
            lex.max_word_len = lex.max_word_len.max(w.chars().count());
            lex.words.insert(w);
        }
        lex
    }

    /// One word per line; blank lines and `#` comments are ignored.
    pub fn parse(text: &str) -> Self {
        Self::new(word_lines(text))
    }

    pub fn bundled() -> Self {
        Self::parse(BUNDLED_LEXICON)
    }

    pub fn contains(&self, word: &str) -> bool {
        self.words.contains(word)
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn max_word_len(&self) -> usize {
        self.max_word_len
    }
}

#[derive(Debug, Clone, Default)]
pub struct StopwordSet {
    words: HashSet<String>,
}

impl StopwordSet {
    pub fn new<I, S>(words: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self {
            words: words.into_iter().map(Into::into).collect(),
        }
    }

    pub fn parse(text: &str) -> Self {
        Self::new(word_lines(text))
    }

    pub fn bundled() -> Self {
        Self::parse(BUNDLED_STOPWORDS)
    }

    pub fn contains(&self, word: &str) -> bool {
        self.words.contains(word)
    }
}

fn word_lines(text: &str) -> impl Iterator<Item = &str> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
}

/// Segments `text` by forward maximum matching.
///
/// At each position the longest lexicon word wins; failing that, a maximal
/// run of ASCII alphanumerics, and failing that, a single character.
/// Whitespace is dropped, so the tokens concatenate to the input minus
/// whitespace.
pub fn tokenize(text: &str, lex: &Lexicon) -> Vec<String> {
    let chars: Vec<char> = text.chars().collect();
    let mut tokens = Vec::new();
    let mut probe = String::new();
    let mut i = 0;
    while i < chars.len() {
        if chars[i].is_whitespace() {
            i += 1;
            continue;
        }

        let longest = (1..=lex.max_word_len.min(chars.len() - i)).rev().find(|&n| {
            probe.clear();
            probe.extend(&chars[i..i + n]);
            lex.contains(&probe)
        });
        let n = match longest {
            Some(n) => n,
            None if chars[i].is_ascii_alphanumeric() => chars[i..]
                .iter()
                .take_while(|c| c.is_ascii_alphanumeric())
                .count(),
            None => 1,
        };
        tokens.push(chars[i..i + n].iter().collect());
        i += n;
    }
    tokens
}

pub fn remove_stopwords(tokens: Vec<String>, stop: &StopwordSet) -> Vec<String> {
    tokens.into_iter().filter(|t| !stop.contains(t)).collect()
}

/// Tokenize then drop stopwords.
pub fn preprocess_text(text: &str, lex: &Lexicon, stop: &StopwordSet) -> Vec<String> {
    remove_stopwords(tokenize(text, lex), stop)
}

/// Merges records with identical content, summing their scores. Output is
/// ordered by first occurrence.
pub fn aggregate(records: &[ScoredRecord]) -> Vec<ScoredRecord> {
    let mut slot: HashMap<&str, usize> = HashMap::with_capacity(records.len());
    let mut out: Vec<ScoredRecord> = Vec::new();
    for r in records {
        match slot.get(r.content.as_str()) {
            Some(&i) => out[i].score += r.score,
            None => {
                slot.insert(&r.content, out.len());
                out.push(r.clone());
            }
        }
    }
    out
}

/// Binary quality label. The discriminant doubles as the class index of the
/// classifier output.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "u8", try_from = "u8")]
pub enum Label {
    /// Low-quality; removed by the filter.
    Negative = 0,
    /// Kept.
    Positive = 1,
}

impl Label {
    pub fn class(self) -> usize {
        self as usize
    }

    pub fn from_class(class: usize) -> Self {
        if class == 0 {
            Label::Negative
        } else {
            Label::Positive
        }
    }
}

impl From<Label> for u8 {
    fn from(l: Label) -> u8 {
        l as u8
    }
}

impl TryFrom<u8> for Label {
    type Error = String;

    fn try_from(v: u8) -> Result<Self, Self::Error> {
        match v {
            0 => Ok(Label::Negative),
            1 => Ok(Label::Positive),
            other => Err(format!("label must be 0 or 1, got {other}")),
        }
    }
}

impl FromStr for Label {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "0" => Ok(Label::Negative),
            "1" => Ok(Label::Positive),
            other => Err(format!("label must be 0 or 1, got {other:?}")),
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", *self as u8)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledExample {
    pub tokens: Vec<String>,
    pub label: Label,
    pub score: i64,
}

/// Parses a `content<TAB>0|1` label file. The last tab on a line separates
/// the label, so content may itself contain tabs.
pub fn parse_label_file(text: &str) -> Result<HashMap<String, Label>, PreprocessError> {
    let mut labels = HashMap::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let bad = |reason: String| PreprocessError::BadLabelLine { line: i + 1, reason };
        let (content, label) = line
            .rsplit_once('\t')
            .ok_or_else(|| bad("missing tab separator".into()))?;
        let label: Label = label.parse().map_err(bad)?;
        labels.insert(content.to_string(), label);
    }
    Ok(labels)
}

pub fn format_label_file<'a, I>(entries: I) -> String
where
    I: IntoIterator<Item = (&'a str, Label)>,
{
    let mut out = String::new();
    for (content, label) in entries {
        out.push_str(content);
        out.push('\t');
        out.push_str(&label.to_string());
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LabelingOutcome {
    pub examples: Vec<LabeledExample>,
    /// Records with no entry in the label map.
    pub unlabeled: usize,
    /// Labeled records whose token list came out empty.
    pub dropped_empty: usize,
}

/// Attaches labels to aggregated records. Unlabeled records and records
/// that preprocess to nothing are dropped and counted.
pub fn apply_labels(
    records: &[ScoredRecord],
    labels: &HashMap<String, Label>,
    lex: &Lexicon,
    stop: &StopwordSet,
) -> LabelingOutcome {
    let mut outcome = LabelingOutcome::default();
    for r in records {
        let Some(&label) = labels.get(&r.content) else {
            outcome.unlabeled += 1;
            continue;
        };
        let tokens = preprocess_text(&r.content, lex, stop);
        if tokens.is_empty() {
            outcome.dropped_empty += 1;
            continue;
        }
        outcome.examples.push(LabeledExample {
            tokens,
            label,
            score: r.score,
        });
    }
    outcome
}

/// Deterministic shuffle-and-cut. The test side receives
/// `floor(n * test_fraction)` items.
pub fn split_train_test<T>(
    mut examples: Vec<T>,
    test_fraction: f64,
    seed: u64,
) -> Result<(Vec<T>, Vec<T>), PreprocessError> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(PreprocessError::InvalidFraction(test_fraction));
    }
    if examples.is_empty() {
        return Err(PreprocessError::EmptyDataset);
    }
    let n_test = (examples.len() as f64 * test_fraction).floor() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    examples.shuffle(&mut rng);
    let train = examples.split_off(n_test);
    Ok((train, examples))
}

/// Token to row index map. Indices 0 and 1 are reserved for padding and
/// unknown tokens.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    /// Builds from an ordered token list; the token at position `i` gets
    /// index `i + 2`. Later duplicates are ignored.
    pub fn from_tokens<I, S>(tokens: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut v = Vocabulary::default();
        for t in tokens {
            let t = t.into();
            if !v.index.contains_key(&t) {
                v.index.insert(t.clone(), v.tokens.len() + 2);
                v.tokens.push(t);
            }
        }
        v
    }

    /// Number of rows including the two reserved ones.
    pub fn len(&self) -> usize {
        self.tokens.len() + 2
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn get(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn index_of(&self, token: &str) -> usize {
        self.get(token).unwrap_or(UNK)
    }

    /// Non-reserved tokens in index order.
    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }
}

/// Tokens with corpus frequency of at least `min_count`, most frequent first,
/// ties broken lexicographically.
pub fn build_vocabulary(examples: &[LabeledExample], min_count: usize) -> Vocabulary {
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for t in examples.iter().flat_map(|e| &e.tokens) {
        *counts.entry(t.as_str()).or_default() += 1;
    }
    let mut kept: Vec<(&str, usize)> = counts
        .into_iter()
        .filter(|&(_, c)| c >= min_count.max(1))
        .collect();
    kept.sort_unstable_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    Vocabulary::from_tokens(kept.into_iter().map(|(t, _)| t))
}

/// Maps tokens to indices, truncating or right-padding to `max_len`.
pub fn encode<S: AsRef<str>>(tokens: &[S], vocab: &Vocabulary, max_len: usize) -> Vec<usize> {
    let mut ids: Vec<usize> = tokens
        .iter()
        .take(max_len)
        .map(|t| vocab.index_of(t.as_ref()))
        .collect();
    ids.resize(max_len, PAD);
    ids
}
