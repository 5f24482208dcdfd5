use super::model::{predict_probs, ModelParams};
use super::train::argmax;
use crate::par::Execution;
use crate::preprocess::{encode, preprocess_text, Label, Lexicon, StopwordSet, Vocabulary};

/// Text-to-ids pipeline used at inference.
#[derive(Debug, Clone)]
pub struct Pipeline {
    pub lexicon: Lexicon,
    pub stopwords: StopwordSet,
    pub vocab: Vocabulary,
}

impl Pipeline {
    /// Bundled lexicon and stopwords with the given vocabulary.
    pub fn bundled(vocab: Vocabulary) -> Self {
        Self {
            lexicon: Lexicon::bundled(),
            stopwords: StopwordSet::bundled(),
            vocab,
        }
    }

    /// `None` when the text carries no tokens after preprocessing.
    pub fn encode(&self, text: &str, max_len: usize) -> Option<Vec<usize>> {
        let tokens = preprocess_text(text, &self.lexicon, &self.stopwords);
        (!tokens.is_empty()).then(|| encode(&tokens, &self.vocab, max_len))
    }
}

/// Keep (1) / remove (0) decision for each comment, in input order.
///
/// Comments with no tokens left after preprocessing are kept.
pub fn predict_mask<S: AsRef<str> + Sync>(
    model: &ModelParams,
    contents: &[S],
    pipeline: &Pipeline,
) -> Vec<u8> {
    predict_mask_with(model, contents, pipeline, Execution::default())
}

pub fn predict_mask_with<S: AsRef<str> + Sync>(
    model: &ModelParams,
    contents: &[S],
    pipeline: &Pipeline,
    exec: Execution,
) -> Vec<u8> {
    let max_len = model.config.max_len;
    exec.map(contents, |text| {
        let Some(ids) = pipeline.encode(text.as_ref(), max_len) else {
            return 1;
        };
        // Encoded ids are in range by construction of the vocabulary; a
        // mismatched vocabulary fails open.
        match predict_probs(model, &ids) {
            Ok(p) if argmax(&p) == Label::Negative => 0,
            _ => 1,
        }
    })
}
