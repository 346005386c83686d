//! Skip-gram training pairs.

use serde::{Deserialize, Serialize};

use super::model::Corpus;
use super::preprocess::{preprocess, PreprocessConfig};
use super::vocab::Vocabulary;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SgMode {
    /// Context words share the token vocabulary.
    Sg,
    /// Context words carry a `left_` / `right_` prefix.
    Sglr,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct SgPair {
    pub center: u32,
    pub context: u32,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SgDataset {
    pub mode: SgMode,
    pub window: usize,
    pub pairs: Vec<SgPair>,
    token_vocab_size: usize,
}

impl SgDataset {
    pub fn token_vocab_size(&self) -> usize {
        self.token_vocab_size
    }

    /// Size of the output (context) vocabulary.
    pub fn context_vocab_size(&self) -> usize {
        match self.mode {
            SgMode::Sg => self.token_vocab_size,
            SgMode::Sglr => 2 * self.token_vocab_size,
        }
    }

    /// Context index for token `token` seen at `offset` relative to the center.
    pub fn context_index(mode: SgMode, vocab_size: usize, token: usize, offset: isize) -> usize {
        match mode {
            SgMode::Sg => token,
            SgMode::Sglr if offset < 0 => token,
            SgMode::Sglr => vocab_size + token,
        }
    }

    /// Human-readable context word, e.g. `left_scan`.
    pub fn context_word(&self, vocab: &Vocabulary, index: usize) -> String {
        match self.mode {
            SgMode::Sg => vocab.token(index).to_string(),
            SgMode::Sglr if index < self.token_vocab_size => format!("left_{}", vocab.token(index)),
            SgMode::Sglr => format!("right_{}", vocab.token(index - self.token_vocab_size)),
        }
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

/// Token streams for the skip-gram objective: every labeled training document
/// followed by every unlabeled text, all under the same preprocessing.
pub fn sg_token_streams(train: &Corpus, unlabeled: &[String], cfg: &PreprocessConfig) -> Vec<Vec<String>> {
    train
        .documents
        .iter()
        .map(|d| d.surfaces().map(str::to_string).collect())
        .chain(unlabeled.iter().map(|t| preprocess(t, cfg)))
        .collect()
}

/// One pair per (center, context) position within `window` tokens, truncated
/// at text boundaries.
pub fn build_sg_dataset(texts: &[Vec<String>], vocab: &Vocabulary, window: usize, mode: SgMode) -> Result<SgDataset> {
    if window < 1 {
        return Err(Error::Config("skip-gram window must be at least 1".into()));
    }
    let v = vocab.len();
    let mut pairs = Vec::new();
    for text in texts {
        let ids: Vec<usize> = text.iter().map(|t| vocab.encode_token(t)).collect();
        for (i, &center) in ids.iter().enumerate() {
            let lo = i.saturating_sub(window);
            let hi = (i + window + 1).min(ids.len());
            for (j, &ctx) in ids.iter().enumerate().take(hi).skip(lo) {
                if j == i {
                    continue;
                }
                let offset = j as isize - i as isize;
                pairs.push(SgPair {
                    center: center as u32,
                    context: SgDataset::context_index(mode, v, ctx, offset) as u32,
                });
            }
        }
    }
    Ok(SgDataset {
        mode,
        window,
        pairs,
        token_vocab_size: v,
    })
}
