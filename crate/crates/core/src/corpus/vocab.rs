use std::collections::{BTreeSet, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use sha2::{Digest, Sha256};

use super::model::Corpus;
use super::preprocess::{preprocess, PreprocessConfig};
use crate::neural::embedding_file::{escape_token, unescape_token};
use crate::{Error, Result};

pub const UNK: &str = "<unk>";
pub const PAD: &str = "<pad>";
pub const A1_OPEN: &str = "<a1>";
pub const A1_CLOSE: &str = "</a1>";
pub const A2_OPEN: &str = "<a2>";
pub const A2_CLOSE: &str = "</a2>";

/// Reserved token entries, in index order.
pub const RESERVED_TOKENS: [&str; 6] = [UNK, PAD, A1_OPEN, A1_CLOSE, A2_OPEN, A2_CLOSE];

/// POS index carried by inserted position-indicator tags.
pub const POS_TAG: &str = "<tag>";
pub const RESERVED_POS: [&str; 3] = [UNK, PAD, POS_TAG];

/// Dense token and POS indices. Reserved entries come first.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    token_index: HashMap<String, usize>,
    pos: Vec<String>,
    pos_index: HashMap<String, usize>,
}

impl Vocabulary {
    pub fn from_entries(tokens: Vec<String>, pos: Vec<String>) -> Result<Self> {
        let index = |items: &[String], what: &str| -> Result<HashMap<String, usize>> {
            let mut map = HashMap::with_capacity(items.len());
            for (i, t) in items.iter().enumerate() {
                if map.insert(t.clone(), i).is_some() {
                    return Err(Error::Config(format!("duplicate {what} entry `{t}`")));
                }
            }
            Ok(map)
        };
        let token_index = index(&tokens, "token")?;
        let pos_index = index(&pos, "pos")?;
        for r in RESERVED_TOKENS {
            if !token_index.contains_key(r) {
                return Err(Error::Config(format!("vocabulary lacks reserved token {r}")));
            }
        }
        for r in RESERVED_POS {
            if !pos_index.contains_key(r) {
                return Err(Error::Config(format!("vocabulary lacks reserved POS {r}")));
            }
        }
        Ok(Vocabulary {
            tokens,
            token_index,
            pos,
            pos_index,
        })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn pos_len(&self) -> usize {
        self.pos.len()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn pos_tags(&self) -> &[String] {
        &self.pos
    }

    pub fn token(&self, index: usize) -> &str {
        &self.tokens[index]
    }

    pub fn get(&self, surface: &str) -> Option<usize> {
        self.token_index.get(surface).copied()
    }

    pub fn unk(&self) -> usize {
        self.token_index[UNK]
    }

    pub fn reserved(&self, tag: &str) -> usize {
        self.token_index[tag]
    }

    /// Index of `surface`, or of UNK when absent.
    pub fn encode_token(&self, surface: &str) -> usize {
        self.get(surface).unwrap_or_else(|| self.unk())
    }

    pub fn encode_pos(&self, pos: &str) -> usize {
        self.pos_index
            .get(pos)
            .copied()
            .unwrap_or_else(|| self.pos_index[UNK])
    }

    pub fn pos_tag_index(&self) -> usize {
        self.pos_index[POS_TAG]
    }

    /// SHA-256 over the token and POS dumps.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        for t in &self.tokens {
            h.update(escape_token(t).as_bytes());
            h.update(b"\n");
        }
        h.update(b"\0");
        for p in &self.pos {
            h.update(escape_token(p).as_bytes());
            h.update(b"\n");
        }
        hex::encode(h.finalize())
    }

    /// Writes `token<TAB>index` lines, reserved entries first.
    pub fn save(&self, path: &Path) -> Result<()> {
        write_entries(path, &self.tokens)
    }

    pub fn save_pos(&self, path: &Path) -> Result<()> {
        write_entries(path, &self.pos)
    }

    pub fn load(tokens_path: &Path, pos_path: &Path) -> Result<Self> {
        Self::from_entries(read_entries(tokens_path)?, read_entries(pos_path)?)
    }
}

fn write_entries(path: &Path, entries: &[String]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for (i, t) in entries.iter().enumerate() {
        writeln!(w, "{}\t{i}", escape_token(t)).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn read_entries(path: &Path) -> Result<Vec<String>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let (tok, idx) = line.rsplit_once('\t').ok_or_else(|| Error::Parse {
            line: n + 1,
            message: "expected token<TAB>index".into(),
        })?;
        let idx: usize = idx.parse().map_err(|e| Error::Parse {
            line: n + 1,
            message: format!("bad index: {e}"),
        })?;
        if idx != out.len() {
            return Err(Error::Parse {
                line: n + 1,
                message: format!("indices must be dense; expected {}, got {idx}", out.len()),
            });
        }
        out.push(unescape_token(tok));
    }
    Ok(out)
}

/// Token frequencies over the labeled training documents plus unlabeled texts.
#[derive(Clone, Debug, Default)]
pub struct TokenCounts {
    counts: HashMap<String, u64>,
}

impl TokenCounts {
    pub fn count(train: &Corpus, unlabeled: &[String], cfg: &PreprocessConfig) -> Self {
        let mut counts: HashMap<String, u64> = HashMap::new();
        for d in &train.documents {
            for t in &d.tokens {
                *counts.entry(t.surface.clone()).or_default() += 1;
            }
        }
        for text in unlabeled {
            for t in preprocess(text, cfg) {
                *counts.entry(t).or_default() += 1;
            }
        }
        TokenCounts { counts }
    }

    pub fn get(&self, surface: &str) -> u64 {
        self.counts.get(surface).copied().unwrap_or(0)
    }

    pub fn total(&self) -> u64 {
        self.counts.values().sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, u64)> {
        self.counts.iter().map(|(k, v)| (k.as_str(), *v))
    }

    /// Writes `token<TAB>count` lines sorted by token.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut entries: Vec<(&str, u64)> = self.iter().collect();
        entries.sort_unstable();
        let mut text = String::new();
        for (t, c) in entries {
            text.push_str(&format!("{}\t{c}\n", escape_token(t)));
        }
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut counts = HashMap::new();
        for (n, line) in text.lines().enumerate() {
            let parsed = line
                .rsplit_once('\t')
                .and_then(|(t, c)| c.parse::<u64>().ok().map(|c| (unescape_token(t), c)));
            let (t, c) = parsed.ok_or_else(|| Error::Parse {
                line: n + 1,
                message: "expected token<TAB>count".into(),
            })?;
            counts.insert(t, c);
        }
        Ok(TokenCounts { counts })
    }
}

/// Builds the vocabulary from the (preprocessed) training corpus and the raw
/// unlabeled texts. Tokens seen fewer than `min_token_frequency` times are left
/// out and encode to UNK.
pub fn build_vocab(train: &Corpus, unlabeled: &[String], cfg: &PreprocessConfig) -> Result<Vocabulary> {
    cfg.validate()?;
    let counts = TokenCounts::count(train, unlabeled, cfg);
    if counts.total() == 0 {
        return Err(Error::EmptyVocabulary);
    }
    let mut kept: Vec<(&str, u64)> = counts
        .iter()
        .filter(|(t, c)| *c >= cfg.min_token_frequency as u64 && !RESERVED_TOKENS.contains(t))
        .collect();
    kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    let tokens: Vec<String> = RESERVED_TOKENS
        .iter()
        .copied()
        .chain(kept.into_iter().map(|(t, _)| t))
        .map(str::to_string)
        .collect();

    let observed: BTreeSet<&str> = train
        .documents
        .iter()
        .flat_map(|d| d.tokens.iter().map(|t| t.pos.as_str()))
        .filter(|p| !RESERVED_POS.contains(p))
        .collect();
    let pos: Vec<String> = RESERVED_POS
        .iter()
        .copied()
        .chain(observed)
        .map(str::to_string)
        .collect();
    Vocabulary::from_entries(tokens, pos)
}
