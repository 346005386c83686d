use serde::{Deserialize, Serialize};

use super::model::{Corpus, Document};
use crate::{Error, Result};

/// Characters that always form a token of their own.
pub const PUNCTUATION: &str = ",./\\\"'=+-;:()!?<>%&$*|[]{}";

pub const NEWLINE: &str = "\n";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PreprocessConfig {
    pub lowercase: bool,
    pub digit_char: char,
    pub min_token_frequency: usize,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        PreprocessConfig {
            lowercase: true,
            digit_char: '5',
            min_token_frequency: 2,
        }
    }
}

impl PreprocessConfig {
    pub fn validate(&self) -> Result<()> {
        if self.min_token_frequency < 1 {
            return Err(Error::Config("min-token-frequency must be at least 1".into()));
        }
        Ok(())
    }
}

pub fn is_punctuation(c: char) -> bool {
    PUNCTUATION.contains(c)
}

/// Lowercases and conflates digits of an already tokenized surface.
pub fn normalize_token(surface: &str, cfg: &PreprocessConfig) -> String {
    surface
        .chars()
        .flat_map(|c| {
            let c = if c.is_ascii_digit() { cfg.digit_char } else { c };
            let lowered: Vec<char> = if cfg.lowercase {
                c.to_lowercase().collect()
            } else {
                vec![c]
            };
            lowered
        })
        .collect()
}

/// Splits on whitespace; punctuation characters and newlines become separate
/// tokens. Every token is then normalized with [`normalize_token`].
pub fn preprocess(raw: &str, cfg: &PreprocessConfig) -> Vec<String> {
    let mut out = Vec::new();
    let mut current = String::new();
    let flush = |current: &mut String, out: &mut Vec<String>| {
        if !current.is_empty() {
            out.push(normalize_token(current, cfg));
            current.clear();
        }
    };
    for c in raw.chars() {
        if c == '\n' {
            flush(&mut current, &mut out);
            out.push(NEWLINE.to_string());
        } else if c.is_whitespace() {
            flush(&mut current, &mut out);
        } else if is_punctuation(c) {
            flush(&mut current, &mut out);
            out.push(c.to_string());
        } else {
            current.push(c);
        }
    }
    flush(&mut current, &mut out);
    out
}

/// Normalizes every token surface of a document in place. Token boundaries are
/// kept because entity spans refer to them.
pub fn preprocess_document(doc: &mut Document, cfg: &PreprocessConfig) {
    for t in &mut doc.tokens {
        t.surface = normalize_token(&t.surface, cfg);
    }
}

pub fn preprocess_corpus(corpus: &mut Corpus, cfg: &PreprocessConfig) {
    for d in &mut corpus.documents {
        preprocess_document(d, cfg);
    }
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    fn pp(s: &str) -> Vec<String> {
        preprocess(s, &PreprocessConfig::default())
    }

    #[test]
    fn conflates_digits() {
        assert_eq!(pp("1992"), vec!["5555"]);
    }

    #[test]
    fn empty_text() {
        assert!(pp("").is_empty());
    }

    #[test]
    fn splits_punctuation_and_lowercases() {
        assert_eq!(pp("Scan, done."), vec!["scan", ",", "done", "."]);
    }

    #[test]
    fn newline_is_a_token_and_tab_is_whitespace() {
        assert_eq!(pp("a\tb\nc"), vec!["a", "b", "\n", "c"]);
    }

    #[test]
    fn every_listed_punctuation_character_splits() {
        for c in PUNCTUATION.chars() {
            assert_eq!(pp(&format!("x{c}y")), vec!["x".to_string(), c.to_string(), "y".to_string()]);
        }
    }

    #[test]
    fn case_and_digits_are_configurable() {
        let cfg = PreprocessConfig {
            lowercase: false,
            digit_char: '0',
            min_token_frequency: 1,
        };
        assert_eq!(preprocess("CT 12", &cfg), vec!["CT", "00"]);
    }

    proptest! {
        #[test]
        fn idempotent(s in "[a-zA-Z0-9 ,.;:()\\n\\t%$-]{0,60}") {
            let once = pp(&s);
            let twice = pp(&once.join(" "));
            prop_assert_eq!(once, twice);
        }

        #[test]
        fn tokens_are_nonempty(s in "\\PC{0,40}") {
            prop_assert!(pp(&s).iter().all(|t| !t.is_empty()));
        }
    }
}
