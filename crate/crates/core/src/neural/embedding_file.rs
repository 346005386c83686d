//! word2vec-compatible text format: a `rows dims` header, then one
//! `token v1 ... vd` line per row.
//!
//! Tokens never contain spaces or tabs, but the newline token does contain a
//! line break, so tokens are escaped (`\n` and `\\`) on the way out.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use super::tensor::Tensor;
use crate::{Error, Real, Result};

pub fn escape_token(token: &str) -> String {
    let mut out = String::with_capacity(token.len());
    for c in token.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            _ => out.push(c),
        }
    }
    out
}

pub fn unescape_token(escaped: &str) -> String {
    let mut out = String::with_capacity(escaped.len());
    let mut chars = escaped.chars();
    while let Some(c) = chars.next() {
        if c == '\\' {
            match chars.next() {
                Some('n') => out.push('\n'),
                Some('\\') => out.push('\\'),
                Some(other) => {
                    out.push('\\');
                    out.push(other);
                }
                None => out.push('\\'),
            }
        } else {
            out.push(c);
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingFile {
    pub words: Vec<String>,
    pub vectors: Tensor,
}

impl EmbeddingFile {
    pub fn dim(&self) -> usize {
        self.vectors.cols()
    }

    pub fn row_of(&self, word: &str) -> Option<&[Real]> {
        self.words
            .iter()
            .position(|w| w == word)
            .map(|i| self.vectors.row(i))
    }
}

pub fn save_embeddings(path: &Path, words: &[String], table: &Tensor) -> Result<()> {
    if words.len() != table.rows() {
        return Err(Error::Shape(format!(
            "{} words for {} embedding rows",
            words.len(),
            table.rows()
        )));
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    writeln!(w, "{} {}", table.rows(), table.cols()).map_err(io)?;
    for (i, word) in words.iter().enumerate() {
        write!(w, "{}", escape_token(word)).map_err(io)?;
        for v in table.row(i) {
            write!(w, " {v}").map_err(io)?;
        }
        writeln!(w).map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn load_embeddings(path: &Path) -> Result<EmbeddingFile> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut lines = BufReader::new(file).lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Parse {
            line: 1,
            message: "missing header".into(),
        })?
        .map_err(|e| Error::io(path, e))?;
    let dims: Vec<usize> = header
        .split_whitespace()
        .map(|s| s.parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::Parse {
            line: 1,
            message: format!("bad header `{header}`: {e}"),
        })?;
    let [rows, cols] = dims[..] else {
        return Err(Error::Parse {
            line: 1,
            message: format!("header must be `rows dims`, got `{header}`"),
        });
    };
    let mut words = Vec::with_capacity(rows);
    let mut data = Vec::with_capacity(rows * cols);
    for (n, line) in lines.enumerate() {
        let line_no = n + 2;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split(' ');
        let word = parts.next().unwrap_or_default();
        let values: Vec<Real> = parts
            .map(|s| s.parse::<Real>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Parse {
                line: line_no,
                message: e.to_string(),
            })?;
        if values.len() != cols {
            return Err(Error::Parse {
                line: line_no,
                message: format!("expected {cols} values, found {}", values.len()),
            });
        }
        words.push(unescape_token(word));
        data.extend(values);
    }
    if words.len() != rows {
        return Err(Error::Parse {
            line: 1,
            message: format!("header announces {rows} rows, file has {}", words.len()),
        });
    }
    Ok(EmbeddingFile {
        words,
        vectors: Tensor::from_vec(rows, cols, data)?,
    })
}
