//! JSON-lines standoff corpus files, one document per line:
//!
//! ```text
//! {"id": str, "tokens": [{"t": str, "pos": str}],
//!  "entities": [{"id": str, "kind": "EVENT"|"TIMEX3", "start": int, "end": int}],
//!  "relations": [{"source": str, "target": str, "label": "CONTAINS"}]}
//! ```

use std::collections::HashSet;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::model::{Corpus, Document, Entity, Relation, Split, Token};
use crate::{Error, Result};

#[derive(Serialize, Deserialize)]
struct RawToken {
    t: String,
    pos: String,
}

#[derive(Serialize)]
struct RawDocumentRef<'a> {
    id: &'a str,
    tokens: Vec<RawTokenRef<'a>>,
    entities: &'a [Entity],
    relations: &'a [Relation],
}

#[derive(Serialize)]
struct RawTokenRef<'a> {
    t: &'a str,
    pos: &'a str,
}

fn field<T: DeserializeOwned>(obj: &serde_json::Map<String, Value>, doc: &str, name: &str) -> Result<T> {
    let v = obj
        .get(name)
        .ok_or_else(|| Error::schema(doc, name, "missing"))?;
    serde_json::from_value(v.clone()).map_err(|e| Error::schema(doc, name, e.to_string()))
}

/// Parses one corpus line into a validated document.
pub fn parse_document(line: &str, line_no: usize) -> Result<Document> {
    let value: Value = serde_json::from_str(line).map_err(|e| Error::Parse {
        line: line_no,
        message: e.to_string(),
    })?;
    let obj = value.as_object().ok_or_else(|| Error::Parse {
        line: line_no,
        message: "expected a JSON object".into(),
    })?;
    let placeholder = format!("<line {line_no}>");
    let id: String = field(obj, &placeholder, "id")?;
    let tokens: Vec<RawToken> = field(obj, &id, "tokens")?;
    let entities: Vec<Entity> = field(obj, &id, "entities")?;
    let relations: Vec<Relation> = field(obj, &id, "relations")?;
    let doc = Document {
        tokens: tokens
            .into_iter()
            .enumerate()
            .map(|(index, t)| Token {
                surface: t.t,
                pos: t.pos,
                index,
            })
            .collect(),
        id,
        entities,
        relations,
    };
    doc.validate()?;
    Ok(doc)
}

pub fn document_to_line(doc: &Document) -> String {
    let raw = RawDocumentRef {
        id: &doc.id,
        tokens: doc
            .tokens
            .iter()
            .map(|t| RawTokenRef {
                t: &t.surface,
                pos: &t.pos,
            })
            .collect(),
        entities: &doc.entities,
        relations: &doc.relations,
    };
    serde_json::to_string(&raw).expect("documents always serialize")
}

pub fn load_corpus(path: &Path, split: Split) -> Result<Corpus> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut documents = Vec::new();
    let mut ids = HashSet::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let doc = parse_document(&line, n + 1)?;
        if !ids.insert(doc.id.clone()) {
            return Err(Error::schema(&doc.id, "id", "duplicate document id"));
        }
        documents.push(doc);
    }
    Ok(Corpus { split, documents })
}

pub fn save_corpus(corpus: &Corpus, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for doc in &corpus.documents {
        writeln!(w, "{}", document_to_line(doc)).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads every `*.txt` file in `dir` (sorted by name) as one raw document.
pub fn load_raw_texts(dir: &Path) -> Result<Vec<String>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|ext| ext == "txt"))
        .collect();
    paths.sort();
    paths
        .iter()
        .map(|p| fs::read_to_string(p).map_err(|e| Error::io(p, e)))
        .collect()
}

/// Writes raw texts as `raw_00000.txt`, `raw_00001.txt`, ... into `dir`.
pub fn save_raw_texts(texts: &[String], dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (i, text) in texts.iter().enumerate() {
        let p = dir.join(format!("raw_{i:05}.txt"));
        fs::write(&p, text).map_err(|e| Error::io(&p, e))?;
    }
    Ok(())
}
