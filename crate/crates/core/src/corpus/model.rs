use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Token {
    pub surface: String,
    pub pos: String,
    pub index: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EntityKind {
    #[serde(rename = "EVENT")]
    Event,
    #[serde(rename = "TIMEX3")]
    Timex3,
}

/// An annotated mention covering tokens `start..end`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Entity {
    pub id: String,
    pub kind: EntityKind,
    pub start: usize,
    pub end: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RelationLabel {
    #[serde(rename = "CONTAINS")]
    Contains,
}

/// `source` temporally contains `target`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Relation {
    pub source: String,
    pub target: String,
    pub label: RelationLabel,
}

impl Relation {
    pub fn contains(source: &str, target: &str) -> Self {
        Relation {
            source: source.to_string(),
            target: target.to_string(),
            label: RelationLabel::Contains,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Document {
    pub id: String,
    pub tokens: Vec<Token>,
    pub entities: Vec<Entity>,
    pub relations: Vec<Relation>,
}

impl Document {
    /// Builds a document from `(surface, pos)` pairs, numbering tokens from 0.
    pub fn new<S: Into<String>>(
        id: impl Into<String>,
        tokens: impl IntoIterator<Item = (S, S)>,
        entities: Vec<Entity>,
        relations: Vec<Relation>,
    ) -> Self {
        Document {
            id: id.into(),
            tokens: tokens
                .into_iter()
                .enumerate()
                .map(|(index, (surface, pos))| Token {
                    surface: surface.into(),
                    pos: pos.into(),
                    index,
                })
                .collect(),
            entities,
            relations,
        }
    }

    pub fn entity(&self, id: &str) -> Option<&Entity> {
        self.entities.iter().find(|e| e.id == id)
    }

    pub fn surfaces(&self) -> impl Iterator<Item = &str> {
        self.tokens.iter().map(|t| t.surface.as_str())
    }

    pub fn validate(&self) -> Result<()> {
        for (i, t) in self.tokens.iter().enumerate() {
            if t.surface.is_empty() {
                return Err(Error::schema(&self.id, "tokens", format!("token {i} is empty")));
            }
            if t.index != i {
                return Err(Error::schema(
                    &self.id,
                    "tokens",
                    format!("token {i} carries index {}", t.index),
                ));
            }
        }
        let mut ids = HashSet::new();
        for e in &self.entities {
            if e.start >= e.end || e.end > self.tokens.len() {
                return Err(Error::schema(
                    &self.id,
                    "entities",
                    format!(
                        "entity {} span [{}, {}) invalid for {} tokens",
                        e.id,
                        e.start,
                        e.end,
                        self.tokens.len()
                    ),
                ));
            }
            if !ids.insert(e.id.as_str()) {
                return Err(Error::schema(
                    &self.id,
                    "entities",
                    format!("duplicate entity id {}", e.id),
                ));
            }
        }
        for r in &self.relations {
            for end in [&r.source, &r.target] {
                if !ids.contains(end.as_str()) {
                    return Err(Error::schema(
                        &self.id,
                        "relations",
                        format!("relation references unknown entity {end}"),
                    ));
                }
            }
            if r.source == r.target {
                return Err(Error::schema(
                    &self.id,
                    "relations",
                    format!("self relation on {}", r.source),
                ));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Dev,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Test => "test",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Corpus {
    pub split: Split,
    pub documents: Vec<Document>,
}

impl Corpus {
    pub fn new(split: Split, documents: Vec<Document>) -> Result<Self> {
        let corpus = Corpus { split, documents };
        corpus.validate()?;
        Ok(corpus)
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for d in &self.documents {
            if !seen.insert(d.id.as_str()) {
                return Err(Error::schema(&d.id, "id", "duplicate document id"));
            }
            d.validate()?;
        }
        Ok(())
    }

    pub fn document(&self, id: &str) -> Option<&Document> {
        self.documents.iter().find(|d| d.id == id)
    }

    pub fn token_count(&self) -> usize {
        self.documents.iter().map(|d| d.tokens.len()).sum()
    }
}
