//! Candidate entity pairs and the classifier's input sequences.

use std::collections::HashSet;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::corpus::vocab::{A1_CLOSE, A1_OPEN, A2_CLOSE, A2_OPEN};
use crate::corpus::{Document, Entity, EntityKind, Vocabulary};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PairKind {
    EE,
    TE,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PairLabel {
    #[serde(rename = "CONTAINS")]
    Contains,
    #[serde(rename = "NONE")]
    None,
}

impl PairLabel {
    /// Class index used by the classifier: 0 = CONTAINS, 1 = NONE.
    pub fn class(self) -> usize {
        match self {
            PairLabel::Contains => 0,
            PairLabel::None => 1,
        }
    }
}

/// An ordered candidate: does `arg1` contain `arg2`?
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CandidatePair {
    pub doc_id: String,
    pub arg1: String,
    pub arg2: String,
    pub kind: PairKind,
    pub distance: usize,
    pub label: PairLabel,
}

impl CandidatePair {
    pub fn is_positive(&self) -> bool {
        self.label == PairLabel::Contains
    }
}

/// Tokens strictly between the two spans; 0 when adjacent or overlapping.
pub fn token_distance(e1: &Entity, e2: &Entity) -> usize {
    let (first, second) = if e1.start <= e2.start { (e1, e2) } else { (e2, e1) };
    second.start.saturating_sub(first.end)
}

pub fn pair_kind(a: EntityKind, b: EntityKind) -> Option<PairKind> {
    match (a, b) {
        (EntityKind::Event, EntityKind::Event) => Some(PairKind::EE),
        (EntityKind::Timex3, EntityKind::Timex3) => None,
        _ => Some(PairKind::TE),
    }
}

/// Entities in text order (by span start, then end, then listing order).
fn ordered_entities(doc: &Document) -> Vec<&Entity> {
    let mut ents: Vec<&Entity> = doc.entities.iter().collect();
    ents.sort_by_key(|e| (e.start, e.end));
    ents
}

/// Every ordered EE/TE pair within `max_dist` tokens, both argument orders.
pub fn generate_candidates(doc: &Document, max_dist: usize) -> Vec<CandidatePair> {
    let gold: HashSet<(&str, &str)> = doc
        .relations
        .iter()
        .map(|r| (r.source.as_str(), r.target.as_str()))
        .collect();
    let ents = ordered_entities(doc);
    let mut out = Vec::new();
    for a in &ents {
        for b in &ents {
            if a.id == b.id {
                continue;
            }
            let Some(kind) = pair_kind(a.kind, b.kind) else {
                continue;
            };
            let distance = token_distance(a, b);
            if distance > max_dist {
                continue;
            }
            let label = if gold.contains(&(a.id.as_str(), b.id.as_str())) {
                PairLabel::Contains
            } else {
                PairLabel::None
            };
            out.push(CandidatePair {
                doc_id: doc.id.clone(),
                arg1: a.id.clone(),
                arg2: b.id.clone(),
                kind,
                distance,
                label,
            });
        }
    }
    out
}

/// Fraction of gold relations whose ordered pair is generated as a candidate.
pub fn recall_ceiling(docs: &[Document], max_dist: usize) -> f64 {
    let (mut covered, mut total) = (0usize, 0usize);
    for doc in docs {
        let cands: HashSet<(String, String)> = generate_candidates(doc, max_dist)
            .into_iter()
            .map(|c| (c.arg1, c.arg2))
            .collect();
        for r in &doc.relations {
            total += 1;
            if cands.contains(&(r.source.clone(), r.target.clone())) {
                covered += 1;
            }
        }
    }
    if total == 0 {
        1.0
    } else {
        covered as f64 / total as f64
    }
}

/// Writes `doc_id,arg1,arg2,kind,distance,label` rows.
pub fn write_candidates_csv<W: Write>(mut w: W, cands: &[CandidatePair]) -> std::io::Result<()> {
    writeln!(w, "doc_id,arg1,arg2,kind,distance,label")?;
    for c in cands {
        let kind = match c.kind {
            PairKind::EE => "EE",
            PairKind::TE => "TE",
        };
        let label = match c.label {
            PairLabel::Contains => "CONTAINS",
            PairLabel::None => "NONE",
        };
        writeln!(w, "{},{},{},{kind},{},{label}", c.doc_id, c.arg1, c.arg2, c.distance)?;
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RcInputConfig {
    /// Tokens kept on each side of the argument pair.
    pub context: usize,
    /// Position features are clipped to `[-d_clip, d_clip]`.
    pub d_clip: usize,
}

impl Default for RcInputConfig {
    fn default() -> Self {
        RcInputConfig {
            context: 10,
            d_clip: 40,
        }
    }
}

/// Encoded classifier input. All sequences have the same length.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RcInput {
    pub tokens: Vec<usize>,
    pub pos: Vec<usize>,
    /// Clipped signed distance to `arg1` / `arg2`.
    pub pf1: Vec<i32>,
    pub pf2: Vec<i32>,
    /// Document position of each element; `None` for indicator tags.
    pub source: Vec<Option<usize>>,
}

impl RcInput {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

/// Signed distance of position `p` to a span; 0 inside it.
fn signed_distance(p: usize, e: &Entity) -> i64 {
    if p < e.start {
        p as i64 - e.start as i64
    } else if p >= e.end {
        p as i64 - (e.end as i64 - 1)
    } else {
        0
    }
}

pub fn build_rc_input(doc: &Document, pair: &CandidatePair, vocab: &Vocabulary, cfg: &RcInputConfig) -> Result<RcInput> {
    if pair.doc_id != doc.id {
        return Err(Error::Mismatch(format!(
            "candidate from document {} applied to {}",
            pair.doc_id, doc.id
        )));
    }
    let find = |id: &str| {
        doc.entity(id)
            .ok_or_else(|| Error::Mismatch(format!("entity {id} not in document {}", doc.id)))
    };
    let a1 = find(&pair.arg1)?;
    let a2 = find(&pair.arg2)?;
    let lo = a1.start.min(a2.start).saturating_sub(cfg.context);
    let hi = (a1.end.max(a2.end) + cfg.context).min(doc.tokens.len());

    let clip = cfg.d_clip as i64;
    let pf = |p: usize, e: &Entity| signed_distance(p, e).clamp(-clip, clip) as i32;
    let tag_pos = vocab.pos_tag_index();
    let mut out = RcInput {
        tokens: Vec::new(),
        pos: Vec::new(),
        pf1: Vec::new(),
        pf2: Vec::new(),
        source: Vec::new(),
    };
    let push_tag = |out: &mut RcInput, tag: &str, anchor: usize| {
        out.tokens.push(vocab.reserved(tag));
        out.pos.push(tag_pos);
        out.pf1.push(pf(anchor, a1));
        out.pf2.push(pf(anchor, a2));
        out.source.push(None);
    };
    for p in lo..hi {
        if p == a1.start {
            push_tag(&mut out, A1_OPEN, p);
        }
        if p == a2.start {
            push_tag(&mut out, A2_OPEN, p);
        }
        let tok = &doc.tokens[p];
        out.tokens.push(vocab.encode_token(&tok.surface));
        out.pos.push(vocab.encode_pos(&tok.pos));
        out.pf1.push(pf(p, a1));
        out.pf2.push(pf(p, a2));
        out.source.push(Some(p));
        if p + 1 == a2.end {
            push_tag(&mut out, A2_CLOSE, p);
        }
        if p + 1 == a1.end {
            push_tag(&mut out, A1_CLOSE, p);
        }
    }
    Ok(out)
}
