//! Closure-based precision/recall for CONTAINS edges, overall and on subsets.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::candidates::{pair_kind, CandidatePair, PairKind};
use crate::corpus::{Corpus, Document, TokenCounts};
use crate::{Error, Real, Result};

/// A directed CONTAINS edge `(source, target)` within one document.
pub type Edge = (String, String);

/// Per-document sets of CONTAINS edges.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct RelationSet {
    docs: BTreeMap<String, BTreeSet<Edge>>,
}

impl RelationSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Gold edges of every document. Documents without relations still get an
    /// (empty) entry so that document coverage can be checked.
    pub fn from_corpus(corpus: &Corpus) -> Self {
        let mut set = RelationSet::new();
        for doc in &corpus.documents {
            set.add_document(&doc.id);
            for r in &doc.relations {
                set.insert(&doc.id, &r.source, &r.target);
            }
        }
        set
    }

    pub fn add_document(&mut self, doc: &str) {
        self.docs.entry(doc.to_string()).or_default();
    }

    /// Inserts an edge; self-loops are dropped. Returns whether the edge is new.
    pub fn insert(&mut self, doc: &str, source: &str, target: &str) -> bool {
        let edges = self.docs.entry(doc.to_string()).or_default();
        if source == target {
            return false;
        }
        edges.insert((source.to_string(), target.to_string()))
    }

    pub fn contains(&self, doc: &str, source: &str, target: &str) -> bool {
        self.docs
            .get(doc)
            .is_some_and(|e| e.contains(&(source.to_string(), target.to_string())))
    }

    pub fn documents(&self) -> impl Iterator<Item = &str> {
        self.docs.keys().map(String::as_str)
    }

    pub fn edges(&self, doc: &str) -> Option<&BTreeSet<Edge>> {
        self.docs.get(doc)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Edge)> {
        self.docs
            .iter()
            .flat_map(|(d, edges)| edges.iter().map(move |e| (d.as_str(), e)))
    }

    pub fn len(&self) -> usize {
        self.docs.values().map(BTreeSet::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// The transitive closure of a relation set together with the entities that
/// sit on a cycle (they would reach themselves).
#[derive(Clone, Debug, Default)]
pub struct Closure {
    pub relations: RelationSet,
    pub cyclic: Vec<(String, String)>,
}

fn close_edges(edges: &BTreeSet<Edge>) -> (BTreeSet<Edge>, Vec<String>) {
    let mut nodes: Vec<&str> = Vec::new();
    for (a, b) in edges {
        nodes.push(a);
        nodes.push(b);
    }
    nodes.sort_unstable();
    nodes.dedup();
    let index: HashMap<&str, usize> = nodes.iter().enumerate().map(|(i, n)| (*n, i)).collect();
    let n = nodes.len();
    let mut reach = vec![vec![false; n]; n];
    for (a, b) in edges {
        reach[index[a.as_str()]][index[b.as_str()]] = true;
    }
    // Warshall.
    for k in 0..n {
        for i in 0..n {
            if reach[i][k] {
                for j in 0..n {
                    if reach[k][j] {
                        reach[i][j] = true;
                    }
                }
            }
        }
    }
    let mut closed = BTreeSet::new();
    let mut cyclic = Vec::new();
    for i in 0..n {
        for j in 0..n {
            if !reach[i][j] {
                continue;
            }
            if i == j {
                cyclic.push(nodes[i].to_string());
            } else {
                closed.insert((nodes[i].to_string(), nodes[j].to_string()));
            }
        }
    }
    (closed, cyclic)
}

/// Smallest superset closed under `(a,b),(b,c) => (a,c)`. Self-loops produced
/// by cycles are not part of the result; the affected entities are reported
/// in `cyclic`.
pub fn transitive_closure(rels: &RelationSet) -> Closure {
    let mut out = Closure::default();
    for (doc, edges) in &rels.docs {
        let (closed, cyclic) = close_edges(edges);
        out.cyclic.extend(cyclic.into_iter().map(|id| (doc.clone(), id)));
        out.relations.docs.insert(doc.clone(), closed);
    }
    out
}

/// Raw counts behind a precision/recall pair.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    /// Predicted edges supported by the closure of the gold set.
    pub pred_correct: usize,
    pub predicted: usize,
    /// Gold edges recovered by the closure of the prediction.
    pub gold_found: usize,
    pub gold: usize,
}

impl Counts {
    fn add(&mut self, other: Counts) {
        self.pred_correct += other.pred_correct;
        self.predicted += other.predicted;
        self.gold_found += other.gold_found;
        self.gold += other.gold;
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    #[serde(rename = "P")]
    pub precision: Real,
    #[serde(rename = "R")]
    pub recall: Real,
    #[serde(rename = "F")]
    pub f: Real,
    pub counts: Counts,
    /// Set when there were no predictions (precision reported as 0).
    pub no_predictions: bool,
    /// Set when there were no gold edges (recall reported as 0).
    pub no_gold: bool,
}

impl Metrics {
    pub fn from_counts(counts: Counts) -> Self {
        let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { num as Real / den as Real };
        let precision = ratio(counts.pred_correct, counts.predicted);
        let recall = ratio(counts.gold_found, counts.gold);
        let f = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        Metrics {
            precision,
            recall,
            f,
            counts,
            no_predictions: counts.predicted == 0,
            no_gold: counts.gold == 0,
        }
    }
}

fn check_documents(gold: &RelationSet, pred: &RelationSet) -> Result<()> {
    let unknown: Vec<&str> = pred.documents().filter(|d| !gold.docs.contains_key(*d)).collect();
    if unknown.is_empty() {
        Ok(())
    } else {
        Err(Error::Mismatch(format!(
            "predictions for documents missing from gold: {}",
            unknown.join(", ")
        )))
    }
}

/// Gold and predicted sets with their closures.
struct Closed<'a> {
    gold: &'a RelationSet,
    pred: &'a RelationSet,
    gold_closure: RelationSet,
    pred_closure: RelationSet,
}

impl<'a> Closed<'a> {
    /// Gold cycles are annotation noise and logged as warnings; cycles in
    /// predictions are ordinary model output.
    fn new(gold: &'a RelationSet, pred: &'a RelationSet) -> Result<Self> {
        check_documents(gold, pred)?;
        let g = transitive_closure(gold);
        for (doc, id) in &g.cyclic {
            log::warn!("gold document {doc}: entity {id} lies on a CONTAINS cycle");
        }
        let p = transitive_closure(pred);
        if !p.cyclic.is_empty() {
            log::debug!("{} predicted entities lie on CONTAINS cycles", p.cyclic.len());
        }
        Ok(Closed {
            gold,
            pred,
            gold_closure: g.relations,
            pred_closure: p.relations,
        })
    }

    fn metrics(&self, keep: &dyn Fn(&str, &Edge) -> bool) -> Metrics {
        Metrics::from_counts(filtered_counts(self, keep))
    }

    fn subset(&self, index: &EdgeIndex, filter: SubsetFilter) -> Result<Metrics> {
        // Resolve every edge first so that unknown entities surface as errors.
        for (doc, e) in self.gold.iter().chain(self.pred.iter()) {
            index.matches(doc, e, filter)?;
        }
        Ok(self.metrics(&|doc, e| index.matches(doc, e, filter).unwrap_or(false)))
    }
}

fn filtered_counts(closed: &Closed<'_>, keep: &dyn Fn(&str, &Edge) -> bool) -> Counts {
    let Closed {
        gold,
        pred,
        gold_closure,
        pred_closure,
    } = closed;
    let mut total = Counts::default();
    for (doc, gold_edges) in &gold.docs {
        let mut c = Counts::default();
        let empty = BTreeSet::new();
        let pred_edges = pred.docs.get(doc).unwrap_or(&empty);
        let gold_c = gold_closure.docs.get(doc).unwrap_or(&empty);
        let pred_c = pred_closure.docs.get(doc).unwrap_or(&empty);
        for e in pred_edges.iter().filter(|e| keep(doc, e)) {
            c.predicted += 1;
            if gold_c.contains(e) {
                c.pred_correct += 1;
            }
        }
        for e in gold_edges.iter().filter(|e| keep(doc, e)) {
            c.gold += 1;
            if pred_c.contains(e) {
                c.gold_found += 1;
            }
        }
        total.add(c);
    }
    total
}

/// Micro-averaged closure precision/recall: precision counts predictions
/// implied by the gold closure, recall counts gold edges implied by the
/// prediction closure. Every predicted document must exist in `gold`.
pub fn closure_prf(gold: &RelationSet, pred: &RelationSet) -> Result<Metrics> {
    Ok(Closed::new(gold, pred)?.metrics(&|_, _| true))
}

/// Average-frequency buckets of argument tokens, left-closed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum FreqBucket {
    Below100,
    From100To500,
    From500,
}

impl FreqBucket {
    pub fn of(avg: Real) -> Self {
        if avg < 100.0 {
            FreqBucket::Below100
        } else if avg < 500.0 {
            FreqBucket::From100To500
        } else {
            FreqBucket::From500
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SubsetFilter {
    Kind(PairKind),
    Freq(FreqBucket),
}

impl SubsetFilter {
    pub const ALL: [SubsetFilter; 5] = [
        SubsetFilter::Kind(PairKind::EE),
        SubsetFilter::Kind(PairKind::TE),
        SubsetFilter::Freq(FreqBucket::Below100),
        SubsetFilter::Freq(FreqBucket::From100To500),
        SubsetFilter::Freq(FreqBucket::From500),
    ];

    pub fn name(self) -> &'static str {
        match self {
            SubsetFilter::Kind(PairKind::EE) => "EE",
            SubsetFilter::Kind(PairKind::TE) => "TE",
            SubsetFilter::Freq(FreqBucket::Below100) => "f0_100",
            SubsetFilter::Freq(FreqBucket::From100To500) => "f100_500",
            SubsetFilter::Freq(FreqBucket::From500) => "f500p",
        }
    }
}

impl fmt::Display for SubsetFilter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SubsetFilter {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SubsetFilter::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown subset filter `{s}`")))
    }
}

/// Per-edge metadata needed by the subset filters: the pair kind and the
/// average corpus frequency of the argument tokens.
#[derive(Clone, Debug, Default)]
pub struct EdgeIndex {
    entities: HashMap<(String, String), EntityInfo>,
}

#[derive(Clone, Debug)]
struct EntityInfo {
    kind: crate::corpus::EntityKind,
    freq_sum: Real,
    tokens: usize,
}

impl EdgeIndex {
    /// `counts` must be the frequencies over the labeled training documents
    /// plus the unlabeled texts; `docs` are the evaluated documents.
    pub fn new<'a>(docs: impl IntoIterator<Item = &'a Document>, counts: &TokenCounts) -> Self {
        let mut entities = HashMap::new();
        for doc in docs {
            for e in &doc.entities {
                let freq_sum = doc.tokens[e.start..e.end]
                    .iter()
                    .map(|t| counts.get(&t.surface) as Real)
                    .sum();
                entities.insert(
                    (doc.id.clone(), e.id.clone()),
                    EntityInfo {
                        kind: e.kind,
                        freq_sum,
                        tokens: e.end - e.start,
                    },
                );
            }
        }
        EdgeIndex { entities }
    }

    fn info(&self, doc: &str, id: &str) -> Result<&EntityInfo> {
        self.entities
            .get(&(doc.to_string(), id.to_string()))
            .ok_or_else(|| Error::Mismatch(format!("document {doc}: unknown entity {id}")))
    }

    pub fn kind(&self, doc: &str, edge: &Edge) -> Result<Option<PairKind>> {
        Ok(pair_kind(self.info(doc, &edge.0)?.kind, self.info(doc, &edge.1)?.kind))
    }

    /// Mean frequency over all tokens of both arguments.
    pub fn average_frequency(&self, doc: &str, edge: &Edge) -> Result<Real> {
        let a = self.info(doc, &edge.0)?;
        let b = self.info(doc, &edge.1)?;
        Ok((a.freq_sum + b.freq_sum) / (a.tokens + b.tokens) as Real)
    }

    pub fn matches(&self, doc: &str, edge: &Edge, filter: SubsetFilter) -> Result<bool> {
        Ok(match filter {
            SubsetFilter::Kind(k) => self.kind(doc, edge)? == Some(k),
            SubsetFilter::Freq(b) => FreqBucket::of(self.average_frequency(doc, edge)?) == b,
        })
    }
}

/// Closure metrics restricted to edges passing `filter`. Both closures are
/// taken over the full sets before filtering.
pub fn subset_metrics(
    gold: &RelationSet,
    pred: &RelationSet,
    index: &EdgeIndex,
    filter: SubsetFilter,
) -> Result<Metrics> {
    Closed::new(gold, pred)?.subset(index, filter)
}

/// A candidate becomes an edge iff p(CONTAINS) > p(NONE). `probs[i]` holds
/// `[p(CONTAINS), p(NONE)]` for `candidates[i]`.
pub fn decide_labels(candidates: &[CandidatePair], probs: &[[Real; 2]]) -> Result<RelationSet> {
    if candidates.len() != probs.len() {
        return Err(Error::Shape(format!(
            "{} candidates but {} probability pairs",
            candidates.len(),
            probs.len()
        )));
    }
    let mut set = RelationSet::new();
    for (c, p) in candidates.iter().zip(probs) {
        set.add_document(&c.doc_id);
        if p[0] > p[1] {
            set.insert(&c.doc_id, &c.arg1, &c.arg2);
        }
    }
    Ok(set)
}

/// Overall and per-subset metrics, the layout written as metrics JSON.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub overall: Metrics,
    pub subsets: BTreeMap<String, Metrics>,
}

pub fn evaluate(gold: &RelationSet, pred: &RelationSet, index: &EdgeIndex) -> Result<EvalReport> {
    let closed = Closed::new(gold, pred)?;
    let overall = closed.metrics(&|_, _| true);
    let mut subsets = BTreeMap::new();
    for f in SubsetFilter::ALL {
        subsets.insert(f.name().to_string(), closed.subset(index, f)?);
    }
    Ok(EvalReport { overall, subsets })
}
