//! Synthetic containment corpora.
//!
//! Documents are built from *episodes* `X cue Y` (optionally chained as
//! `X cue Y cue Z`) separated by filler text. Whether an episode carries a gold
//! CONTAINS edge depends on three things:
//!
//! - the cue class: forward cues mean `X contains Y`, backward cues mean
//!   `Y contains X`, neutral cues mean nothing;
//! - the container type of the would-be container: timexes always qualify,
//!   events only if they belong to the container-event class;
//! - nothing else; timexes are never contained.
//!
//! The container class of an event is invisible in unlabeled text (all events
//! share contexts), so it can only be learned from labels. Cue classes are
//! visible in unlabeled text: forward and backward cues share a context bag
//! that differs from the neutral cues' bag, and forward/backward cues differ
//! only in which side each signature appears on. Part of every cue class is
//! held out of the labeled training split and only appears in unlabeled text
//! and in dev/test documents.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::model::{Corpus, Document, Entity, EntityKind, Relation, Split};
use super::preprocess::{is_punctuation, NEWLINE};
use crate::candidates::generate_candidates;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SynthRule {
    /// Forward cues between two entities plant `X contains Y`.
    LexicalCue,
    /// Backward cues flip the direction: `Y contains X`.
    OrderCue,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSpec {
    pub train_docs: usize,
    pub dev_docs: usize,
    pub test_docs: usize,
    pub unlabeled_docs: usize,
    pub unlabeled_phrases_per_doc: usize,
    pub container_events: usize,
    pub plain_events: usize,
    pub timex_words: usize,
    pub cue_words_per_class: usize,
    /// Fraction of each cue class kept out of the labeled training split.
    pub heldout_cue_fraction: f64,
    pub filler_words: usize,
    pub signature_words: usize,
    /// Entity mentions placed in episodes per document.
    pub events_per_doc: usize,
    pub rules: Vec<SynthRule>,
    /// Probability that an episode uses a neutral cue (when relation rules exist).
    pub neutral_cue_rate: f64,
    pub timex_rate: f64,
    pub multi_token_timex_rate: f64,
    pub chain_rate: f64,
    pub gap_min: usize,
    pub gap_max: usize,
    /// Target negatives per positive candidate; distractor events are added
    /// until it is reached.
    pub negatives_per_positive: f64,
    pub max_dist: usize,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            train_docs: 30,
            dev_docs: 12,
            test_docs: 12,
            unlabeled_docs: 150,
            unlabeled_phrases_per_doc: 30,
            container_events: 20,
            plain_events: 20,
            timex_words: 10,
            cue_words_per_class: 8,
            heldout_cue_fraction: 0.5,
            filler_words: 40,
            signature_words: 6,
            events_per_doc: 20,
            rules: vec![SynthRule::LexicalCue, SynthRule::OrderCue],
            neutral_cue_rate: 0.2,
            timex_rate: 0.2,
            multi_token_timex_rate: 0.3,
            chain_rate: 0.15,
            gap_min: 14,
            gap_max: 30,
            negatives_per_positive: 36.0,
            max_dist: 30,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("infeasible synthetic spec: {m}")));
        if !self.rules.is_empty() && self.events_per_doc < 2 {
            return bad("relation rules need at least 2 events per document");
        }
        if self.train_docs == 0 {
            return bad("no training documents");
        }
        if self.container_events == 0 || self.plain_events == 0 || self.timex_words == 0 {
            return bad("every word class needs at least one member");
        }
        if self.cue_words_per_class == 0 || self.filler_words == 0 || self.signature_words == 0 {
            return bad("every word class needs at least one member");
        }
        if !(0.0..1.0).contains(&self.heldout_cue_fraction) {
            return bad("held-out cue fraction must be in [0, 1)");
        }
        for (name, p) in [
            ("neutral cue rate", self.neutral_cue_rate),
            ("timex rate", self.timex_rate),
            ("multi-token timex rate", self.multi_token_timex_rate),
            ("chain rate", self.chain_rate),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return bad(&format!("{name} must be a probability"));
            }
        }
        if self.gap_min < 1 || self.gap_max < self.gap_min {
            return bad("gap bounds must satisfy 1 <= gap_min <= gap_max");
        }
        if self.negatives_per_positive <= 0.0 {
            return bad("negatives per positive must be positive");
        }
        Ok(())
    }

    fn seen_cues(&self) -> usize {
        let held = (self.cue_words_per_class as f64 * self.heldout_cue_fraction).round() as usize;
        (self.cue_words_per_class - held).max(1)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum CueClass {
    Forward,
    Backward,
    Neutral,
}

/// The generated word inventory.
#[derive(Clone, Debug)]
pub struct SynthLexicon {
    pub container_events: Vec<String>,
    pub plain_events: Vec<String>,
    pub timex: Vec<String>,
    pub forward_cues: Vec<String>,
    pub backward_cues: Vec<String>,
    pub neutral_cues: Vec<String>,
    pub fillers: Vec<String>,
    /// Signature sets: left/right sides of contain cues, neutral-cue context,
    /// event context.
    pub sig_p: Vec<String>,
    pub sig_q: Vec<String>,
    pub sig_r: Vec<String>,
    pub sig_u: Vec<String>,
    seen_cues: usize,
}

impl SynthLexicon {
    fn cues(&self, class: CueClass) -> &[String] {
        match class {
            CueClass::Forward => &self.forward_cues,
            CueClass::Backward => &self.backward_cues,
            CueClass::Neutral => &self.neutral_cues,
        }
    }

    /// Cue words that may appear in labeled training documents.
    pub fn seen_cues(&self) -> impl Iterator<Item = &String> {
        [&self.forward_cues, &self.backward_cues, &self.neutral_cues]
            .into_iter()
            .flat_map(move |c| c.iter().take(self.seen_cues))
    }

    /// Cue words reserved for unlabeled text and dev/test documents.
    pub fn heldout_cues(&self) -> impl Iterator<Item = &String> {
        [&self.forward_cues, &self.backward_cues, &self.neutral_cues]
            .into_iter()
            .flat_map(move |c| c.iter().skip(self.seen_cues))
    }
}

#[derive(Clone, Debug)]
pub struct SynthOutput {
    pub train: Corpus,
    pub dev: Corpus,
    pub test: Corpus,
    /// Unlabeled raw texts sharing the vocabulary.
    pub raw_texts: Vec<String>,
    pub lexicon: SynthLexicon,
}

/// Suffix-rule POS tagger, only meant for synthetic text.
pub fn suffix_tag(token: &str) -> &'static str {
    if token == NEWLINE {
        return "NL";
    }
    if token.chars().all(|c| c.is_ascii_digit()) {
        return "CD";
    }
    if token.chars().count() == 1 && token.chars().all(is_punctuation) {
        return "PUNCT";
    }
    let lower = token.to_lowercase();
    const RULES: [(&str, &str); 9] = [
        ("tion", "NN"),
        ("sis", "NN"),
        ("ment", "NN"),
        ("ed", "VBD"),
        ("ing", "VBG"),
        ("ly", "RB"),
        ("ith", "IN"),
        ("day", "NNP"),
        ("ber", "NNP"),
    ];
    for (suffix, tag) in RULES {
        if lower.ends_with(suffix) {
            return tag;
        }
    }
    if lower.chars().count() <= 3 {
        "DT"
    } else {
        "NN"
    }
}

const ONSETS: [&str; 14] = ["b", "c", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v"];
const VOWELS: [&str; 5] = ["a", "e", "i", "o", "u"];

fn pseudo_word(rng: &mut ChaCha8Rng, used: &mut HashSet<String>, suffixes: &[&str], syllables: usize) -> String {
    loop {
        let mut w = String::new();
        for _ in 0..syllables {
            w.push_str(ONSETS.choose(rng).unwrap());
            w.push_str(VOWELS.choose(rng).unwrap());
        }
        w.push_str(suffixes.choose(rng).unwrap());
        if used.insert(w.clone()) {
            return w;
        }
    }
}

fn lexicon(spec: &SynthSpec, rng: &mut ChaCha8Rng) -> SynthLexicon {
    let mut used = HashSet::new();
    let mut make = |n: usize, suffixes: &[&str], syl: usize, rng: &mut ChaCha8Rng| -> Vec<String> {
        (0..n).map(|_| pseudo_word(rng, &mut used, suffixes, syl)).collect()
    };
    // Container and plain events draw from the same suffix pool so POS tags
    // carry no container information.
    let event_suffixes = ["tion", "sis", "ment"];
    let container_events = make(spec.container_events, &event_suffixes, 2, rng);
    let plain_events = make(spec.plain_events, &event_suffixes, 2, rng);
    let timex = make(spec.timex_words, &["day"], 1, rng);
    let cue_suffix = ["ith"];
    let forward_cues = make(spec.cue_words_per_class, &cue_suffix, 1, rng);
    let backward_cues = make(spec.cue_words_per_class, &cue_suffix, 1, rng);
    let neutral_cues = make(spec.cue_words_per_class, &cue_suffix, 1, rng);
    let mut fillers = make(spec.filler_words / 2, &["o", "e", "a"], 1, rng);
    fillers.extend(make(spec.filler_words - spec.filler_words / 2, &["ly", "ed", "ing", "ar"], 2, rng));
    let sig = |rng: &mut ChaCha8Rng, make: &mut dyn FnMut(usize, &[&str], usize, &mut ChaCha8Rng) -> Vec<String>| {
        make(spec.signature_words, &["ar", "ul", "en"], 2, rng)
    };
    let sig_p = sig(rng, &mut make);
    let sig_q = sig(rng, &mut make);
    let sig_r = sig(rng, &mut make);
    let sig_u = sig(rng, &mut make);
    SynthLexicon {
        container_events,
        plain_events,
        timex,
        forward_cues,
        backward_cues,
        neutral_cues,
        fillers,
        sig_p,
        sig_q,
        sig_r,
        sig_u,
        seen_cues: spec.seen_cues(),
    }
}

/// A contiguous piece of a document before flattening.
#[derive(Clone, Debug)]
struct Segment {
    tokens: Vec<String>,
    /// `(local start, local end, kind)` of entities in this segment.
    entities: Vec<(usize, usize, EntityKind)>,
    /// Gold edges between entity slots of this segment.
    relations: Vec<(usize, usize)>,
}

#[derive(Clone, Copy)]
enum Slot {
    Timex,
    Container,
    Plain,
}

impl Slot {
    fn is_container(self) -> bool {
        matches!(self, Slot::Timex | Slot::Container)
    }
}

struct DocBuilder<'a> {
    spec: &'a SynthSpec,
    lex: &'a SynthLexicon,
    allow_heldout: bool,
    classes: Vec<CueClass>,
}

impl DocBuilder<'_> {
    fn cue(&self, rng: &mut ChaCha8Rng, class: CueClass) -> String {
        let members = self.lex.cues(class);
        let n = if self.allow_heldout {
            members.len()
        } else {
            self.lex.seen_cues
        };
        members[rng.gen_range(0..n)].clone()
    }

    fn entity_tokens(&self, rng: &mut ChaCha8Rng, slot: Slot) -> (Vec<String>, EntityKind) {
        match slot {
            Slot::Timex => {
                let word = self.lex.timex.choose(rng).unwrap().clone();
                if rng.gen_bool(self.spec.multi_token_timex_rate) {
                    (vec![rng.gen_range(1..=28).to_string(), word], EntityKind::Timex3)
                } else {
                    (vec![word], EntityKind::Timex3)
                }
            }
            Slot::Container => (vec![self.lex.container_events.choose(rng).unwrap().clone()], EntityKind::Event),
            Slot::Plain => (vec![self.lex.plain_events.choose(rng).unwrap().clone()], EntityKind::Event),
        }
    }

    fn event_slot(&self, rng: &mut ChaCha8Rng) -> Slot {
        if rng.gen_bool(0.5) {
            Slot::Container
        } else {
            Slot::Plain
        }
    }

    fn episode(&self, rng: &mut ChaCha8Rng, mentions: usize) -> Segment {
        let mut slots = Vec::with_capacity(mentions);
        for i in 0..mentions {
            // Only the outer positions may be timexes; two timexes never pair.
            let timex_ok = (i == 0 || i + 1 == mentions)
                && !slots.iter().any(|s| matches!(s, Slot::Timex));
            if timex_ok && rng.gen_bool(self.spec.timex_rate) {
                slots.push(Slot::Timex);
            } else {
                slots.push(self.event_slot(rng));
            }
        }
        let mut seg = Segment {
            tokens: Vec::new(),
            entities: Vec::new(),
            relations: Vec::new(),
        };
        for (i, &slot) in slots.iter().enumerate() {
            if i > 0 {
                let class = if self.classes.is_empty() || rng.gen_bool(self.spec.neutral_cue_rate) {
                    CueClass::Neutral
                } else {
                    *self.classes.choose(rng).unwrap()
                };
                seg.tokens.push(self.cue(rng, class));
                let (left, right) = (slots[i - 1], slot);
                match class {
                    CueClass::Forward if left.is_container() && !matches!(right, Slot::Timex) => {
                        seg.relations.push((i - 1, i))
                    }
                    CueClass::Backward if right.is_container() && !matches!(left, Slot::Timex) => {
                        seg.relations.push((i, i - 1))
                    }
                    _ => {}
                }
            }
            let (toks, kind) = self.entity_tokens(rng, slot);
            let start = seg.tokens.len();
            seg.tokens.extend(toks);
            seg.entities.push((start, seg.tokens.len(), kind));
        }
        seg
    }

    fn filler(&self, rng: &mut ChaCha8Rng, len: usize) -> Segment {
        let mut tokens = Vec::with_capacity(len + 1);
        for _ in 0..len {
            tokens.push(self.lex.fillers.choose(rng).unwrap().clone());
        }
        let r: f64 = rng.gen();
        if r < 0.3 {
            tokens.push(".".into());
        } else if r < 0.4 {
            tokens.push(NEWLINE.into());
        } else if r < 0.5 {
            tokens.push(",".into());
        }
        Segment {
            tokens,
            entities: Vec::new(),
            relations: Vec::new(),
        }
    }

    fn distractor(&self, rng: &mut ChaCha8Rng) -> Segment {
        let slot = if rng.gen_bool(self.spec.timex_rate) {
            Slot::Timex
        } else {
            self.event_slot(rng)
        };
        let (toks, kind) = self.entity_tokens(rng, slot);
        let mut seg = self.filler(rng, 1);
        let start = seg.tokens.len();
        let end = start + toks.len();
        seg.tokens.extend(toks);
        seg.entities.push((start, end, kind));
        seg
    }

    fn flatten(&self, id: &str, segments: &[Segment]) -> Document {
        let mut tokens = Vec::new();
        let mut entities = Vec::new();
        let mut relations = Vec::new();
        for seg in segments {
            let offset = tokens.len();
            let first = entities.len();
            for &(s, e, kind) in &seg.entities {
                let prefix = if kind == EntityKind::Event { "e" } else { "t" };
                entities.push(Entity {
                    id: format!("{prefix}{}", entities.len()),
                    kind,
                    start: offset + s,
                    end: offset + e,
                });
            }
            for &(a, b) in &seg.relations {
                relations.push(Relation::contains(&entities[first + a].id, &entities[first + b].id));
            }
            tokens.extend(seg.tokens.iter().cloned());
        }
        Document::new(
            id,
            tokens.into_iter().map(|t| {
                let pos = suffix_tag(&t).to_string();
                (t, pos)
            }),
            entities,
            relations,
        )
    }

    fn document(&self, rng: &mut ChaCha8Rng, id: &str) -> Document {
        let mut segments = Vec::new();
        let mut remaining = self.spec.events_per_doc;
        while remaining >= 2 {
            let mentions = if remaining >= 3 && rng.gen_bool(self.spec.chain_rate) { 3 } else { 2 };
            remaining -= mentions;
            let gap = rng.gen_range(self.spec.gap_min..=self.spec.gap_max);
            segments.push(self.filler(rng, gap));
            segments.push(self.episode(rng, mentions));
        }
        if remaining == 1 {
            segments.push(self.distractor(rng));
        }
        let gap = rng.gen_range(self.spec.gap_min..=self.spec.gap_max);
        segments.push(self.filler(rng, gap));

        let episodes = self.spec.events_per_doc / 2;
        let mut previous: Option<(Document, f64)> = None;
        loop {
            let doc = self.flatten(id, &segments);
            let cands = generate_candidates(&doc, self.spec.max_dist);
            let pos = cands.iter().filter(|c| c.is_positive()).count();
            let neg = (cands.len() - pos) as f64;
            // Without positives, aim for what an average document would have.
            let expected_pos = if pos > 0 { pos as f64 } else { (episodes as f64 * 0.4).max(1.0) };
            let target = expected_pos * self.spec.negatives_per_positive;
            if neg >= target {
                // Keep whichever of the last two documents lands closer to the target.
                return match previous {
                    Some((prev, prev_neg)) if target - prev_neg < neg - target => prev,
                    _ => doc,
                };
            }
            if segments.len() > 4 * self.spec.events_per_doc + 40 {
                return doc;
            }
            previous = Some((doc, neg));
            let at = rng.gen_range(0..=segments.len());
            segments.insert(at, self.distractor(rng));
        }
    }

    fn corpus(&self, rng: &mut ChaCha8Rng, split: Split, n: usize) -> Corpus {
        let documents = (0..n)
            .map(|i| self.document(rng, &format!("{split}_{i:04}")))
            .collect();
        Corpus { split, documents }
    }
}

fn unlabeled_text(spec: &SynthSpec, lex: &SynthLexicon, rng: &mut ChaCha8Rng) -> String {
    let pick = |set: &[String], rng: &mut ChaCha8Rng| set.choose(rng).unwrap().clone();
    let mut words: Vec<String> = Vec::new();
    for _ in 0..spec.unlabeled_phrases_per_doc {
        let kind = rng.gen_range(0..5);
        let phrase: Vec<String> = match kind {
            0 => {
                let c = pick(&lex.forward_cues, rng);
                vec![pick(&lex.sig_p, rng), pick(&lex.sig_p, rng), c, pick(&lex.sig_q, rng), pick(&lex.sig_q, rng)]
            }
            1 => {
                let c = pick(&lex.backward_cues, rng);
                vec![pick(&lex.sig_q, rng), pick(&lex.sig_q, rng), c, pick(&lex.sig_p, rng), pick(&lex.sig_p, rng)]
            }
            2 => {
                let c = pick(&lex.neutral_cues, rng);
                vec![pick(&lex.sig_r, rng), pick(&lex.sig_r, rng), c, pick(&lex.sig_r, rng), pick(&lex.sig_r, rng)]
            }
            3 => {
                let e = if rng.gen_bool(0.5) {
                    pick(&lex.container_events, rng)
                } else {
                    pick(&lex.plain_events, rng)
                };
                vec![pick(&lex.sig_u, rng), pick(&lex.sig_u, rng), e, pick(&lex.sig_u, rng), pick(&lex.sig_u, rng)]
            }
            _ => {
                let mut v = vec![pick(&lex.sig_u, rng)];
                if rng.gen_bool(0.3) {
                    v.push(format!("{}", rng.gen_range(1990..2020)));
                }
                v.push(pick(&lex.timex, rng));
                v.push(pick(&lex.sig_u, rng));
                v
            }
        };
        words.extend(phrase);
        let n_fill = rng.gen_range(1..=3);
        for _ in 0..n_fill {
            words.push(pick(&lex.fillers, rng));
        }
        match rng.gen_range(0..4) {
            0 => words.push(".\n".into()),
            1 => words.push(".".into()),
            _ => {}
        }
    }
    let mut text = String::new();
    for w in words {
        if !text.is_empty() && !text.ends_with('\n') {
            text.push(' ');
        }
        text.push_str(&w);
    }
    text.push('\n');
    text
}

/// Generates train/dev/test corpora and unlabeled texts. Equal `(spec, seed)`
/// give identical output.
pub fn generate_synthetic(spec: &SynthSpec, seed: u64) -> Result<SynthOutput> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lex = lexicon(spec, &mut rng);
    let mut classes = Vec::new();
    if spec.rules.contains(&SynthRule::LexicalCue) {
        classes.push(CueClass::Forward);
    }
    if spec.rules.contains(&SynthRule::OrderCue) {
        classes.push(CueClass::Backward);
    }
    let seen = DocBuilder {
        spec,
        lex: &lex,
        allow_heldout: false,
        classes: classes.clone(),
    };
    let all = DocBuilder {
        spec,
        lex: &lex,
        allow_heldout: true,
        classes,
    };
    let train = seen.corpus(&mut rng, Split::Train, spec.train_docs);
    let dev = all.corpus(&mut rng, Split::Dev, spec.dev_docs);
    let test = all.corpus(&mut rng, Split::Test, spec.test_docs);
    let raw_texts = (0..spec.unlabeled_docs)
        .map(|_| unlabeled_text(spec, &lex, &mut rng))
        .collect();
    Ok(SynthOutput {
        train,
        dev,
        test,
        raw_texts,
        lexicon: lex,
    })
}
