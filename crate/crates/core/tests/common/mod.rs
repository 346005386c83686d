//! Synthetic-data fixtures shared by the integration tests.
#![allow(dead_code)]

use crsg::candidates::RcInputConfig;
use crsg::corpus::*;
use crsg::models::ModelConfig;
use crsg::neural::embedding_file::EmbeddingFile;
use crsg::trainer::{pretrain_sg, Setting, SweepData, TrainConfig};

/// A generated, preprocessed corpus with everything the five settings need.
pub struct Fixture {
    pub train: Corpus,
    pub dev: Corpus,
    pub raw: Vec<String>,
    pub vocab: Vocabulary,
    pub counts: TokenCounts,
    pub sg: SgDataset,
    pub sglr: SgDataset,
    pub pretrained: EmbeddingFile,
}

impl Fixture {
    pub fn new(spec: &SynthSpec, seed: u64, embed_dim: usize, pretrain_epochs: usize) -> Fixture {
        let out = generate_synthetic(spec, seed).unwrap();
        let cfg = PreprocessConfig::default();
        let (mut train, mut dev) = (out.train, out.dev);
        preprocess_corpus(&mut train, &cfg);
        preprocess_corpus(&mut dev, &cfg);
        let vocab = build_vocab(&train, &out.raw_texts, &cfg).unwrap();
        let counts = TokenCounts::count(&train, &out.raw_texts, &cfg);
        let streams = sg_token_streams(&train, &out.raw_texts, &cfg);
        let sg = build_sg_dataset(&streams, &vocab, 2, SgMode::Sg).unwrap();
        let sglr = build_sg_dataset(&streams, &vocab, 2, SgMode::Sglr).unwrap();
        let vectors = pretrain_sg(&sg, embed_dim, pretrain_epochs, 1024, seed).unwrap();
        let pretrained = EmbeddingFile {
            words: vocab.tokens().to_vec(),
            vectors,
        };
        Fixture {
            train,
            dev,
            raw: out.raw_texts,
            vocab,
            counts,
            sg,
            sglr,
            pretrained,
        }
    }

    /// The auxiliary dataset a setting trains with, if any.
    pub fn aux(&self, setting: Setting) -> Option<&SgDataset> {
        setting.auxiliary().map(|m| if m == SgMode::Sg { &self.sg } else { &self.sglr })
    }

    pub fn sweep_data(&self) -> SweepData<'_> {
        SweepData {
            train: &self.train,
            dev: &self.dev,
            vocab: &self.vocab,
            sg: Some(&self.sg),
            sglr: Some(&self.sglr),
            pretrained: Some(&self.pretrained),
            runs_dir: None,
        }
    }
}

/// A corpus whose only rule is a lexical cue seen in training, with few
/// event words and distractors: a classifier can separate it exactly.
pub fn separable_spec() -> SynthSpec {
    SynthSpec {
        train_docs: 30,
        container_events: 4,
        plain_events: 4,
        dev_docs: 6,
        test_docs: 2,
        unlabeled_docs: 20,
        unlabeled_phrases_per_doc: 10,
        rules: vec![SynthRule::LexicalCue],
        heldout_cue_fraction: 0.0,
        neutral_cue_rate: 0.0,
        timex_rate: 0.0,
        chain_rate: 0.0,
        events_per_doc: 6,
        negatives_per_positive: 3.0,
        ..SynthSpec::default()
    }
}

/// A small, quick model configuration for mechanics tests.
pub fn small_config(setting: Setting, seed: u64) -> TrainConfig {
    TrainConfig {
        setting,
        model: ModelConfig {
            hidden: 8,
            ..ModelConfig::default()
        },
        input: RcInputConfig { context: 3, d_clip: 40 },
        batch_size: 16,
        min_epochs: 2,
        patience: 2,
        max_epochs: 4,
        seed,
        ..TrainConfig::default()
    }
}
