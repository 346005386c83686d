//! Documents, preprocessing, vocabulary, skip-gram pairs and synthetic data.

pub mod io;
pub mod model;
pub mod preprocess;
pub mod sg;
pub mod synth;
pub mod vocab;

pub use io::{load_corpus, load_raw_texts, save_corpus, save_raw_texts};
pub use model::{Corpus, Document, Entity, EntityKind, Relation, RelationLabel, Split, Token};
pub use preprocess::{preprocess, preprocess_corpus, PreprocessConfig};
pub use sg::{build_sg_dataset, sg_token_streams, SgDataset, SgMode, SgPair};
pub use synth::{generate_synthetic, SynthOutput, SynthRule, SynthSpec};
pub use vocab::{build_vocab, TokenCounts, Vocabulary};
