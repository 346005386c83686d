//! Training loops: skip-gram pre-training, the five classifier settings with
//! early stopping, and the lambda / training-size sweeps.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::candidates::{build_rc_input, generate_candidates, CandidatePair, RcInputConfig};
use crate::corpus::{Corpus, Document, SgDataset, SgMode, SgPair, Vocabulary};
use crate::eval::{closure_prf, decide_labels, Metrics, RelationSet};
use crate::models::{
    combined_loss, init_embeddings, register_token_embedding, set_embedding_trainable, EmbeddingSource, InitReport,
    JointModel, LossWeights, ModelConfig, RcExample, SgModel,
};
use crate::neural::embedding_file::EmbeddingFile;
use crate::neural::{adam_step, AdamConfig, AdamState, Mode, ParameterStore, Tensor};
use crate::{Error, Real, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Setting {
    #[serde(rename = "rc-random")]
    RcRandom,
    #[serde(rename = "rc-sg-init")]
    RcSgInit,
    #[serde(rename = "rc-sg-fixed")]
    RcSgFixed,
    #[serde(rename = "rc+sg")]
    RcPlusSg,
    #[serde(rename = "rc+sglr")]
    RcPlusSglr,
}

impl Setting {
    pub const ALL: [Setting; 5] = [
        Setting::RcRandom,
        Setting::RcSgInit,
        Setting::RcSgFixed,
        Setting::RcPlusSg,
        Setting::RcPlusSglr,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Setting::RcRandom => "rc-random",
            Setting::RcSgInit => "rc-sg-init",
            Setting::RcSgFixed => "rc-sg-fixed",
            Setting::RcPlusSg => "rc+sg",
            Setting::RcPlusSglr => "rc+sglr",
        }
    }

    /// Whether the token embedding starts from the pretrained file.
    pub fn uses_pretrained(self) -> bool {
        self != Setting::RcRandom
    }

    /// The auxiliary objective trained jointly with the classifier.
    pub fn auxiliary(self) -> Option<SgMode> {
        match self {
            Setting::RcPlusSg => Some(SgMode::Sg),
            Setting::RcPlusSglr => Some(SgMode::Sglr),
            _ => None,
        }
    }
}

impl fmt::Display for Setting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Setting {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Setting::ALL
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown setting `{s}`")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub setting: Setting,
    pub model: ModelConfig,
    pub input: RcInputConfig,
    pub max_dist: usize,
    /// Examples per step for each task.
    pub batch_size: usize,
    pub min_epochs: usize,
    pub patience: usize,
    pub max_epochs: usize,
    pub lambda_sg: Real,
    pub validation_docs: usize,
    /// Share of the non-validation training documents used, in `(0, 1]`.
    pub train_fraction: Real,
    pub seed: u64,
    #[serde(skip)]
    pub adam: AdamConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            setting: Setting::RcRandom,
            model: ModelConfig::default(),
            input: RcInputConfig::default(),
            max_dist: 30,
            batch_size: 1024,
            min_epochs: 10,
            patience: 20,
            max_epochs: 500,
            lambda_sg: 0.1,
            validation_docs: 3,
            train_fraction: 1.0,
            seed: 0,
            adam: AdamConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        LossWeights::new(self.lambda_sg)?;
        if self.patience == 0 {
            return Err(Error::Config("patience must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be positive".into()));
        }
        if self.max_epochs == 0 {
            return Err(Error::Config("max epochs must be positive".into()));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction <= 1.0) {
            return Err(Error::Config(format!(
                "training fraction must be in (0, 1], got {}",
                self.train_fraction
            )));
        }
        if self.input.d_clip != self.model.d_clip {
            return Err(Error::Config("position-feature clip differs between input and model".into()));
        }
        Ok(())
    }

    /// Flat `key=value` snapshot, one per line, in a fixed order.
    pub fn to_key_values(&self) -> String {
        let m = &self.model;
        let pairs: [(&str, String); 19] = [
            ("setting", self.setting.to_string()),
            ("seed", self.seed.to_string()),
            ("lstm_units", m.hidden.to_string()),
            ("embed_dim", m.embed_dim.to_string()),
            ("pos_dim", m.pos_dim.to_string()),
            ("pf_dim", m.pf_dim.to_string()),
            ("d_clip", m.d_clip.to_string()),
            ("dropout", m.dropout.to_string()),
            ("context", self.input.context.to_string()),
            ("max_dist", self.max_dist.to_string()),
            ("batch", self.batch_size.to_string()),
            ("min_epochs", self.min_epochs.to_string()),
            ("patience", self.patience.to_string()),
            ("max_epochs", self.max_epochs.to_string()),
            ("lambda", self.lambda_sg.to_string()),
            ("validation_docs", self.validation_docs.to_string()),
            ("train_fraction", self.train_fraction.to_string()),
            ("adam_lr", self.adam.lr.to_string()),
            ("adam_eps", self.adam.eps.to_string()),
        ];
        pairs.iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }
}

/// SplitMix64 finalizer, used to derive independent seeds.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for run `index` of a sweep started from `base`.
pub fn derive_seed(base: u64, index: u64) -> u64 {
    mix(mix(base) ^ index)
}

/// Independent random streams of one training run.
#[derive(Clone, Copy)]
enum Stream {
    RcInit = 1,
    SgInit = 2,
    Shuffle = 3,
    Dropout = 4,
    SgSample = 5,
    MissingRows = 6,
}

fn stream(seed: u64, s: Stream) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, s as u64 + 0x5EED_0000))
}

/// Shuffled index batches covering `0..n` once; the last may be short.
pub fn epoch_batches(n: usize, size: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    order.chunks(size.max(1)).map(<[usize]>::to_vec).collect()
}

/// Draws from a dataset in shuffled order, reshuffling whenever the order is
/// exhausted, so batches wrap across passes independently of any epoch.
#[derive(Clone, Debug)]
pub struct CyclingSampler {
    order: Vec<usize>,
    next: usize,
    rng: ChaCha8Rng,
    drawn: usize,
}

impl CyclingSampler {
    pub fn new(len: usize, mut rng: ChaCha8Rng) -> Result<Self> {
        if len == 0 {
            return Err(Error::Empty("dataset to sample from"));
        }
        let mut order: Vec<usize> = (0..len).collect();
        order.shuffle(&mut rng);
        Ok(CyclingSampler {
            order,
            next: 0,
            rng,
            drawn: 0,
        })
    }

    pub fn sample(&mut self, size: usize) -> Vec<usize> {
        let mut out = Vec::with_capacity(size);
        while out.len() < size {
            if self.next == self.order.len() {
                self.order.shuffle(&mut self.rng);
                self.next = 0;
            }
            out.push(self.order[self.next]);
            self.next += 1;
        }
        self.drawn += 1;
        out
    }

    /// Number of batches drawn so far.
    pub fn batches_drawn(&self) -> usize {
        self.drawn
    }
}

/// Trains a standalone skip-gram model from random initialization and
/// returns its token-embedding table.
pub fn pretrain_sg(dataset: &SgDataset, dim: usize, epochs: usize, batch_size: usize, seed: u64) -> Result<Tensor> {
    if dataset.is_empty() {
        return Err(Error::Empty("skip-gram dataset"));
    }
    let mut store = ParameterStore::new();
    let mut init = stream(seed, Stream::RcInit);
    let emb = register_token_embedding(&mut store, dataset.token_vocab_size(), dim, &mut init)?;
    let sg = SgModel::register(&mut store, emb, dataset.mode, dataset.context_vocab_size(), &mut stream(seed, Stream::SgInit))?;
    let mut adam = AdamState::new(&store, AdamConfig::default());
    let mut shuffle = stream(seed, Stream::Shuffle);
    for epoch in 1..=epochs {
        let mut total = 0.0;
        let batches = epoch_batches(dataset.len(), batch_size, &mut shuffle);
        for idx in &batches {
            let pairs: Vec<SgPair> = idx.iter().map(|&i| dataset.pairs[i]).collect();
            let mut g = store.gradient_buffer();
            total += sg.loss(&store, &pairs, Some((&mut g, 1.0)))?;
            store.accumulate(&g)?;
            adam_step(&mut store, &mut adam)?;
        }
        log::info!("sg epoch {epoch}: loss {:.4}", total / batches.len() as Real);
    }
    Ok(store.value(emb).clone())
}

/// Candidates, encoded inputs and gold edges for a set of documents.
#[derive(Clone, Debug)]
pub struct RcData {
    pub candidates: Vec<CandidatePair>,
    pub examples: Vec<RcExample>,
    pub gold: RelationSet,
}

impl RcData {
    pub fn build<'a>(
        docs: impl IntoIterator<Item = &'a Document>,
        vocab: &Vocabulary,
        input: &RcInputConfig,
        max_dist: usize,
    ) -> Result<Self> {
        let mut data = RcData {
            candidates: Vec::new(),
            examples: Vec::new(),
            gold: RelationSet::new(),
        };
        for doc in docs {
            data.gold.add_document(&doc.id);
            for r in &doc.relations {
                data.gold.insert(&doc.id, &r.source, &r.target);
            }
            for c in generate_candidates(doc, max_dist) {
                let encoded = build_rc_input(doc, &c, vocab, input)?;
                data.examples.push(RcExample {
                    input: encoded,
                    gold: c.label.class(),
                });
                data.candidates.push(c);
            }
        }
        Ok(data)
    }
}

/// Inference-mode class probabilities for every example.
pub fn predict_probs(model: &JointModel, examples: &[RcExample]) -> Result<Vec<[Real; 2]>> {
    examples.iter().map(|e| model.rc.predict(&model.store, &e.input)).collect()
}

/// Predicted CONTAINS edges for prepared data.
pub fn predict_relations(model: &JointModel, data: &RcData) -> Result<RelationSet> {
    let probs = predict_probs(model, &data.examples)?;
    let mut set = decide_labels(&data.candidates, &probs)?;
    for d in data.gold.documents() {
        set.add_document(d);
    }
    Ok(set)
}

/// Closure metrics of `model` against the gold edges of `data`.
pub fn evaluate_model(model: &JointModel, data: &RcData) -> Result<Metrics> {
    closure_prf(&data.gold, &predict_relations(model, data)?)
}

/// Patience-based stopping on a validation score.
#[derive(Clone, Debug)]
pub struct EarlyStopping {
    pub min_epochs: usize,
    pub patience: usize,
    pub best_epoch: usize,
    pub best_score: Real,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StopDecision {
    Improved,
    Continue,
    Stop,
}

impl EarlyStopping {
    pub fn new(min_epochs: usize, patience: usize) -> Self {
        EarlyStopping {
            min_epochs,
            patience,
            best_epoch: 0,
            best_score: Real::NEG_INFINITY,
        }
    }

    /// Records the score of `epoch` (1-based). Only strict improvements move
    /// the best epoch. Stops once at least `min_epochs` have run and the best
    /// is `patience` epochs old.
    pub fn observe(&mut self, epoch: usize, score: Real) -> StopDecision {
        if score > self.best_score {
            self.best_score = score;
            self.best_epoch = epoch;
        }
        if epoch >= self.min_epochs && epoch - self.best_epoch >= self.patience {
            StopDecision::Stop
        } else if self.best_epoch == epoch {
            StopDecision::Improved
        } else {
            StopDecision::Continue
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss_rc: Real,
    pub loss_sg: Option<Real>,
    pub val_p: Real,
    pub val_r: Real,
    pub val_f: Real,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunHistory {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub steps: usize,
    pub sg_batches: usize,
}

impl RunHistory {
    pub fn best(&self) -> Option<&EpochRecord> {
        self.epochs.iter().find(|e| e.epoch == self.best_epoch)
    }

    /// `epoch,loss_rc,loss_sg,val_P,val_R,val_F`; an absent skip-gram loss is empty.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,loss_rc,loss_sg,val_P,val_R,val_F\n");
        for e in &self.epochs {
            let sg = e.loss_sg.map(|l| l.to_string()).unwrap_or_default();
            s.push_str(&format!(
                "{},{},{},{},{},{}\n",
                e.epoch, e.loss_rc, sg, e.val_p, e.val_r, e.val_f
            ));
        }
        s
    }
}

/// Everything a finished run produces.
#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// Parameters of the best validation epoch.
    pub model: JointModel,
    pub history: RunHistory,
    pub init: InitReport,
}

/// Optional observer called after every optimizer step with the model state.
pub type StepHook<'a> = dyn FnMut(usize, &JointModel) + 'a;

/// Splits the training corpus: the lexicographically first `n` documents by
/// id validate, the rest train (in corpus order, truncated to `fraction`).
pub fn split_validation(train: &Corpus, n: usize, fraction: Real) -> Result<(Vec<&Document>, Vec<&Document>)> {
    let mut ids: Vec<&str> = train.documents.iter().map(|d| d.id.as_str()).collect();
    ids.sort_unstable();
    let held: Vec<&str> = ids.into_iter().take(n).collect();
    let validation: Vec<&Document> = train.documents.iter().filter(|d| held.contains(&d.id.as_str())).collect();
    let rest: Vec<&Document> = train.documents.iter().filter(|d| !held.contains(&d.id.as_str())).collect();
    if rest.is_empty() {
        return Err(Error::Config(format!(
            "{} training documents leave nothing to train on after {n} validation documents",
            train.documents.len()
        )));
    }
    let keep = (fraction * rest.len() as Real).ceil() as usize;
    Ok((validation, rest.into_iter().take(keep.max(1)).collect()))
}

/// Trains one setting. `sg` supplies the auxiliary pairs for the joint
/// settings and must match their mode; `pretrained` is required for every
/// setting except `rc-random`.
pub fn train(
    config: &TrainConfig,
    train_corpus: &Corpus,
    vocab: &Vocabulary,
    sg: Option<&SgDataset>,
    pretrained: Option<&EmbeddingFile>,
) -> Result<TrainOutcome> {
    train_with_hook(config, train_corpus, vocab, sg, pretrained, &mut |_, _| {})
}

pub fn train_with_hook(
    config: &TrainConfig,
    train_corpus: &Corpus,
    vocab: &Vocabulary,
    sg: Option<&SgDataset>,
    pretrained: Option<&EmbeddingFile>,
    hook: &mut StepHook<'_>,
) -> Result<TrainOutcome> {
    config.validate()?;
    let setting = config.setting;
    if setting.uses_pretrained() && pretrained.is_none() {
        return Err(Error::Config(format!("setting {setting} needs pretrained embeddings")));
    }
    let sg = match (setting.auxiliary(), sg) {
        (None, _) => None,
        (Some(_), None) => return Err(Error::Config(format!("setting {setting} needs a skip-gram dataset"))),
        (Some(mode), Some(d)) => {
            if d.mode != mode {
                return Err(Error::Config(format!("setting {setting} needs {mode:?} pairs, got {:?}", d.mode)));
            }
            if d.token_vocab_size() != vocab.len() {
                return Err(Error::Mismatch("skip-gram pairs were built with another vocabulary".into()));
            }
            if d.is_empty() {
                return Err(Error::Empty("skip-gram dataset"));
            }
            Some(d)
        }
    };

    let (val_docs, train_docs) = split_validation(train_corpus, config.validation_docs, config.train_fraction)?;
    let train_data = RcData::build(train_docs, vocab, &config.input, config.max_dist)?;
    let val_data = RcData::build(val_docs, vocab, &config.input, config.max_dist)?;
    if train_data.examples.is_empty() {
        return Err(Error::Empty("training candidates"));
    }

    let seed = config.seed;
    let mut model = JointModel::new(
        &config.model,
        vocab.len(),
        vocab.pos_len(),
        setting.auxiliary(),
        &mut stream(seed, Stream::RcInit),
        &mut stream(seed, Stream::SgInit),
    )?;
    let token_emb = model.rc.token_emb;
    let init = match pretrained {
        Some(file) if setting.uses_pretrained() => init_embeddings(
            &mut model.store,
            token_emb,
            vocab,
            EmbeddingSource::Pretrained(file),
            &mut stream(seed, Stream::MissingRows),
        )?,
        _ => InitReport::default(),
    };
    if setting == Setting::RcSgFixed {
        set_embedding_trainable(&mut model.store, token_emb, false);
    }

    // Lambda only matters when there is an auxiliary head.
    let weights = LossWeights::new(if sg.is_some() { config.lambda_sg } else { 0.0 })?;
    let mut adam = AdamState::new(&model.store, config.adam);
    let mut shuffle = stream(seed, Stream::Shuffle);
    let mut dropout = stream(seed, Stream::Dropout);
    let mut sg_sampler = match sg {
        Some(d) => Some(CyclingSampler::new(d.len(), stream(seed, Stream::SgSample))?),
        None => None,
    };
    let mut stopper = EarlyStopping::new(config.min_epochs, config.patience);
    let mut history = RunHistory::default();
    let mut best_store = model.store.clone();

    for epoch in 1..=config.max_epochs {
        let batches = epoch_batches(train_data.examples.len(), config.batch_size, &mut shuffle);
        let (mut sum_rc, mut sum_sg) = (0.0, 0.0);
        for idx in &batches {
            let rc_batch: Vec<&RcExample> = idx.iter().map(|&i| &train_data.examples[i]).collect();
            let sg_batch: Vec<SgPair> = match (&mut sg_sampler, sg) {
                (Some(s), Some(d)) => s.sample(rc_batch.len()).into_iter().map(|i| d.pairs[i]).collect(),
                _ => Vec::new(),
            };
            let mut g = model.store.gradient_buffer();
            let parts = combined_loss(
                &model.store,
                &model.rc,
                model.sg.as_ref(),
                &rc_batch,
                &sg_batch,
                weights,
                Mode::Train,
                &mut dropout,
                Some(&mut g),
            )?;
            model.store.accumulate(&g)?;
            adam_step(&mut model.store, &mut adam)?;
            history.steps += 1;
            sum_rc += parts.rc;
            sum_sg += parts.sg.unwrap_or(0.0);
            hook(history.steps, &model);
        }
        let n = batches.len() as Real;
        let val = evaluate_model(&model, &val_data)?;
        let record = EpochRecord {
            epoch,
            loss_rc: sum_rc / n,
            loss_sg: sg.map(|_| sum_sg / n),
            val_p: val.precision,
            val_r: val.recall,
            val_f: val.f,
        };
        log::info!(
            "{setting} epoch {epoch}: loss {:.4} val P {:.3} R {:.3} F {:.3}",
            record.loss_rc,
            val.precision,
            val.recall,
            val.f
        );
        history.epochs.push(record);
        let decision = stopper.observe(epoch, val.f);
        if stopper.best_epoch == epoch {
            best_store = model.store.clone();
        }
        if decision == StopDecision::Stop {
            break;
        }
    }
    history.best_epoch = stopper.best_epoch;
    history.sg_batches = sg_sampler.map_or(0, |s| s.batches_drawn());
    model.store = best_store;
    Ok(TrainOutcome { model, history, init })
}

/// One row of a sweep: the swept value, the run's seed and its dev metrics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub setting: Setting,
    pub x: Real,
    pub seed: u64,
    pub precision: Real,
    pub recall: Real,
    pub f: Real,
    pub best_epoch: usize,
}

/// Inputs shared by all runs of a sweep.
#[derive(Clone, Copy)]
pub struct SweepData<'a> {
    pub train: &'a Corpus,
    /// Documents the swept runs are scored on.
    pub dev: &'a Corpus,
    pub vocab: &'a Vocabulary,
    pub sg: Option<&'a SgDataset>,
    pub sglr: Option<&'a SgDataset>,
    pub pretrained: Option<&'a EmbeddingFile>,
    /// When set, every run writes its run directory below this path.
    pub runs_dir: Option<&'a Path>,
}

fn run_and_score(config: &TrainConfig, data: &SweepData<'_>, sweep: &str, x: Real, name: &str) -> Result<SweepRow> {
    let aux = match config.setting.auxiliary() {
        Some(SgMode::Sg) => data.sg,
        Some(SgMode::Sglr) => data.sglr,
        None => None,
    };
    let out = train(config, data.train, data.vocab, aux, data.pretrained)?;
    let dev = RcData::build(&data.dev.documents, data.vocab, &config.input, config.max_dist)?;
    let m = evaluate_model(&out.model, &dev)?;
    if let Some(root) = data.runs_dir {
        let report = RunReport::new(config, &out, sweep, x, m);
        write_run_dir(&root.join(name), config, &out, data.vocab, &report)?;
    }
    Ok(SweepRow {
        setting: config.setting,
        x,
        seed: config.seed,
        precision: m.precision,
        recall: m.recall,
        f: m.f,
        best_epoch: out.history.best_epoch,
    })
}

/// Runs `configs` on a pool of `jobs` workers; results keep input order.
pub fn run_parallel<T, F>(items: Vec<T>, jobs: usize, f: F) -> Result<Vec<SweepRow>>
where
    T: Send,
    F: Fn(T) -> Result<SweepRow> + Sync,
{
    use rayon::prelude::*;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
    pool.install(|| items.into_par_iter().map(&f).collect())
}

/// One run per lambda value (run `i` seeded with `derive_seed(seed, i)`).
pub fn sweep_lambda(values: &[Real], config: &TrainConfig, data: &SweepData<'_>, jobs: usize) -> Result<Vec<SweepRow>> {
    if config.setting.auxiliary().is_none() {
        return Err(Error::Config(format!("lambda sweep needs a joint setting, got {}", config.setting)));
    }
    let runs: Vec<(usize, Real)> = values.iter().copied().enumerate().collect();
    run_parallel(runs, jobs, |(i, lambda)| {
        let cfg = TrainConfig {
            lambda_sg: lambda,
            seed: derive_seed(config.seed, i as u64),
            ..config.clone()
        };
        run_and_score(&cfg, data, "lambda", lambda, &format!("lambda_{i:02}"))
    })
}

/// One run per (setting, fraction, seed index) over document-prefix samples
/// of the training set.
pub fn sweep_train_size(
    fractions: &[Real],
    settings: &[Setting],
    seeds: usize,
    config: &TrainConfig,
    data: &SweepData<'_>,
    jobs: usize,
) -> Result<Vec<SweepRow>> {
    if let Some(f) = fractions.iter().find(|f| !(**f > 0.0 && **f <= 1.0)) {
        return Err(Error::Config(format!("training fraction must be in (0, 1], got {f}")));
    }
    let mut runs = Vec::new();
    for s in 0..seeds {
        for &setting in settings {
            for (k, &fraction) in fractions.iter().enumerate() {
                runs.push((runs.len(), s, setting, k, fraction));
            }
        }
    }
    run_parallel(runs, jobs, |(i, s, setting, k, fraction)| {
        let cfg = TrainConfig {
            setting,
            train_fraction: fraction,
            seed: derive_seed(config.seed, s as u64),
            ..config.clone()
        };
        let name = format!("size_{i:03}_{setting}_f{k}_s{s}");
        run_and_score(&cfg, data, "size", fraction, &name)
    })
}

/// Summary written to `report.json` in a run directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub setting: Setting,
    pub seed: u64,
    /// `lambda`, `size` or `single`.
    pub sweep: String,
    /// The swept value (lambda or training fraction).
    pub x: Real,
    pub lambda_sg: Real,
    pub train_fraction: Real,
    pub best_epoch: usize,
    pub epochs_run: usize,
    pub validation_f: Real,
    pub missing_pretrained_rows: usize,
    pub dev: Metrics,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dev_subsets: Option<std::collections::BTreeMap<String, Metrics>>,
}

impl RunReport {
    pub fn new(config: &TrainConfig, outcome: &TrainOutcome, sweep: &str, x: Real, dev: Metrics) -> Self {
        RunReport {
            setting: config.setting,
            seed: config.seed,
            sweep: sweep.to_string(),
            x,
            lambda_sg: config.lambda_sg,
            train_fraction: config.train_fraction,
            best_epoch: outcome.history.best_epoch,
            epochs_run: outcome.history.epochs.len(),
            validation_f: outcome.history.best().map_or(0.0, |b| b.val_f),
            missing_pretrained_rows: outcome.init.missing.len(),
            dev,
            dev_subsets: None,
        }
    }
}

/// Writes `config.txt`, `metrics.csv`, `checkpoint/` and `report.json`.
pub fn write_run_dir(
    dir: &Path,
    config: &TrainConfig,
    outcome: &TrainOutcome,
    vocab: &Vocabulary,
    report: &RunReport,
) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let write = |name: &str, text: String| {
        let path = dir.join(name);
        fs::write(&path, text).map_err(|e| Error::io(&path, e))
    };
    write("config.txt", config.to_key_values())?;
    write("metrics.csv", outcome.history.to_csv())?;
    outcome
        .model
        .save(&dir.join("checkpoint"), vocab, LossWeights { lambda_sg: config.lambda_sg })?;
    write("report.json", serde_json::to_string_pretty(report)?)
}

/// Reads a flat `key=value` file.
pub fn read_key_values(path: &Path) -> Result<Vec<(String, String)>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            l.split_once('=')
                .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
                .ok_or_else(|| Error::Parse {
                    line: i + 1,
                    message: format!("expected key=value, got `{l}`"),
                })
        })
        .collect()
}
