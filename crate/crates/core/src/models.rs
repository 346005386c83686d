//! The relation classifier, the skip-gram context predictor and their
//! combined objective over one shared token-embedding table.
//!
//! Both models register their parameters in a single [`ParameterStore`]; the
//! token embedding is registered once and referenced by both. Losses are
//! batch means, and every loss function can optionally accumulate its
//! gradient (already multiplied by the caller's weight) into a [`Gradients`]
//! buffer.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::candidates::RcInput;
use crate::corpus::{SgMode, SgPair, Vocabulary};
use crate::neural::embedding_file::{load_embeddings, save_embeddings, EmbeddingFile};
use crate::neural::layers::{check_dropout_rate, softmax, softmax_xent_grad, PROB_FLOOR};
use crate::neural::{
    cross_entropy, grad_check, lstm_backward, lstm_forward, uniform, DropoutMask, Gradients, LstmCache, LstmParams, Mode,
    GradCheckConfig, ParamId, ParameterStore, Tensor,
};
use crate::{Error, Real, Result};

/// Half-width of the uniform range for random embedding initialization.
pub const EMBEDDING_INIT_SCALE: Real = 0.05;

pub const TOKEN_EMBEDDING: &str = "token_embedding";

/// Architecture hyper-parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub embed_dim: usize,
    pub pos_dim: usize,
    pub pf_dim: usize,
    pub hidden: usize,
    /// Position features are clipped to `[-d_clip, d_clip]`.
    pub d_clip: usize,
    pub dropout: Real,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            embed_dim: 25,
            pos_dim: 40,
            pf_dim: 10,
            hidden: 100,
            d_clip: 40,
            dropout: 0.5,
        }
    }
}

impl ModelConfig {
    pub fn input_dim(&self) -> usize {
        self.embed_dim + self.pos_dim + 2 * self.pf_dim
    }

    pub fn validate(&self) -> Result<()> {
        if self.embed_dim == 0 || self.hidden == 0 {
            return Err(Error::Config("embedding size and LSTM units must be positive".into()));
        }
        check_dropout_rate(self.dropout)
    }
}

/// Weight of the auxiliary skip-gram loss.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub lambda_sg: Real,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights { lambda_sg: 0.1 }
    }
}

impl LossWeights {
    pub fn new(lambda_sg: Real) -> Result<Self> {
        if !(lambda_sg >= 0.0 && lambda_sg.is_finite()) {
            return Err(Error::Config(format!("lambda must be a finite value >= 0, got {lambda_sg}")));
        }
        Ok(LossWeights { lambda_sg })
    }
}

/// A classifier input with its gold class (0 = CONTAINS, 1 = NONE).
#[derive(Clone, Debug, PartialEq)]
pub struct RcExample {
    pub input: RcInput,
    pub gold: usize,
}

fn glorot(fan_in: usize, fan_out: usize) -> Real {
    (6.0 / (fan_in + fan_out) as Real).sqrt()
}

/// Registers the shared token-embedding table, uniform in
/// `[-EMBEDDING_INIT_SCALE, EMBEDDING_INIT_SCALE]`.
pub fn register_token_embedding<R: Rng + ?Sized>(
    store: &mut ParameterStore,
    vocab_size: usize,
    dim: usize,
    rng: &mut R,
) -> Result<ParamId> {
    store.register(TOKEN_EMBEDDING, uniform(vocab_size, dim, EMBEDDING_INIT_SCALE, rng))
}

/// Parameter handles of the relation classifier.
#[derive(Clone, Debug)]
pub struct RcModel {
    pub token_emb: ParamId,
    pub pos_emb: ParamId,
    pub pf1_emb: ParamId,
    pub pf2_emb: ParamId,
    pub lstm: LstmParams,
    pub w_p: ParamId,
    pub b_p: ParamId,
    pub config: ModelConfig,
}

/// Activations of one classifier forward pass.
#[derive(Clone, Debug)]
pub struct RcCache {
    tokens: Vec<usize>,
    pos: Vec<usize>,
    pf1: Vec<usize>,
    pf2: Vec<usize>,
    x_mask: DropoutMask,
    lstm: LstmCache,
    h: Vec<Real>,
    h_mask: DropoutMask,
    pub probs: Vec<Real>,
}

impl RcModel {
    /// Registers POS and position-feature tables, the LSTM and the output
    /// layer. `token_emb` must already be registered.
    pub fn register<R: Rng + ?Sized>(
        store: &mut ParameterStore,
        token_emb: ParamId,
        pos_vocab: usize,
        config: &ModelConfig,
        rng: &mut R,
    ) -> Result<Self> {
        config.validate()?;
        if store.value(token_emb).cols() != config.embed_dim {
            return Err(Error::Shape(format!(
                "token embedding width {} != configured {}",
                store.value(token_emb).cols(),
                config.embed_dim
            )));
        }
        let pf_rows = 2 * config.d_clip + 1;
        let pos_emb = store.register("pos_embedding", uniform(pos_vocab, config.pos_dim, EMBEDDING_INIT_SCALE, rng))?;
        let pf1_emb = store.register("pf1_embedding", uniform(pf_rows, config.pf_dim, EMBEDDING_INIT_SCALE, rng))?;
        let pf2_emb = store.register("pf2_embedding", uniform(pf_rows, config.pf_dim, EMBEDDING_INIT_SCALE, rng))?;
        let d_in = config.input_dim();
        let h = config.hidden;
        let lstm = LstmParams::register(store, "lstm", d_in, h, glorot(d_in + h, 4 * h), rng)?;
        let w_p = store.register("rc.w_p", uniform(2, h, glorot(h, 2), rng))?;
        let b_p = store.register("rc.b_p", Tensor::zeros(1, 2))?;
        Ok(RcModel {
            token_emb,
            pos_emb,
            pf1_emb,
            pf2_emb,
            lstm,
            w_p,
            b_p,
            config: config.clone(),
        })
    }

    fn pf_row(&self, pf: i32) -> Result<usize> {
        let clip = self.config.d_clip as i64;
        let v = pf as i64;
        if v < -clip || v > clip {
            return Err(Error::OutOfRange {
                what: "position feature",
                index: (v + clip).max(0) as usize,
                size: 2 * self.config.d_clip + 1,
            });
        }
        Ok((v + clip) as usize)
    }

    /// Class probabilities `[p(CONTAINS), p(NONE)]` plus the activations
    /// needed for [`RcModel::backward`]. Dropout is drawn from `rng` only in
    /// train mode.
    pub fn forward<R: Rng + ?Sized>(
        &self,
        store: &ParameterStore,
        input: &RcInput,
        mode: Mode,
        rng: &mut R,
    ) -> Result<RcCache> {
        if input.is_empty() {
            return Err(Error::Empty("classifier input sequence"));
        }
        let n = input.len();
        if input.pos.len() != n || input.pf1.len() != n || input.pf2.len() != n {
            return Err(Error::Shape("classifier input feature lengths differ".into()));
        }
        let pf1 = input.pf1.iter().map(|&p| self.pf_row(p)).collect::<Result<Vec<_>>>()?;
        let pf2 = input.pf2.iter().map(|&p| self.pf_row(p)).collect::<Result<Vec<_>>>()?;
        let c = &self.config;
        let tables = [
            (self.token_emb, &input.tokens, 0, c.embed_dim),
            (self.pos_emb, &input.pos, c.embed_dim, c.pos_dim),
            (self.pf1_emb, &pf1, c.embed_dim + c.pos_dim, c.pf_dim),
            (self.pf2_emb, &pf2, c.embed_dim + c.pos_dim + c.pf_dim, c.pf_dim),
        ];
        let mut x = Tensor::zeros(n, c.input_dim());
        for (id, indices, offset, width) in tables {
            let table = store.value(id);
            for (t, &ix) in indices.iter().enumerate() {
                if ix >= table.rows() {
                    return Err(Error::OutOfRange {
                        what: "embedding table",
                        index: ix,
                        size: table.rows(),
                    });
                }
                x.row_mut(t)[offset..offset + width].copy_from_slice(table.row(ix));
            }
        }
        let x_mask = match mode {
            Mode::Train => DropoutMask::draw(x.len(), c.dropout, rng),
            Mode::Infer => DropoutMask::identity(),
        };
        x_mask.apply(x.data_mut());
        let (mut h, lstm) = lstm_forward(&x, &self.lstm, store)?;
        let h_mask = match mode {
            Mode::Train => DropoutMask::draw(h.len(), c.dropout, rng),
            Mode::Infer => DropoutMask::identity(),
        };
        h_mask.apply(&mut h);
        let mut logits = store.value(self.b_p).data().to_vec();
        store.value(self.w_p).matvec_acc(&h, &mut logits);
        let probs = softmax(&logits);
        Ok(RcCache {
            tokens: input.tokens.clone(),
            pos: input.pos.clone(),
            pf1,
            pf2,
            x_mask,
            lstm,
            h,
            h_mask,
            probs,
        })
    }

    /// Inference-mode probabilities.
    pub fn predict(&self, store: &ParameterStore, input: &RcInput) -> Result<[Real; 2]> {
        let cache = self.forward(store, input, Mode::Infer, &mut rand::rngs::mock::StepRng::new(0, 0))?;
        Ok([cache.probs[0], cache.probs[1]])
    }

    /// Accumulates `scale * d(-log p(gold))` into `grads`.
    pub fn backward(&self, store: &ParameterStore, cache: &RcCache, gold: usize, scale: Real, grads: &mut Gradients) {
        let dz = softmax_xent_grad(&cache.probs, gold, scale);
        grads.get_mut(self.w_p).outer_acc(&dz, &cache.h);
        for (g, d) in grads.get_mut(self.b_p).data_mut().iter_mut().zip(&dz) {
            *g += d;
        }
        let mut dh = vec![0.0; cache.h.len()];
        store.value(self.w_p).matvec_t_acc(&dz, &mut dh);
        cache.h_mask.apply(&mut dh);
        let mut dx = lstm_backward(&cache.lstm, &dh, &self.lstm, store, grads);
        cache.x_mask.apply(dx.data_mut());
        let c = &self.config;
        let tables = [
            (self.token_emb, &cache.tokens, 0, c.embed_dim),
            (self.pos_emb, &cache.pos, c.embed_dim, c.pos_dim),
            (self.pf1_emb, &cache.pf1, c.embed_dim + c.pos_dim, c.pf_dim),
            (self.pf2_emb, &cache.pf2, c.embed_dim + c.pos_dim + c.pf_dim, c.pf_dim),
        ];
        for (id, indices, offset, width) in tables {
            let g = grads.get_mut(id);
            for (t, &ix) in indices.iter().enumerate() {
                for (a, b) in g.row_mut(ix).iter_mut().zip(&dx.row(t)[offset..offset + width]) {
                    *a += b;
                }
            }
        }
    }

    /// Mean cross-entropy over `batch`. With `grads`, the gradient of
    /// `weight * loss` is accumulated as well.
    pub fn loss<R: Rng + ?Sized>(
        &self,
        store: &ParameterStore,
        batch: &[&RcExample],
        mode: Mode,
        rng: &mut R,
        mut grads: Option<(&mut Gradients, Real)>,
    ) -> Result<Real> {
        if batch.is_empty() {
            return Err(Error::Empty("classifier batch"));
        }
        let scale = 1.0 / batch.len() as Real;
        let mut total = 0.0;
        for ex in batch {
            let cache = self.forward(store, &ex.input, mode, rng)?;
            total += cross_entropy(&cache.probs, ex.gold)?;
            if let Some((g, weight)) = grads.as_mut() {
                self.backward(store, &cache, ex.gold, *weight * scale, g);
            }
        }
        Ok(total * scale)
    }
}

/// Parameter handles of the skip-gram context predictor.
#[derive(Clone, Debug)]
pub struct SgModel {
    pub token_emb: ParamId,
    pub w: ParamId,
    pub b: ParamId,
    pub mode: SgMode,
    pub context_vocab: usize,
}

impl SgModel {
    pub fn register<R: Rng + ?Sized>(
        store: &mut ParameterStore,
        token_emb: ParamId,
        mode: SgMode,
        context_vocab: usize,
        rng: &mut R,
    ) -> Result<Self> {
        if context_vocab == 0 {
            return Err(Error::EmptyVocabulary);
        }
        let dim = store.value(token_emb).cols();
        let w = store.register("sg.w_p", uniform(context_vocab, dim, glorot(dim, context_vocab), rng))?;
        let b = store.register("sg.b_p", Tensor::zeros(1, context_vocab))?;
        Ok(SgModel {
            token_emb,
            w,
            b,
            mode,
            context_vocab,
        })
    }

    /// `p(. | center)` over the context vocabulary.
    pub fn context_probs(&self, store: &ParameterStore, center: usize) -> Vec<Real> {
        let mut logits = store.value(self.b).data().to_vec();
        store.value(self.w).matvec_acc(store.value(self.token_emb).row(center), &mut logits);
        softmax(&logits)
    }

    /// Mean `-log p(context | center)` over `pairs` under a full softmax.
    /// Pairs sharing a center share one softmax evaluation.
    pub fn loss(&self, store: &ParameterStore, pairs: &[SgPair], grads: Option<(&mut Gradients, Real)>) -> Result<Real> {
        if pairs.is_empty() {
            return Err(Error::Empty("skip-gram batch"));
        }
        let vocab = store.value(self.token_emb).rows();
        let mut by_center: BTreeMap<u32, Vec<u32>> = BTreeMap::new();
        for p in pairs {
            if p.center as usize >= vocab {
                return Err(Error::OutOfRange {
                    what: "skip-gram center",
                    index: p.center as usize,
                    size: vocab,
                });
            }
            if p.context as usize >= self.context_vocab {
                return Err(Error::OutOfRange {
                    what: "skip-gram context",
                    index: p.context as usize,
                    size: self.context_vocab,
                });
            }
            by_center.entry(p.center).or_default().push(p.context);
        }
        let scale = 1.0 / pairs.len() as Real;
        let mut total = 0.0;
        let mut grads = grads;
        let w = store.value(self.w);
        for (&center, contexts) in &by_center {
            let probs = self.context_probs(store, center as usize);
            for &ctx in contexts {
                total += -probs[ctx as usize].max(PROB_FLOOR).ln();
            }
            if let Some((g, weight)) = grads.as_mut() {
                let s = *weight * scale;
                let mut dz: Vec<Real> = probs.iter().map(|p| p * s * contexts.len() as Real).collect();
                for &ctx in contexts {
                    dz[ctx as usize] -= s;
                }
                let h = store.value(self.token_emb).row(center as usize);
                g.get_mut(self.w).outer_acc(&dz, h);
                for (gb, d) in g.get_mut(self.b).data_mut().iter_mut().zip(&dz) {
                    *gb += d;
                }
                let row = g.get_mut(self.token_emb).row_mut(center as usize);
                w.matvec_t_acc(&dz, row);
            }
        }
        Ok(total * scale)
    }
}

/// Component losses of one combined evaluation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossParts {
    pub rc: Real,
    /// `None` when no skip-gram batch was given.
    pub sg: Option<Real>,
    pub total: Real,
}

/// `L_rc + lambda * L_sg`. When `lambda` is 0 the skip-gram term contributes
/// neither loss nor gradient (its value is still reported if a batch is
/// given). An empty skip-gram batch is only accepted with `lambda` = 0.
pub fn combined_loss<R: Rng + ?Sized>(
    store: &ParameterStore,
    rc: &RcModel,
    sg: Option<&SgModel>,
    rc_batch: &[&RcExample],
    sg_batch: &[SgPair],
    weights: LossWeights,
    mode: Mode,
    rng: &mut R,
    mut grads: Option<&mut Gradients>,
) -> Result<LossParts> {
    let lambda = weights.lambda_sg;
    let rc_loss = rc.loss(store, rc_batch, mode, rng, grads.as_deref_mut().map(|g| (g, 1.0)))?;
    let sg_loss = match sg {
        Some(model) if !sg_batch.is_empty() => {
            let g = if lambda > 0.0 { grads.map(|g| (g, lambda)) } else { None };
            Some(model.loss(store, sg_batch, g)?)
        }
        _ if lambda > 0.0 => {
            return Err(Error::Config("a positive lambda needs a skip-gram model and batch".into()));
        }
        _ => None,
    };
    let total = match sg_loss {
        Some(l) if lambda > 0.0 => rc_loss + lambda * l,
        _ => rc_loss,
    };
    Ok(LossParts {
        rc: rc_loss,
        sg: sg_loss,
        total,
    })
}

/// Where the token-embedding rows come from.
#[derive(Clone, Copy, Debug)]
pub enum EmbeddingSource<'a> {
    Random,
    Pretrained(&'a EmbeddingFile),
}

/// Outcome of [`init_embeddings`]: vocabulary words absent from the file.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct InitReport {
    pub missing: Vec<String>,
}

/// Sets the token-embedding rows. Pretrained rows are matched by word; words
/// missing from the file get fresh uniform rows and are listed in the report.
pub fn init_embeddings<R: Rng + ?Sized>(
    store: &mut ParameterStore,
    token_emb: ParamId,
    vocab: &Vocabulary,
    source: EmbeddingSource<'_>,
    rng: &mut R,
) -> Result<InitReport> {
    let (rows, dim) = store.value(token_emb).shape();
    if rows != vocab.len() {
        return Err(Error::Shape(format!(
            "embedding table has {rows} rows for a vocabulary of {}",
            vocab.len()
        )));
    }
    let mut report = InitReport::default();
    match source {
        EmbeddingSource::Random => {
            *store.value_mut(token_emb) = uniform(rows, dim, EMBEDDING_INIT_SCALE, rng);
        }
        EmbeddingSource::Pretrained(file) => {
            if file.dim() != dim {
                return Err(Error::Shape(format!(
                    "pretrained embeddings have dimension {}, model expects {dim}",
                    file.dim()
                )));
            }
            let index: HashMap<&str, usize> = file.words.iter().enumerate().map(|(i, w)| (w.as_str(), i)).collect();
            let table = store.value_mut(token_emb);
            for (r, word) in vocab.tokens().iter().enumerate() {
                match index.get(word.as_str()) {
                    Some(&i) => table.row_mut(r).copy_from_slice(file.vectors.row(i)),
                    None => {
                        for v in table.row_mut(r) {
                            *v = rng.gen_range(-EMBEDDING_INIT_SCALE..=EMBEDDING_INIT_SCALE);
                        }
                        report.missing.push(word.clone());
                    }
                }
            }
            if !report.missing.is_empty() {
                log::warn!("{} vocabulary words missing from pretrained embeddings", report.missing.len());
            }
        }
    }
    Ok(report)
}

pub fn set_embedding_trainable(store: &mut ParameterStore, token_emb: ParamId, trainable: bool) {
    store.set_trainable(token_emb, trainable);
}

/// The classifier, an optional auxiliary skip-gram head and their shared store.
#[derive(Clone, Debug)]
pub struct JointModel {
    pub store: ParameterStore,
    pub rc: RcModel,
    pub sg: Option<SgModel>,
}

impl JointModel {
    /// Token embedding and classifier parameters are drawn from `rc_rng`,
    /// the skip-gram head from `sg_rng`, so adding a head never changes the
    /// classifier's initialization.
    pub fn new<R: Rng + ?Sized, S: Rng + ?Sized>(
        config: &ModelConfig,
        vocab_size: usize,
        pos_vocab: usize,
        sg: Option<SgMode>,
        rc_rng: &mut R,
        sg_rng: &mut S,
    ) -> Result<Self> {
        let mut store = ParameterStore::new();
        let token_emb = register_token_embedding(&mut store, vocab_size, config.embed_dim, rc_rng)?;
        let rc = RcModel::register(&mut store, token_emb, pos_vocab, config, rc_rng)?;
        let sg = match sg {
            Some(mode) => {
                let context = match mode {
                    SgMode::Sg => vocab_size,
                    SgMode::Sglr => 2 * vocab_size,
                };
                Some(SgModel::register(&mut store, token_emb, mode, context, sg_rng)?)
            }
            None => None,
        };
        Ok(JointModel { store, rc, sg })
    }

    pub fn token_embedding(&self) -> &Tensor {
        self.store.value(self.rc.token_emb)
    }

    /// Writes the checkpoint directory: the embedding text file, one text file
    /// per parameter and `manifest.json`.
    pub fn save(&self, dir: &Path, vocab: &Vocabulary, weights: LossWeights) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        save_embeddings(&dir.join(EMBEDDINGS_FILE), vocab.tokens(), self.token_embedding())?;
        let mut parameters = Vec::new();
        for (_, p) in self.store.iter() {
            let file = format!("{}.tensor", p.name);
            write_tensor(&dir.join(&file), &p.value)?;
            parameters.push(ManifestParam {
                name: p.name.clone(),
                rows: p.value.rows(),
                cols: p.value.cols(),
                trainable: p.trainable,
                file,
            });
        }
        let manifest = Manifest {
            config: self.rc.config.clone(),
            vocab_size: vocab.len(),
            pos_vocab_size: vocab.pos_len(),
            vocab_fingerprint: vocab.fingerprint(),
            sg_mode: self.sg.as_ref().map(|s| s.mode),
            lambda_sg: weights.lambda_sg,
            embeddings: EMBEDDINGS_FILE.to_string(),
            parameters,
        };
        let path = dir.join(MANIFEST_FILE);
        fs::write(&path, serde_json::to_string_pretty(&manifest)?).map_err(|e| Error::io(&path, e))
    }

    /// Restores a checkpoint written by [`JointModel::save`]; the vocabulary
    /// must be the one the model was trained with.
    pub fn load(dir: &Path, vocab: &Vocabulary) -> Result<(Self, Manifest)> {
        let path = dir.join(MANIFEST_FILE);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let manifest: Manifest = serde_json::from_str(&text)?;
        if manifest.vocab_fingerprint != vocab.fingerprint() {
            return Err(Error::Mismatch(format!(
                "checkpoint {} was trained with a different vocabulary",
                dir.display()
            )));
        }
        let mut zeros = rand::rngs::mock::StepRng::new(0, 0);
        let mut model = JointModel::new(
            &manifest.config,
            manifest.vocab_size,
            manifest.pos_vocab_size,
            manifest.sg_mode,
            &mut zeros,
            &mut rand::rngs::mock::StepRng::new(0, 0),
        )?;
        for p in &manifest.parameters {
            let id = model
                .store
                .id(&p.name)
                .ok_or_else(|| Error::Mismatch(format!("unexpected parameter `{}` in checkpoint", p.name)))?;
            let value = read_tensor(&dir.join(&p.file))?;
            if value.shape() != (p.rows, p.cols) || value.shape() != model.store.value(id).shape() {
                return Err(Error::Shape(format!("parameter `{}` has shape {:?}", p.name, value.shape())));
            }
            *model.store.value_mut(id) = value;
            model.store.set_trainable(id, p.trainable);
        }
        if manifest.parameters.len() != model.store.len() {
            return Err(Error::Mismatch("checkpoint is missing parameters".into()));
        }
        Ok((model, manifest))
    }
}

pub const MANIFEST_FILE: &str = "manifest.json";
pub const EMBEDDINGS_FILE: &str = "embeddings.txt";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestParam {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub trainable: bool,
    pub file: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config: ModelConfig,
    pub vocab_size: usize,
    pub pos_vocab_size: usize,
    pub vocab_fingerprint: String,
    pub sg_mode: Option<SgMode>,
    pub lambda_sg: Real,
    pub embeddings: String,
    pub parameters: Vec<ManifestParam>,
}

/// Text tensor format: a `rows cols` header, then one line of values per row.
pub fn write_tensor(path: &Path, t: &Tensor) -> Result<()> {
    use std::fmt::Write as _;
    let mut s = format!("{} {}\n", t.rows(), t.cols());
    for r in 0..t.rows() {
        let line: Vec<String> = t.row(r).iter().map(|v| v.to_string()).collect();
        let _ = writeln!(s, "{}", line.join(" "));
    }
    fs::write(path, s).map_err(|e| Error::io(path, e))
}

pub fn read_tensor(path: &Path) -> Result<Tensor> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();
    let header = lines.next().unwrap_or("");
    let bad = |line: usize, message: String| Error::Parse { line, message };
    let dims: Vec<usize> = header
        .split_whitespace()
        .map(str::parse)
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| bad(1, format!("bad tensor header `{header}`: {e}")))?;
    let [rows, cols] = dims[..] else {
        return Err(bad(1, format!("tensor header must be `rows cols`, got `{header}`")));
    };
    let mut data = Vec::with_capacity(rows * cols);
    for (n, line) in lines.enumerate() {
        for v in line.split_whitespace() {
            data.push(v.parse::<Real>().map_err(|e| bad(n + 2, format!("bad value `{v}`: {e}")))?);
        }
    }
    Tensor::from_vec(rows, cols, data)
}

/// Loads a pretrained embedding file (convenience re-export for callers that
/// only deal with models).
pub fn load_pretrained(path: &Path) -> Result<EmbeddingFile> {
    load_embeddings(path)
}

// Tiny random instances for gradient checking.

fn tiny_config() -> ModelConfig {
    ModelConfig {
        embed_dim: 3,
        pos_dim: 2,
        pf_dim: 2,
        hidden: 3,
        d_clip: 4,
        dropout: 0.5,
    }
}
fn random_input(rng: &mut ChaCha8Rng, vocab: usize, pos: usize, clip: i32) -> RcInput {
    let n = rng.gen_range(1..6);
    RcInput {
        tokens: (0..n).map(|_| rng.gen_range(0..vocab)).collect(),
        pos: (0..n).map(|_| rng.gen_range(0..pos)).collect(),
        pf1: (0..n).map(|_| rng.gen_range(-clip..=clip)).collect(),
        pf2: (0..n).map(|_| rng.gen_range(-clip..=clip)).collect(),
        source: vec![None; n],
    }
}

fn tiny_model(seed: u64, sg: Option<SgMode>) -> JointModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sg_rng = ChaCha8Rng::seed_from_u64(seed + 1000);
    let mut m = JointModel::new(&tiny_config(), 7, 4, sg, &mut rng, &mut sg_rng).unwrap();
    // Larger weights than the defaults so gradients are not vanishing.
    for (_, p) in m.store.iter_mut() {
        for v in p.value.data_mut() {
            *v = rng.gen_range(-0.8..0.8);
        }
    }
    m
}

fn examples(seed: u64, n: usize) -> Vec<RcExample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| RcExample {
            input: random_input(&mut rng, 7, 4, 4),
            gold: rng.gen_range(0..2),
        })
        .collect()
}

fn sg_pairs(seed: u64, n: usize, context: usize) -> Vec<SgPair> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| SgPair {
            center: rng.gen_range(0..7),
            context: rng.gen_range(0..context as u32),
        })
        .collect()
}


/// Which objective a gradient check differentiates.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CheckedLoss {
    Rc,
    Sg,
    Sglr,
    Combined,
}

impl CheckedLoss {
    pub const ALL: [CheckedLoss; 4] = [CheckedLoss::Rc, CheckedLoss::Sg, CheckedLoss::Sglr, CheckedLoss::Combined];

    pub fn name(self) -> &'static str {
        match self {
            CheckedLoss::Rc => "rc",
            CheckedLoss::Sg => "sg",
            CheckedLoss::Sglr => "sglr",
            CheckedLoss::Combined => "rc+sg",
        }
    }
}

/// Max relative error between analytic and central-difference gradients of
/// one loss on a tiny random model drawn from `seed`. Dropout masks are
/// replayed identically for every evaluation.
pub fn check_tiny_gradients(loss: CheckedLoss, seed: u64) -> Result<Real> {
    let aux = match loss {
        CheckedLoss::Rc => None,
        CheckedLoss::Sg | CheckedLoss::Combined => Some(SgMode::Sg),
        CheckedLoss::Sglr => Some(SgMode::Sglr),
    };
    let model = tiny_model(seed, aux);
    let ex = examples(seed, 3);
    let refs: Vec<&RcExample> = ex.iter().collect();
    let pairs = model.sg.as_ref().map(|s| sg_pairs(seed + 1, 5, s.context_vocab)).unwrap_or_default();
    let mut store = model.store.clone();
    let mut failure = None;
    let report = grad_check(
        &mut store,
        |s: &mut ParameterStore| {
            let mut g = s.gradient_buffer();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let value = match (loss, model.sg.as_ref()) {
                (CheckedLoss::Rc, _) => model.rc.loss(s, &refs, Mode::Train, &mut rng, Some((&mut g, 1.0))),
                (CheckedLoss::Combined, sg) => combined_loss(
                    s,
                    &model.rc,
                    sg,
                    &refs,
                    &pairs,
                    LossWeights { lambda_sg: 0.7 },
                    Mode::Train,
                    &mut rng,
                    Some(&mut g),
                )
                .map(|p| p.total),
                (_, Some(sg)) => sg.loss(s, &pairs, Some((&mut g, 1.0))),
                (_, None) => Err(Error::Config("skip-gram head missing".into())),
            };
            match value.and_then(|v| s.accumulate(&g).map(|_| v)) {
                Ok(v) => v,
                Err(e) => {
                    failure.get_or_insert(e);
                    Real::NAN
                }
            }
        },
        &GradCheckConfig::default(),
    );
    match failure {
        Some(e) => Err(e),
        None => Ok(report.max_error()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::layers::cross_entropy;

    #[test]
    fn zero_parameters_give_uniform_output() {
        let mut m = tiny_model(0, None);
        for (_, p) in m.store.iter_mut() {
            p.value.fill(0.0);
        }
        let ex = examples(1, 1);
        let p = m.rc.predict(&m.store, &ex[0].input).unwrap();
        assert_eq!(p, [0.5, 0.5]);
    }

    #[test]
    fn infer_mode_is_deterministic_and_empty_is_rejected() {
        let m = tiny_model(2, None);
        let ex = examples(3, 1);
        assert_eq!(m.rc.predict(&m.store, &ex[0].input).unwrap(), m.rc.predict(&m.store, &ex[0].input).unwrap());
        let empty = RcInput {
            tokens: vec![],
            pos: vec![],
            pf1: vec![],
            pf2: vec![],
            source: vec![],
        };
        assert!(m.rc.predict(&m.store, &empty).is_err());
    }

    #[test]
    fn hand_instance_matches_scalar_recurrence() {
        // All dims 1, two steps, no dropout.
        let config = ModelConfig {
            embed_dim: 1,
            pos_dim: 1,
            pf_dim: 1,
            hidden: 1,
            d_clip: 1,
            dropout: 0.0,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut m = JointModel::new(&config, 2, 1, None, &mut rng, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let s = &mut m.store;
        s.value_mut(m.rc.token_emb).data_mut().copy_from_slice(&[0.5, -1.0]);
        s.value_mut(m.rc.pos_emb).data_mut().copy_from_slice(&[0.2]);
        s.value_mut(m.rc.pf1_emb).data_mut().copy_from_slice(&[0.1, 0.0, -0.1]);
        s.value_mut(m.rc.pf2_emb).data_mut().copy_from_slice(&[0.3, 0.0, -0.3]);
        // w_x is 4x4 (gates x features), w_h 4x1, b 4.
        let wx = [0.1, 0.2, 0.3, 0.4, -0.1, 0.2, -0.3, 0.4, 0.5, -0.5, 0.5, -0.5, 0.3, 0.3, 0.3, 0.3];
        s.value_mut(m.rc.lstm.w_x).data_mut().copy_from_slice(&wx);
        s.value_mut(m.rc.lstm.w_h).data_mut().copy_from_slice(&[0.7, -0.2, 0.1, 0.9]);
        s.value_mut(m.rc.lstm.b).data_mut().copy_from_slice(&[0.0, 1.0, 0.0, 0.0]);
        s.value_mut(m.rc.w_p).data_mut().copy_from_slice(&[1.5, -0.5]);
        s.value_mut(m.rc.b_p).data_mut().copy_from_slice(&[0.1, -0.1]);
        let input = RcInput {
            tokens: vec![0, 1],
            pos: vec![0, 0],
            pf1: vec![-1, 1],
            pf2: vec![0, 1],
            source: vec![None; 2],
        };
        let xs = [[0.5, 0.2, 0.1, 0.0], [-1.0, 0.2, -0.1, -0.3]];
        let sig = |z: f64| 1.0 / (1.0 + (-z).exp());
        let (mut h, mut c) = (0.0f64, 0.0f64);
        for x in xs {
            let z: Vec<f64> = (0..4)
                .map(|g| (0..4).map(|k| wx[g * 4 + k] * x[k]).sum::<f64>() + [0.7, -0.2, 0.1, 0.9][g] * h + [0.0, 1.0, 0.0, 0.0][g])
                .collect();
            c = sig(z[1]) * c + sig(z[0]) * z[3].tanh();
            h = sig(z[2]) * c.tanh();
        }
        let (l0, l1) = (1.5 * h + 0.1, -0.5 * h - 0.1);
        let p0 = l0.exp() / (l0.exp() + l1.exp());
        let got = m.rc.predict(&m.store, &input).unwrap();
        assert!((got[0] as f64 - p0).abs() < 1e-12);
        assert!((got[0] + got[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rc_loss_decomposes_over_the_batch() {
        let m = tiny_model(4, None);
        let ex = examples(5, 3);
        let refs: Vec<&RcExample> = ex.iter().collect();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let batch = m.rc.loss(&m.store, &refs, Mode::Infer, &mut rng, None).unwrap();
        let parts: Real = ex
            .iter()
            .map(|e| cross_entropy(&m.rc.predict(&m.store, &e.input).map(|p| p.to_vec()).unwrap(), e.gold).unwrap())
            .sum();
        assert!((batch * 3.0 - parts).abs() < 1e-12);
        let doubled = m.rc.loss(&m.store, &[refs[0], refs[0]], Mode::Infer, &mut rng, None).unwrap();
        let single = m.rc.loss(&m.store, &[refs[0]], Mode::Infer, &mut rng, None).unwrap();
        // Means: the summed loss of the doubled batch is exactly twice the single one.
        assert_eq!(doubled * 2.0, 2.0 * single);
    }

    #[test]
    fn sg_loss_examples() {
        // Zero parameters: uniform softmax, log C per pair.
        let mut m = tiny_model(6, Some(SgMode::Sglr));
        for (_, p) in m.store.iter_mut() {
            p.value.fill(0.0);
        }
        let sg = m.sg.clone().unwrap();
        let pairs = sg_pairs(7, 5, 14);
        let l = sg.loss(&m.store, &pairs, None).unwrap();
        assert!((l - (14.0 as Real).ln()).abs() < 1e-12);

        // Context vocabulary of one: loss 0.
        let mut store = ParameterStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let emb = register_token_embedding(&mut store, 1, 3, &mut rng).unwrap();
        let one = SgModel::register(&mut store, emb, SgMode::Sg, 1, &mut rng).unwrap();
        let l = one.loss(&store, &[SgPair { center: 0, context: 0 }], None).unwrap();
        assert_eq!(l, 0.0);

        // Decomposition.
        let m = tiny_model(8, Some(SgMode::Sg));
        let sg = m.sg.clone().unwrap();
        let pairs = sg_pairs(9, 6, 7);
        let batch = sg.loss(&m.store, &pairs, None).unwrap() * pairs.len() as Real;
        let singles: Real = pairs.iter().map(|p| sg.loss(&m.store, &[*p], None).unwrap()).sum();
        assert!((batch - singles).abs() < 1e-12);
    }

    #[test]
    fn gradients_match_finite_differences() {
        for seed in 0..20 {
            for loss in CheckedLoss::ALL {
                let err = check_tiny_gradients(loss, seed).unwrap();
                assert!(err < 1e-4, "{} seed {seed}: {err}", loss.name());
            }
        }
    }

    fn grads_of(model: &JointModel, lambda: Option<Real>, seed: u64) -> Gradients {
        let ex = examples(seed, 4);
        let refs: Vec<&RcExample> = ex.iter().collect();
        let sg = model.sg.as_ref().unwrap();
        let pairs = sg_pairs(seed, 6, sg.context_vocab);
        let mut g = model.store.gradient_buffer();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        match lambda {
            Some(l) => {
                combined_loss(&model.store, &model.rc, Some(sg), &refs, &pairs, LossWeights { lambda_sg: l }, Mode::Train, &mut rng, Some(&mut g)).unwrap();
            }
            None => {
                model.rc.loss(&model.store, &refs, Mode::Train, &mut rng, Some((&mut g, 1.0))).unwrap();
            }
        }
        g
    }

    #[test]
    fn combined_gradient_is_additive_and_isolated() {
        let m = tiny_model(11, Some(SgMode::Sg));
        let sg = m.sg.clone().unwrap();
        let rc_only = grads_of(&m, None, 3);
        let mut sg_only = m.store.gradient_buffer();
        sg.loss(&m.store, &sg_pairs(3, 6, sg.context_vocab), Some((&mut sg_only, 1.0))).unwrap();
        for lambda in [0.0, 0.1, 1.0, 100.0] {
            let both = grads_of(&m, Some(lambda), 3);
            let emb = m.rc.token_emb;
            for ((b, r), s) in both.get(emb).data().iter().zip(rc_only.get(emb).data()).zip(sg_only.get(emb).data()) {
                assert!((b - (r + lambda * s)).abs() < 1e-10);
            }
        }
        // SG term never touches classifier parameters and vice versa.
        for (id, p) in m.store.iter() {
            if p.name.starts_with("sg.") {
                assert_eq!(rc_only.get(id).norm(), 0.0, "{}", p.name);
            } else if id != m.rc.token_emb {
                assert_eq!(sg_only.get(id).norm(), 0.0, "{}", p.name);
            }
        }
    }

    #[test]
    fn lambda_zero_equals_rc_loss() {
        let m = tiny_model(12, Some(SgMode::Sg));
        let ex = examples(1, 2);
        let refs: Vec<&RcExample> = ex.iter().collect();
        let pairs = sg_pairs(1, 3, 7);
        let mut r1 = ChaCha8Rng::seed_from_u64(5);
        let mut r2 = ChaCha8Rng::seed_from_u64(5);
        let parts = combined_loss(&m.store, &m.rc, m.sg.as_ref(), &refs, &pairs, LossWeights { lambda_sg: 0.0 }, Mode::Train, &mut r1, None).unwrap();
        let rc = m.rc.loss(&m.store, &refs, Mode::Train, &mut r2, None).unwrap();
        assert_eq!(parts.total, rc);
        let parts = combined_loss(&m.store, &m.rc, m.sg.as_ref(), &refs, &pairs, LossWeights { lambda_sg: 1.0 }, Mode::Infer, &mut r1, None).unwrap();
        let sg = m.sg.as_ref().unwrap().loss(&m.store, &pairs, None).unwrap();
        assert!((parts.total - (parts.rc + sg)).abs() < 1e-12);
        assert!(LossWeights::new(-0.1).is_err());
    }

    fn vocab() -> Vocabulary {
        use crate::corpus::vocab::{RESERVED_POS, RESERVED_TOKENS};
        let mut tokens: Vec<String> = RESERVED_TOKENS.iter().map(|s| s.to_string()).collect();
        tokens.extend(["alpha", "beta", "gamma", "delta"].map(String::from));
        let pos = RESERVED_POS.iter().map(|s| s.to_string()).chain(["NN".to_string()]).collect();
        Vocabulary::from_entries(tokens, pos).unwrap()
    }

    #[test]
    fn pretrained_init_reports_missing_rows() {
        let v = vocab();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut m = JointModel::new(&tiny_config(), v.len(), v.pos_len(), None, &mut rng, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        // File covering everything except three words.
        let keep: Vec<String> = v.tokens().iter().filter(|w| !["beta", "gamma", "<pad>"].contains(&w.as_str())).cloned().collect();
        let mut vectors = Tensor::zeros(keep.len(), 3);
        for (i, v) in vectors.data_mut().iter_mut().enumerate() {
            *v = i as Real;
        }
        let file = EmbeddingFile { words: keep.clone(), vectors: vectors.clone() };
        let report = init_embeddings(&mut m.store, m.rc.token_emb, &v, EmbeddingSource::Pretrained(&file), &mut rng).unwrap();
        assert_eq!(report.missing.len(), 3);
        for (i, w) in keep.iter().enumerate() {
            assert_eq!(m.token_embedding().row(v.get(w).unwrap()), vectors.row(i));
        }
        for w in ["beta", "gamma"] {
            assert!(m.token_embedding().row(v.get(w).unwrap()).iter().all(|x| x.abs() <= EMBEDDING_INIT_SCALE));
        }
        let wrong = EmbeddingFile { words: keep, vectors: Tensor::zeros(vectors.rows(), 4) };
        assert!(init_embeddings(&mut m.store, m.rc.token_emb, &v, EmbeddingSource::Pretrained(&wrong), &mut rng).is_err());
    }

    #[test]
    fn checkpoint_round_trip() {
        let v = vocab();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut m = JointModel::new(&tiny_config(), v.len(), v.pos_len(), Some(SgMode::Sglr), &mut rng, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        set_embedding_trainable(&mut m.store, m.rc.token_emb, false);
        let dir = tempfile::tempdir().unwrap();
        m.save(dir.path(), &v, LossWeights { lambda_sg: 0.1 }).unwrap();
        let (back, manifest) = JointModel::load(dir.path(), &v).unwrap();
        assert_eq!(manifest.lambda_sg, 0.1);
        for ((_, a), (_, b)) in m.store.iter().zip(back.store.iter()) {
            assert_eq!(a.name, b.name);
            assert_eq!(a.value, b.value);
            assert_eq!(a.trainable, b.trainable);
        }
        // The embedding file round-trips too.
        let file = load_pretrained(&dir.path().join(EMBEDDINGS_FILE)).unwrap();
        assert_eq!(file.vectors, *m.token_embedding());
    }
}
