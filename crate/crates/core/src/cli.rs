//! Command-line front end.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage error.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::candidates::{generate_candidates, write_candidates_csv, RcInputConfig};
use crate::corpus::{
    build_sg_dataset, build_vocab, generate_synthetic, load_corpus, load_raw_texts, preprocess_corpus, save_corpus,
    save_raw_texts, sg_token_streams, Corpus, PreprocessConfig, SgDataset, SgMode, Split, SynthSpec, TokenCounts,
    Vocabulary,
};
use crate::eval::{evaluate, EdgeIndex};
use crate::models::{CheckedLoss, JointModel, ModelConfig};
use crate::neural::embedding_file::{load_embeddings, save_embeddings, EmbeddingFile};
use crate::trainer::{
    predict_relations, read_key_values, sweep_lambda, sweep_train_size, train, write_run_dir, RcData,
    RunReport, Setting, SweepData, SweepRow, TrainConfig,
};
use crate::{Error, Real, Result};

#[derive(Parser, Debug)]
#[command(name = "crsg", version, about = "Containment-relation extraction with a jointly trained skip-gram objective")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic corpus (train/dev/test + unlabeled texts).
    Synth {
        #[arg(long)]
        out: PathBuf,
        /// JSON generator spec; fields not given keep their defaults.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Normalize a corpus directory and build the vocabulary.
    Preprocess {
        /// Directory with train.jsonl, dev.jsonl, test.jsonl and raw/.
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 30)]
        max_dist: usize,
    },
    /// Train standalone skip-gram embeddings on a preprocessed corpus.
    PretrainSg {
        #[arg(long)]
        corpus: PathBuf,
        /// Output embedding file.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 5)]
        epochs: usize,
        #[arg(long, default_value_t = 2)]
        window: usize,
        #[arg(long, default_value_t = 25)]
        embed_dim: usize,
        #[arg(long, default_value_t = 1024)]
        batch: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Train one setting and write a run directory.
    Train {
        #[arg(long)]
        corpus: PathBuf,
        /// Run directory to create.
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        model: ModelArgs,
    },
    /// Score a trained run on a split of the corpus.
    Eval {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        run: PathBuf,
        #[arg(long, default_value = "dev")]
        split: String,
        /// Metrics JSON output; printed to stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// One run per lambda value; writes a results CSV.
    SweepLambda {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_delimiter = ',', default_values_t = [0.01, 0.1, 1.0, 10.0, 100.0])]
        values: Vec<Real>,
        /// Directory receiving one run directory per sweep point.
        #[arg(long)]
        runs_dir: Option<PathBuf>,
        #[command(flatten)]
        model: ModelArgs,
    },
    /// Runs per setting, training fraction and seed; writes a results CSV.
    SweepSize {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_delimiter = ',', default_values_t = [0.2, 0.4, 0.6, 0.8, 1.0])]
        fractions: Vec<Real>,
        /// Comma-separated settings; all five when absent.
        #[arg(long, value_delimiter = ',')]
        settings: Vec<String>,
        #[arg(long, default_value_t = 3)]
        seeds: usize,
        #[arg(long)]
        runs_dir: Option<PathBuf>,
        #[command(flatten)]
        model: ModelArgs,
    },
    /// Finite-difference check of every model's gradients on tiny instances.
    Gradcheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Number of random instances per model.
        #[arg(long, default_value_t = 20)]
        instances: u64,
    },
    /// Collect run directories into plot-ready TSV files.
    EmitCurves {
        /// Run directories to collect.
        #[arg(long, num_args = 1.., required = true)]
        runs: Vec<PathBuf>,
        /// Output directory for the TSV files.
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args, Debug, Clone)]
struct ModelArgs {
    #[arg(long, default_value = "rc+sg")]
    setting: String,
    /// Pretrained skip-gram embeddings (all settings except rc-random).
    #[arg(long)]
    pretrained: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 100)]
    lstm_units: usize,
    #[arg(long, default_value_t = 25)]
    embed_dim: usize,
    #[arg(long, default_value_t = 40)]
    pos_dim: usize,
    #[arg(long, default_value_t = 10)]
    pf_dim: usize,
    /// Skip-gram window of the auxiliary objective.
    #[arg(long, default_value_t = 2)]
    window: usize,
    /// Tokens kept on each side of the argument pair.
    #[arg(long, default_value_t = 10)]
    context: usize,
    #[arg(long, default_value_t = 30)]
    max_dist: usize,
    #[arg(long, default_value_t = 0.1)]
    lambda: Real,
    #[arg(long, default_value_t = 1024)]
    batch: usize,
    #[arg(long, default_value_t = 20)]
    patience: usize,
    #[arg(long, default_value_t = 10)]
    min_epochs: usize,
    #[arg(long, default_value_t = 500)]
    max_epochs: usize,
    #[arg(long, default_value_t = 0.5)]
    dropout: Real,
    /// Worker threads for sweeps.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

impl ModelArgs {
    fn config(&self) -> Result<TrainConfig> {
        let model = ModelConfig {
            embed_dim: self.embed_dim,
            pos_dim: self.pos_dim,
            pf_dim: self.pf_dim,
            hidden: self.lstm_units,
            dropout: self.dropout,
            ..ModelConfig::default()
        };
        let cfg = TrainConfig {
            setting: self.setting.parse()?,
            input: RcInputConfig {
                context: self.context,
                d_clip: model.d_clip,
            },
            model,
            max_dist: self.max_dist,
            batch_size: self.batch,
            min_epochs: self.min_epochs,
            patience: self.patience,
            max_epochs: self.max_epochs,
            lambda_sg: self.lambda,
            seed: self.seed,
            ..TrainConfig::default()
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn pretrained(&self) -> Result<Option<EmbeddingFile>> {
        self.pretrained.as_deref().map(load_embeddings).transpose()
    }
}

/// Parses `argv` (including the program name), runs the command and returns
/// the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

const TRAIN_FILE: &str = "train.jsonl";
const DEV_FILE: &str = "dev.jsonl";
const TEST_FILE: &str = "test.jsonl";
const RAW_DIR: &str = "raw";
const VOCAB_FILE: &str = "vocab.tsv";
const POS_FILE: &str = "pos.tsv";
const COUNTS_FILE: &str = "counts.tsv";

/// A preprocessed corpus directory.
struct Prepared {
    train: Corpus,
    dev: Corpus,
    test: Corpus,
    raw: Vec<String>,
    vocab: Vocabulary,
    counts: TokenCounts,
}

impl Prepared {
    fn load(dir: &Path) -> Result<Self> {
        Ok(Prepared {
            train: load_corpus(&dir.join(TRAIN_FILE), Split::Train)?,
            dev: load_corpus(&dir.join(DEV_FILE), Split::Dev)?,
            test: load_corpus(&dir.join(TEST_FILE), Split::Test)?,
            raw: load_raw_texts(&dir.join(RAW_DIR))?,
            vocab: Vocabulary::load(&dir.join(VOCAB_FILE), &dir.join(POS_FILE))?,
            counts: TokenCounts::load(&dir.join(COUNTS_FILE))?,
        })
    }

    fn sg_dataset(&self, window: usize, mode: SgMode) -> Result<SgDataset> {
        let streams = sg_token_streams(&self.train, &self.raw, &PreprocessConfig::default());
        build_sg_dataset(&streams, &self.vocab, window, mode)
    }

    fn split(&self, name: &str) -> Result<&Corpus> {
        match name {
            "train" => Ok(&self.train),
            "dev" => Ok(&self.dev),
            "test" => Ok(&self.test),
            other => Err(Error::Config(format!("unknown split `{other}`"))),
        }
    }
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Synth { out, spec, seed } => {
            let spec: SynthSpec = match spec {
                Some(path) => {
                    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
                    serde_json::from_str(&text)?
                }
                None => SynthSpec::default(),
            };
            let data = generate_synthetic(&spec, seed)?;
            fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
            save_corpus(&data.train, &out.join(TRAIN_FILE))?;
            save_corpus(&data.dev, &out.join(DEV_FILE))?;
            save_corpus(&data.test, &out.join(TEST_FILE))?;
            save_raw_texts(&data.raw_texts, &out.join(RAW_DIR))?;
            write_file(&out.join("spec.json"), &serde_json::to_string_pretty(&spec)?)?;
            log::info!(
                "wrote {} / {} / {} documents and {} unlabeled texts to {}",
                data.train.documents.len(),
                data.dev.documents.len(),
                data.test.documents.len(),
                data.raw_texts.len(),
                out.display()
            );
            Ok(())
        }
        Command::Preprocess { input, out, max_dist } => {
            let cfg = PreprocessConfig::default();
            let mut splits = [
                load_corpus(&input.join(TRAIN_FILE), Split::Train)?,
                load_corpus(&input.join(DEV_FILE), Split::Dev)?,
                load_corpus(&input.join(TEST_FILE), Split::Test)?,
            ];
            for c in &mut splits {
                preprocess_corpus(c, &cfg);
            }
            let raw = load_raw_texts(&input.join(RAW_DIR))?;
            let vocab = build_vocab(&splits[0], &raw, &cfg)?;
            let counts = TokenCounts::count(&splits[0], &raw, &cfg);
            fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
            for (c, name) in splits.iter().zip([TRAIN_FILE, DEV_FILE, TEST_FILE]) {
                save_corpus(c, &out.join(name))?;
                let cands: Vec<_> = c.documents.iter().flat_map(|d| generate_candidates(d, max_dist)).collect();
                let path = out.join(format!("candidates_{}.csv", c.split));
                let file = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
                write_candidates_csv(std::io::BufWriter::new(file), &cands).map_err(|e| Error::io(&path, e))?;
            }
            save_raw_texts(&raw, &out.join(RAW_DIR))?;
            vocab.save(&out.join(VOCAB_FILE))?;
            vocab.save_pos(&out.join(POS_FILE))?;
            counts.save(&out.join(COUNTS_FILE))?;
            log::info!("vocabulary of {} tokens, {} POS tags", vocab.len(), vocab.pos_len());
            Ok(())
        }
        Command::PretrainSg {
            corpus,
            out,
            epochs,
            window,
            embed_dim,
            batch,
            seed,
        } => {
            let data = Prepared::load(&corpus)?;
            let sg = data.sg_dataset(window, SgMode::Sg)?;
            let table = crate::trainer::pretrain_sg(&sg, embed_dim, epochs, batch, seed)?;
            save_embeddings(&out, data.vocab.tokens(), &table)
        }
        Command::Train { corpus, out, model } => {
            let data = Prepared::load(&corpus)?;
            let cfg = model.config()?;
            let pretrained = model.pretrained()?;
            let sg = match cfg.setting.auxiliary() {
                Some(mode) => Some(data.sg_dataset(model.window, mode)?),
                None => None,
            };
            let outcome = train(&cfg, &data.train, &data.vocab, sg.as_ref(), pretrained.as_ref())?;
            let dev = RcData::build(&data.dev.documents, &data.vocab, &cfg.input, cfg.max_dist)?;
            let pred = predict_relations(&outcome.model, &dev)?;
            let index = EdgeIndex::new(&data.dev.documents, &data.counts);
            let full = evaluate(&dev.gold, &pred, &index)?;
            let mut report = RunReport::new(&cfg, &outcome, "single", cfg.train_fraction, full.overall);
            report.dev_subsets = Some(full.subsets);
            write_run_dir(&out, &cfg, &outcome, &data.vocab, &report)?;
            println!(
                "{}: best epoch {} dev P {:.4} R {:.4} F {:.4}",
                cfg.setting, report.best_epoch, report.dev.precision, report.dev.recall, report.dev.f
            );
            Ok(())
        }
        Command::Eval {
            corpus,
            run,
            split,
            out,
        } => {
            let data = Prepared::load(&corpus)?;
            let (model, _) = JointModel::load(&run.join("checkpoint"), &data.vocab)?;
            let settings = read_key_values(&run.join("config.txt"))?;
            let get = |key: &str| -> Result<usize> {
                settings
                    .iter()
                    .find(|(k, _)| k == key)
                    .ok_or_else(|| Error::Config(format!("{}: missing `{key}`", run.display())))?
                    .1
                    .parse()
                    .map_err(|e| Error::Config(format!("{}: `{key}`: {e}", run.display())))
            };
            let input = RcInputConfig {
                context: get("context")?,
                d_clip: get("d_clip")?,
            };
            let docs = data.split(&split)?;
            let rc = RcData::build(&docs.documents, &data.vocab, &input, get("max_dist")?)?;
            let pred = predict_relations(&model, &rc)?;
            let report = evaluate(&rc.gold, &pred, &EdgeIndex::new(&docs.documents, &data.counts))?;
            let json = serde_json::to_string_pretty(&report)?;
            match out {
                Some(path) => write_file(&path, &json)?,
                None => println!("{json}"),
            }
            Ok(())
        }
        Command::SweepLambda {
            corpus,
            out,
            values,
            runs_dir,
            model,
        } => {
            let data = Prepared::load(&corpus)?;
            let cfg = model.config()?;
            let pretrained = model.pretrained()?;
            let mode = cfg
                .setting
                .auxiliary()
                .ok_or_else(|| Error::Config(format!("lambda sweep needs a joint setting, got {}", cfg.setting)))?;
            let sg = data.sg_dataset(model.window, mode)?;
            let sweep = SweepData {
                train: &data.train,
                dev: &data.dev,
                vocab: &data.vocab,
                sg: Some(&sg),
                sglr: Some(&sg),
                pretrained: pretrained.as_ref(),
                runs_dir: runs_dir.as_deref(),
            };
            let rows = sweep_lambda(&values, &cfg, &sweep, model.jobs)?;
            write_file(&out, &rows_csv("lambda", &rows))
        }
        Command::SweepSize {
            corpus,
            out,
            fractions,
            settings,
            seeds,
            runs_dir,
            model,
        } => {
            let data = Prepared::load(&corpus)?;
            let cfg = model.config()?;
            let settings: Vec<Setting> = if settings.is_empty() {
                Setting::ALL.to_vec()
            } else {
                settings.iter().map(|s| s.parse()).collect::<Result<_>>()?
            };
            let pretrained = model.pretrained()?;
            let needs = |m: SgMode| settings.iter().any(|s| s.auxiliary() == Some(m));
            let sg = needs(SgMode::Sg).then(|| data.sg_dataset(model.window, SgMode::Sg)).transpose()?;
            let sglr = needs(SgMode::Sglr).then(|| data.sg_dataset(model.window, SgMode::Sglr)).transpose()?;
            let sweep = SweepData {
                train: &data.train,
                dev: &data.dev,
                vocab: &data.vocab,
                sg: sg.as_ref(),
                sglr: sglr.as_ref(),
                pretrained: pretrained.as_ref(),
                runs_dir: runs_dir.as_deref(),
            };
            let rows = sweep_train_size(&fractions, &settings, seeds, &cfg, &sweep, model.jobs)?;
            write_file(&out, &rows_csv("fraction", &rows))
        }
        Command::Gradcheck { seed, instances } => {
            let worst = worst_gradient_errors(seed, instances)?;
            for (loss, err) in &worst {
                println!("{:8} max relative error {err:.3e}", loss.name());
            }
            let max = worst.iter().map(|(_, e)| *e).fold(0.0, Real::max);
            println!("max relative error {max:.3e}");
            if max < GRADCHECK_TOLERANCE {
                Ok(())
            } else {
                Err(Error::Mismatch(format!("gradient check failed: {max:.3e} >= {GRADCHECK_TOLERANCE:e}")))
            }
        }
        Command::EmitCurves { runs, out } => {
            let written = emit_curves(&runs, &out)?;
            for (path, rows) in written {
                println!("{}: {rows} rows", path.display());
            }
            Ok(())
        }
    }
}

const GRADCHECK_TOLERANCE: Real = 1e-4;

fn rows_csv(x_name: &str, rows: &[SweepRow]) -> String {
    let mut s = format!("setting,{x_name},seed,P,R,F,best_epoch\n");
    for r in rows {
        s.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.setting, r.x, r.seed, r.precision, r.recall, r.f, r.best_epoch
        ));
    }
    s
}

pub const CURVE_HEADER: &str = "setting\tx\tP\tR\tF\tseed";
pub const LAMBDA_CURVE: &str = "lambda_curve.tsv";
pub const SIZE_CURVE: &str = "size_curve.tsv";

/// Collects run directories into `lambda_curve.tsv` (lambda sweeps, x =
/// lambda) and `size_curve.tsv` (everything else, x = training fraction).
/// Returns each written file with its row count.
pub fn emit_curves(runs: &[PathBuf], out: &Path) -> Result<Vec<(PathBuf, usize)>> {
    let mut missing = Vec::new();
    let mut reports = Vec::new();
    for dir in runs {
        let path = dir.join("report.json");
        match fs::read_to_string(&path) {
            Ok(text) => reports.push(serde_json::from_str::<RunReport>(&text)?),
            Err(_) => missing.push(dir.display().to_string()),
        }
    }
    if !missing.is_empty() {
        return Err(Error::Config(format!("run data missing for: {}", missing.join(", "))));
    }
    let mut lambda = format!("{CURVE_HEADER}\n");
    let mut size = format!("{CURVE_HEADER}\n");
    let (mut n_lambda, mut n_size) = (0, 0);
    for r in &reports {
        let line = format!(
            "{}\t{}\t{}\t{}\t{}\t{}\n",
            r.setting, r.x, r.dev.precision, r.dev.recall, r.dev.f, r.seed
        );
        if r.sweep == "lambda" {
            lambda.push_str(&line);
            n_lambda += 1;
        } else {
            size.push_str(&line);
            n_size += 1;
        }
    }
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let lp = out.join(LAMBDA_CURVE);
    let sp = out.join(SIZE_CURVE);
    write_file(&lp, &lambda)?;
    write_file(&sp, &size)?;
    Ok(vec![(lp, n_lambda), (sp, n_size)])
}

/// Worst gradient-check error per model over `instances` seeds starting at `seed`.
pub fn worst_gradient_errors(seed: u64, instances: u64) -> Result<Vec<(CheckedLoss, Real)>> {
    let mut out = Vec::new();
    for loss in CheckedLoss::ALL {
        let mut worst: Real = 0.0;
        for i in 0..instances {
            worst = worst.max(crate::models::check_tiny_gradients(loss, seed.wrapping_add(i))?);
        }
        out.push((loss, worst));
    }
    Ok(out)
}
