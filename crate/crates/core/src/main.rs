use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use serde::Serialize;

use rnnt_lab::alignment::{corpus_hash, read_corpus, write_corpus, Utterance};
use rnnt_lab::decoding::{beam_decode, greedy_decode, write_delay_csv, write_nbest, DelayStats, ModelScorer, NbestRecord};
use rnnt_lab::harness::{evaluate, gen_corpus, train_items, train_rnnt, ExperimentConfig, run_experiment};
use rnnt_lab::model::{load_checkpoint, save_checkpoint, RnntModel};
use rnnt_lab::pretrain::{run_pretrain, PretrainManifest, PretrainVariant};

#[derive(Parser)]
#[command(name = "rnnt-lab", about = "Train, pre-train and decode small RNN transducers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write synthetic train/test corpora as JSONL.
    GenCorpus {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Pre-train from the seeded initial model and save a checkpoint.
    Pretrain {
        #[arg(long)]
        variant: PretrainVariant,
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train with the transducer loss.
    Train {
        /// A checkpoint path, or `random` for the seeded initial model.
        #[arg(long)]
        init: String,
        #[arg(long)]
        train: PathBuf,
        /// Scored after the last epoch when given.
        #[arg(long)]
        test: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Per-epoch metrics CSV.
        #[arg(long)]
        metrics: Option<PathBuf>,
    },
    /// Beam-search decode a corpus and write n-best JSONL.
    Decode {
        #[arg(long)]
        beam: usize,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, default_value_t = rnnt_lab::decoding::DEFAULT_MAX_SYMBOLS)]
        max_symbols: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Greedy-decode a corpus and write the word emission delay histogram.
    DelayStats {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, default_value_t = rnnt_lab::decoding::DEFAULT_MAX_SYMBOLS)]
        max_symbols: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the initialization comparison and write metrics CSV and summary JSON.
    Experiment {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn load_config(path: Option<&Path>) -> Result<ExperimentConfig> {
    match path {
        Some(p) => ExperimentConfig::load(p).with_context(|| format!("loading config {}", p.display())),
        None => Ok(ExperimentConfig::default()),
    }
}

fn load_corpus(path: &Path, model: &RnntModel) -> Result<Vec<Utterance>> {
    let corpus = read_corpus(path).with_context(|| format!("reading corpus {}", path.display()))?;
    if corpus.is_empty() {
        bail!("corpus {} is empty", path.display());
    }
    let vocab = model.config().vocab_size;
    let dim = model.config().input_dim;
    for utt in &corpus {
        if let Some(&bad) = utt.transcript.iter().find(|&&k| k >= vocab) {
            bail!("{}: token {bad} outside the model vocabulary of {vocab}", utt.id);
        }
        if utt.features.iter().any(|f| f.len() != dim) {
            bail!("{}: feature width differs from the model input_dim {dim}", utt.id);
        }
    }
    Ok(corpus)
}

fn load_model(path: &Path) -> Result<RnntModel> {
    load_checkpoint(path).with_context(|| format!("loading checkpoint {}", path.display()))
}

#[derive(Serialize)]
struct TrainRow {
    epoch: usize,
    train_loss: f64,
}

#[derive(Serialize)]
struct TrainSummary {
    init: String,
    corpus_hash: String,
    epoch_losses: Vec<f64>,
    token_error_rate: Option<f64>,
    mean_delay: Option<f64>,
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenCorpus { config, out } => {
            let cfg = load_config(config.as_deref())?;
            let corpus = gen_corpus(&cfg.corpus)?;
            fs::create_dir_all(&out)?;
            write_corpus(out.join("train.jsonl"), &corpus.train)?;
            write_corpus(out.join("test.jsonl"), &corpus.test)?;
            println!(
                "{} train / {} test utterances, train hash {}",
                corpus.train.len(),
                corpus.test.len(),
                corpus_hash(&corpus.train)?
            );
        }
        Command::Pretrain { variant, train, config, out } => {
            let cfg = load_config(config.as_deref())?;
            let base = RnntModel::new(cfg.model.clone(), cfg.init_seed)?;
            let corpus = load_corpus(&train, &base)?;
            let outcome = run_pretrain(&base, &corpus, variant, &cfg.pretrain)?;
            save_checkpoint(&outcome.model, &out)?;
            let manifest = PretrainManifest::new(&outcome.report, &corpus)?;
            manifest.save(out.with_extension("manifest.json"))?;
            println!(
                "{variant}: {} utterances used, final loss {:?}",
                outcome.report.used,
                outcome.report.final_loss()
            );
        }
        Command::Train { init, train, test, config, out, metrics } => {
            let cfg = load_config(config.as_deref())?;
            let model = if init == "random" {
                RnntModel::new(cfg.model.clone(), cfg.init_seed)?
            } else {
                let m = load_model(Path::new(&init))?;
                if m.config() != &cfg.model {
                    bail!("checkpoint {init} was built with a different model config");
                }
                m
            };
            let corpus = load_corpus(&train, &model)?;
            let items = train_items(&model, &corpus)?;
            let mut rows = Vec::new();
            let (model, losses) = train_rnnt(model, &items, &cfg.train, |epoch, train_loss, _| {
                println!("epoch {epoch}: loss {train_loss:.4}");
                rows.push(TrainRow { epoch, train_loss });
                Ok(())
            })?;
            save_checkpoint(&model, &out)?;
            if let Some(path) = metrics {
                let mut w = csv::Writer::from_path(path)?;
                for row in &rows {
                    w.serialize(row)?;
                }
                w.flush()?;
            }
            let eval = match test {
                Some(path) => {
                    let test = load_corpus(&path, &model)?;
                    Some(evaluate(&model, &test, cfg.beam_width, cfg.max_symbols_per_frame)?)
                }
                None => None,
            };
            let summary = TrainSummary {
                init,
                corpus_hash: corpus_hash(&corpus)?,
                epoch_losses: losses,
                token_error_rate: eval.as_ref().map(|e| e.token_error_rate),
                mean_delay: eval.as_ref().and_then(|e| e.delay.mean()),
            };
            fs::write(out.with_extension("summary.json"), serde_json::to_string_pretty(&summary)?)?;
            if let Some(ter) = summary.token_error_rate {
                println!("test token error rate {ter:.4}");
            }
        }
        Command::Decode { beam, checkpoint, corpus, max_symbols, out } => {
            if beam == 0 {
                bail!("--beam must be at least 1");
            }
            let model = load_model(&checkpoint)?;
            let corpus = load_corpus(&corpus, &model)?;
            let mut records: Vec<NbestRecord> = Vec::new();
            for utt in &corpus {
                let scorer = ModelScorer::from_features(&model, &utt.features_tensor()?)?;
                let result = beam_decode(&scorer, beam, max_symbols)?;
                records.extend(NbestRecord::from_result(&utt.id, &result));
            }
            write_nbest(&out, &records)?;
            println!("decoded {} utterances", corpus.len());
        }
        Command::DelayStats { checkpoint, corpus, max_symbols, out } => {
            let model = load_model(&checkpoint)?;
            let corpus = load_corpus(&corpus, &model)?;
            let mut stats = DelayStats::default();
            for utt in &corpus {
                let scorer = ModelScorer::from_features(&model, &utt.features_tensor()?)?;
                let hyp = greedy_decode(&scorer, max_symbols)?;
                stats.add(&hyp, &utt.transcript, &utt.words)?;
            }
            write_delay_csv(&out, &stats)?;
            println!(
                "{} utterances measured, {} skipped, mean delay {:?}",
                stats.measured,
                stats.skipped_mismatch,
                stats.mean()
            );
        }
        Command::Experiment { config, out } => {
            let cfg = ExperimentConfig::load(&config).with_context(|| format!("loading config {}", config.display()))?;
            let report = run_experiment(&cfg)?;
            fs::create_dir_all(&out)?;
            report.write_metrics_csv(out.join("metrics.csv"))?;
            report.write_summary(out.join("summary.json"))?;
            for arm in &report.summary.arms {
                match &arm.error {
                    Some(e) => println!("{:<12} failed: {e}", arm.arm.name()),
                    None => println!(
                        "{:<12} TER {:.4}  mean delay {}  ({:.0}s)",
                        arm.arm.name(),
                        arm.token_error_rate().unwrap_or(f64::NAN),
                        arm.mean_delay().map_or("n/a".into(), |d| format!("{d:.3}")),
                        arm.wall_seconds
                    ),
                }
            }
        }
    }
    Ok(())
}

fn main() {
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
