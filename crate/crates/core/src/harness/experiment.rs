//! Head-to-head comparison of initialization strategies.
//!
//! Every arm starts from the same seeded model, applies its own
//! initialization, then goes through the same [`train_rnnt`] call with the
//! same settings and is scored on the same test set.

use std::fmt;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::corpus::{count_degenerate, gen_corpus, CorpusConfig, SyntheticCorpus};
use super::metrics::{evaluate, Evaluation};
use crate::alignment::Utterance;
use crate::error::{Error, Result};
use crate::loss::rnnt_loss;
use crate::model::{ModelConfig, RnntModel};
use crate::numerics::Tensor;
use crate::pretrain::{
    fit, pretrain_encoder_ce, pretrain_encoder_ctc, pretrain_prediction_lm, pretrain_whole_network,
    transfer_component, Component, FitConfig, ItemLoss, LabelVariant, PretrainConfig, PretrainReport,
};

/// One initialization strategy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Arm {
    Random,
    /// CTC-trained encoder, everything else random.
    CtcEncoder,
    /// CTC-trained encoder and language-model-trained prediction network.
    CtcLm,
    EncoderCe,
    WholeY1,
    WholeY2,
    WholeY3,
}

impl Arm {
    pub const ALL: [Arm; 7] = [
        Arm::Random,
        Arm::CtcEncoder,
        Arm::CtcLm,
        Arm::EncoderCe,
        Arm::WholeY1,
        Arm::WholeY2,
        Arm::WholeY3,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Arm::Random => "random",
            Arm::CtcEncoder => "ctc_encoder",
            Arm::CtcLm => "ctc_lm",
            Arm::EncoderCe => "encoder_ce",
            Arm::WholeY1 => "whole_y1",
            Arm::WholeY2 => "whole_y2",
            Arm::WholeY3 => "whole_y3",
        }
    }
}

impl fmt::Display for Arm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub model: ModelConfig,
    pub corpus: CorpusConfig,
    pub arms: Vec<Arm>,
    /// Seed of the shared starting model.
    pub init_seed: u64,
    pub pretrain: PretrainConfig,
    /// Main transducer training, identical for every arm.
    pub train: FitConfig,
    pub beam_width: usize,
    pub max_symbols_per_frame: usize,
    /// Score the test set every this many epochs (the last epoch is always
    /// scored); 0 scores only the last epoch.
    pub eval_every: usize,
    /// Run arms on separate threads. Results do not depend on this.
    pub parallel_arms: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            model: ModelConfig::default(),
            corpus: CorpusConfig::default(),
            arms: Arm::ALL.to_vec(),
            init_seed: 11,
            pretrain: PretrainConfig::default(),
            train: FitConfig::default(),
            beam_width: 5,
            max_symbols_per_frame: crate::decoding::DEFAULT_MAX_SYMBOLS,
            eval_every: 0,
            parallel_arms: false,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.corpus.validate()?;
        if self.corpus.vocab_size != self.model.vocab_size {
            return Err(Error::invalid(format!(
                "corpus vocab_size {} differs from model vocab_size {}",
                self.corpus.vocab_size, self.model.vocab_size
            )));
        }
        if self.corpus.input_dim != self.model.input_dim || self.corpus.stride != self.model.stride {
            return Err(Error::invalid("corpus input_dim/stride must match the model"));
        }
        if self.arms.is_empty() {
            return Err(Error::invalid("no arms to run"));
        }
        if self.beam_width == 0 || self.max_symbols_per_frame == 0 {
            return Err(Error::invalid("beam_width and max_symbols_per_frame must be positive"));
        }
        if self.corpus.train_utterances == 0 || self.corpus.test_utterances == 0 {
            return Err(Error::invalid("train and test sets must be non-empty"));
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let cfg: Self = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// SHA-256 prefix over every setting that can change results.
    pub fn hash(&self) -> String {
        let relevant = serde_json::json!({
            "model": self.model,
            "corpus": self.corpus,
            "init_seed": self.init_seed,
            "pretrain": self.pretrain,
            "train": self.train,
            "beam_width": self.beam_width,
            "max_symbols_per_frame": self.max_symbols_per_frame,
            "eval_every": self.eval_every,
        });
        let digest = Sha256::digest(relevant.to_string().as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }
}

/// One line of the metrics CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub config_hash: String,
    pub arm: Arm,
    /// `pretrain` or `train`.
    pub phase: String,
    pub epoch: usize,
    pub train_loss: f64,
    pub token_error_rate: Option<f64>,
    /// Absent when no test utterance was decoded correctly.
    pub mean_delay: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmSummary {
    pub arm: Arm,
    /// `None` on success, otherwise the error that stopped the arm.
    pub error: Option<String>,
    pub pretrain: Vec<PretrainReport>,
    pub final_train_loss: Option<f64>,
    pub evaluation: Option<Evaluation>,
    pub wall_seconds: f64,
}

impl ArmSummary {
    pub fn token_error_rate(&self) -> Option<f64> {
        self.evaluation.as_ref().map(|e| e.token_error_rate)
    }

    pub fn mean_delay(&self) -> Option<f64> {
        self.evaluation.as_ref().and_then(|e| e.delay.mean())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub config_hash: String,
    pub train_utterances: usize,
    pub test_utterances: usize,
    /// Training utterances unusable for alignment-based pre-training.
    pub degenerate_train_utterances: usize,
    pub arms: Vec<ArmSummary>,
}

impl ExperimentSummary {
    pub fn arm(&self, arm: Arm) -> Option<&ArmSummary> {
        self.arms.iter().find(|a| a.arm == arm)
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentReport {
    pub rows: Vec<MetricsRow>,
    pub summary: ExperimentSummary,
}

impl ExperimentReport {
    pub fn write_metrics_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        write_metrics_csv(path, &self.rows)
    }

    pub fn write_summary(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(&self.summary)?)?;
        Ok(())
    }
}

pub fn write_metrics_csv(path: impl AsRef<Path>, rows: &[MetricsRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

/// Hooks into an experiment run; used to check that arms differ only in
/// their initialization.
pub trait ExperimentObserver: Sync {
    /// Called with the model handed to [`train_rnnt`].
    fn initialized(&self, _arm: Arm, _model: &RnntModel) {}
    /// Called with the model after main training.
    fn trained(&self, _arm: Arm, _model: &RnntModel) {}
}

struct NoObserver;

impl ExperimentObserver for NoObserver {}

/// Transducer-loss training item: stacked frames and transcript.
pub struct TrainItem {
    pub frames: Tensor,
    pub transcript: Vec<usize>,
}

pub fn train_items(model: &RnntModel, corpus: &[Utterance]) -> Result<Vec<TrainItem>> {
    corpus
        .iter()
        .map(|u| {
            Ok(TrainItem {
                frames: model.frames(&u.features_tensor()?)?,
                transcript: u.transcript.clone(),
            })
        })
        .collect()
}

/// Main training with the transducer loss. `on_epoch` receives the epoch,
/// its training loss (per target token) and the current model.
pub fn train_rnnt<E>(model: RnntModel, items: &[TrainItem], cfg: &FitConfig, mut on_epoch: E) -> Result<(RnntModel, Vec<f64>)>
where
    E: FnMut(usize, f64, &RnntModel) -> Result<()>,
{
    let layout = model.layout().clone();
    let config = model.config().clone();
    let blank = model.blank();
    let mut params = model.into_params();
    let losses = fit(
        &mut params,
        items,
        cfg,
        |tape, params, item| {
            let logits = layout.logits_on(tape, params, &item.frames, &item.transcript)?;
            let out = rnnt_loss(&tape.tensor(logits), &item.transcript, blank)?;
            let value = out.value;
            let root = tape.external(logits, value, out.grad_logits.into_data())?;
            Ok(ItemLoss {
                root,
                value,
                units: item.transcript.len().max(1) as f64,
            })
        },
        |epoch, loss, params| {
            let snapshot = RnntModel::from_params(config.clone(), params.clone())?;
            on_epoch(epoch, loss, &snapshot)
        },
    )?;
    Ok((RnntModel::from_params(config, params)?, losses))
}

/// Applies an arm's initialization to the shared starting model.
pub fn initialize_arm(
    arm: Arm,
    base: &RnntModel,
    train: &[Utterance],
    cfg: &PretrainConfig,
) -> Result<(RnntModel, Vec<PretrainReport>)> {
    Ok(match arm {
        Arm::Random => (base.clone(), Vec::new()),
        Arm::EncoderCe => {
            let out = pretrain_encoder_ce(base, train, cfg)?;
            (out.model, vec![out.report])
        }
        Arm::CtcEncoder => {
            let out = pretrain_encoder_ctc(base, train, cfg)?;
            (out.model, vec![out.report])
        }
        Arm::CtcLm => {
            let ctc = pretrain_encoder_ctc(base, train, cfg)?;
            let lm = pretrain_prediction_lm(base, train, cfg)?;
            let mut model = ctc.model;
            transfer_component(&mut model, &lm.model, Component::Prediction)?;
            (model, vec![ctc.report, lm.report])
        }
        Arm::WholeY1 | Arm::WholeY2 | Arm::WholeY3 => {
            let variant = match arm {
                Arm::WholeY1 => LabelVariant::Y1,
                Arm::WholeY2 => LabelVariant::Y2,
                _ => LabelVariant::Y3,
            };
            let out = pretrain_whole_network(base, train, &variant, cfg)?;
            (out.model, vec![out.report])
        }
    })
}

struct ArmOutcome {
    rows: Vec<MetricsRow>,
    summary: ArmSummary,
}

fn run_arm(
    arm: Arm,
    cfg: &ExperimentConfig,
    hash: &str,
    base: &RnntModel,
    corpus: &SyntheticCorpus,
    items: &[TrainItem],
    observer: &dyn ExperimentObserver,
) -> ArmOutcome {
    let started = Instant::now();
    let mut rows = Vec::new();
    let mut pretrain = Vec::new();
    let mut final_train_loss = None;
    let mut evaluation = None;
    let result = (|| -> Result<()> {
        let (model, reports) = initialize_arm(arm, base, &corpus.train, &cfg.pretrain)?;
        for report in &reports {
            for (i, &loss) in report.epoch_losses.iter().enumerate() {
                rows.push(MetricsRow {
                    config_hash: hash.to_string(),
                    arm,
                    phase: format!("pretrain:{}", report.variant),
                    epoch: i + 1,
                    train_loss: loss,
                    token_error_rate: None,
                    mean_delay: None,
                });
            }
        }
        pretrain = reports;
        observer.initialized(arm, &model);
        let epochs = cfg.train.epochs;
        let (model, _) = train_rnnt(model, items, &cfg.train, |epoch, loss, model| {
            let scored = epoch == epochs || (cfg.eval_every > 0 && epoch % cfg.eval_every == 0);
            let eval = if scored {
                Some(evaluate(model, &corpus.test, cfg.beam_width, cfg.max_symbols_per_frame)?)
            } else {
                None
            };
            rows.push(MetricsRow {
                config_hash: hash.to_string(),
                arm,
                phase: "train".into(),
                epoch,
                train_loss: loss,
                token_error_rate: eval.as_ref().map(|e| e.token_error_rate),
                mean_delay: eval.as_ref().and_then(|e| e.delay.mean()),
            });
            final_train_loss = Some(loss);
            if eval.is_some() {
                evaluation = eval;
            }
            Ok(())
        })?;
        if epochs == 0 {
            evaluation = Some(evaluate(&model, &corpus.test, cfg.beam_width, cfg.max_symbols_per_frame)?);
        }
        observer.trained(arm, &model);
        Ok(())
    })();
    ArmOutcome {
        rows,
        summary: ArmSummary {
            arm,
            error: result.err().map(|e| e.to_string()),
            pretrain,
            final_train_loss,
            evaluation,
            wall_seconds: started.elapsed().as_secs_f64(),
        },
    }
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    run_experiment_observed(cfg, &NoObserver)
}

/// Runs every arm. An arm that fails is recorded in the summary and the
/// remaining arms still run.
pub fn run_experiment_observed(cfg: &ExperimentConfig, observer: &dyn ExperimentObserver) -> Result<ExperimentReport> {
    cfg.validate()?;
    let hash = cfg.hash();
    let corpus = gen_corpus(&cfg.corpus)?;
    let base = RnntModel::new(cfg.model.clone(), cfg.init_seed)?;
    let items = train_items(&base, &corpus.train)?;

    let outcomes: Vec<ArmOutcome> = if cfg.parallel_arms {
        std::thread::scope(|s| {
            let handles: Vec<_> = cfg
                .arms
                .iter()
                .map(|&arm| {
                    let (hash, base, corpus, items) = (&hash, &base, &corpus, &items);
                    s.spawn(move || run_arm(arm, cfg, hash, base, corpus, items, observer))
                })
                .collect();
            handles.into_iter().map(|h| h.join().expect("arm thread panicked")).collect()
        })
    } else {
        cfg.arms
            .iter()
            .map(|&arm| run_arm(arm, cfg, &hash, &base, &corpus, &items, observer))
            .collect()
    };

    let mut rows = Vec::new();
    let mut arms = Vec::new();
    for o in outcomes {
        rows.extend(o.rows);
        arms.push(o.summary);
    }
    Ok(ExperimentReport {
        rows,
        summary: ExperimentSummary {
            config_hash: hash,
            train_utterances: corpus.train.len(),
            test_utterances: corpus.test.len(),
            degenerate_train_utterances: count_degenerate(&corpus.train, cfg.model.stride),
            arms,
        },
    })
}
