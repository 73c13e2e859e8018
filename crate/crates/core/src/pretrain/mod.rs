//! Initialization schedules run before transducer training.
//!
//! * encoder cross-entropy against frame alignments, through a throwaway
//!   output layer;
//! * encoder CTC on transcripts, through a throwaway output layer;
//! * prediction-network language modelling, through a throwaway output layer;
//! * whole-network cross-entropy against a label tensor (`y1`, `y2`, `y3`).
//!
//! Every schedule returns a model with the same configuration, parameter
//! names and shapes as its input, so results are interchangeable with a
//! random initialization. Output layers added for a schedule are returned
//! separately for inspection and never transferred.

pub mod fit;
pub mod labels;

pub use fit::{fit, FitConfig, ItemLoss};
pub use labels::{build_y1, build_y2, build_y3, LabelBuilder, LabelTensor, LabelVariant};

use std::fmt;
use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::alignment::{FrameAlignment, Utterance};
use crate::error::{Error, Result};
use crate::loss::{ctc_loss, frame_ce_from_logits, lm_ce_from_logits, masked_ce_3d, Affine, LossOutput};
use crate::model::RnntModel;
use crate::numerics::{xavier_uniform, ParamId, ParamSet, Tape, Tensor, Var};

/// Every pre-training schedule, named as on the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PretrainVariant {
    #[serde(rename = "enc-ce")]
    EncoderCe,
    #[serde(rename = "enc-ctc")]
    EncoderCtc,
    #[serde(rename = "lm")]
    PredictionLm,
    #[serde(rename = "y1")]
    WholeY1,
    #[serde(rename = "y2")]
    WholeY2,
    #[serde(rename = "y3")]
    WholeY3,
}

impl PretrainVariant {
    pub fn name(self) -> &'static str {
        match self {
            PretrainVariant::EncoderCe => "enc-ce",
            PretrainVariant::EncoderCtc => "enc-ctc",
            PretrainVariant::PredictionLm => "lm",
            PretrainVariant::WholeY1 => "y1",
            PretrainVariant::WholeY2 => "y2",
            PretrainVariant::WholeY3 => "y3",
        }
    }

    pub fn label_variant(self) -> Option<LabelVariant> {
        match self {
            PretrainVariant::WholeY1 => Some(LabelVariant::Y1),
            PretrainVariant::WholeY2 => Some(LabelVariant::Y2),
            PretrainVariant::WholeY3 => Some(LabelVariant::Y3),
            _ => None,
        }
    }
}

impl fmt::Display for PretrainVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for PretrainVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "enc-ce" => PretrainVariant::EncoderCe,
            "enc-ctc" => PretrainVariant::EncoderCtc,
            "lm" => PretrainVariant::PredictionLm,
            "y1" => PretrainVariant::WholeY1,
            "y2" => PretrainVariant::WholeY2,
            "y3" => PretrainVariant::WholeY3,
            other => return Err(Error::invalid(format!("unknown pre-training variant {other:?}"))),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PretrainConfig {
    pub fit: FitConfig,
    /// Token id used for frames outside every word.
    pub space_id: usize,
    /// Seeds the throwaway output layer.
    pub head_seed: u64,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        Self {
            fit: FitConfig::default(),
            space_id: 0,
            head_seed: 7,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PretrainReport {
    pub variant: PretrainVariant,
    pub epochs: usize,
    pub epoch_losses: Vec<f64>,
    /// Utterances that took part in training.
    pub used: usize,
    /// Utterances dropped because a word has more pieces than frames.
    pub skipped_degenerate: usize,
    /// Utterances dropped because the objective cannot score them (too few
    /// frames for CTC, empty transcript for the language model).
    pub skipped_unusable: usize,
}

impl PretrainReport {
    pub fn final_loss(&self) -> Option<f64> {
        self.epoch_losses.last().copied()
    }
}

#[derive(Debug, Clone)]
pub struct PretrainOutcome {
    pub model: RnntModel,
    /// The schedule's own output layer, if it had one.
    pub head: Option<Affine>,
    pub report: PretrainReport,
}

/// Sidecar written next to a pre-trained checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PretrainManifest {
    pub variant: PretrainVariant,
    pub epochs: usize,
    pub corpus_hash: String,
    pub final_loss: Option<f64>,
}

impl PretrainManifest {
    pub fn new(report: &PretrainReport, corpus: &[Utterance]) -> Result<Self> {
        Ok(Self {
            variant: report.variant,
            epochs: report.epochs,
            corpus_hash: crate::alignment::corpus_hash(corpus)?,
            final_loss: report.final_loss(),
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
    }
}

/// Runs the schedule named by `variant`.
pub fn run_pretrain(
    model: &RnntModel,
    corpus: &[Utterance],
    variant: PretrainVariant,
    cfg: &PretrainConfig,
) -> Result<PretrainOutcome> {
    match variant {
        PretrainVariant::EncoderCe => pretrain_encoder_ce(model, corpus, cfg),
        PretrainVariant::EncoderCtc => pretrain_encoder_ctc(model, corpus, cfg),
        PretrainVariant::PredictionLm => pretrain_prediction_lm(model, corpus, cfg),
        PretrainVariant::WholeY1 | PretrainVariant::WholeY2 | PretrainVariant::WholeY3 => {
            let labels = variant.label_variant().expect("whole-network variant");
            pretrain_whole_network(model, corpus, &labels, cfg)
        }
    }
}

/// Model parameter groups that can be moved between models.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Component {
    Encoder,
    /// Embedding table and prediction LSTM.
    Prediction,
    Joint,
}

impl Component {
    fn prefix(self) -> &'static str {
        match self {
            Component::Encoder => "encoder.",
            Component::Prediction => "prediction.",
            Component::Joint => "joint.",
        }
    }
}

/// Copies one component's weights from `src` into `dst`. Returns how many
/// tensors were copied.
pub fn transfer_component(dst: &mut RnntModel, src: &RnntModel, component: Component) -> Result<usize> {
    if dst.config() != src.config() {
        return Err(Error::Checkpoint("cannot transfer between different model configurations".into()));
    }
    let prefix = component.prefix();
    let mut copied = 0;
    for (name, tensor) in src.params().iter() {
        if name.starts_with(prefix) {
            let id = dst.params().id_of(name).expect("same configuration");
            dst.params_mut().get_mut(id).data_mut().copy_from_slice(tensor.data());
            copied += 1;
        }
    }
    Ok(copied)
}

struct Head {
    weight: ParamId,
    bias: ParamId,
}

impl Head {
    fn attach(params: &mut ParamSet, input: usize, output: usize, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok(Self {
            weight: params.add("head.weight", xavier_uniform(&mut rng, input, output))?,
            bias: params.add("head.bias", Tensor::zeros(&[output]))?,
        })
    }

    fn apply(&self, tape: &mut Tape, params: &ParamSet, x: Var) -> Result<Var> {
        let w = tape.param(params, self.weight);
        let b = tape.param(params, self.bias);
        let s = tape.matmul(x, w)?;
        tape.add_row(s, b)
    }

    fn extract(&self, params: &ParamSet) -> Affine {
        Affine {
            weight: params.get(self.weight).clone(),
            bias: params.get(self.bias).clone(),
        }
    }
}

fn attach_loss(tape: &mut Tape, scores: Var, out: LossOutput, units: f64) -> Result<ItemLoss> {
    let value = out.value;
    let root = tape.external(scores, value, out.grad_logits.into_data())?;
    Ok(ItemLoss { root, value, units })
}

/// Per-utterance inputs after stacking and alignment.
struct Prepared {
    frames: Tensor,
    transcript: Vec<usize>,
    alignment: Option<FrameAlignment>,
}

struct Preparation {
    items: Vec<Prepared>,
    skipped_degenerate: usize,
}

fn prepare(model: &RnntModel, corpus: &[Utterance], space_id: usize, need_alignment: bool) -> Result<Preparation> {
    let mut items = Vec::with_capacity(corpus.len());
    let mut skipped_degenerate = 0;
    for utt in corpus {
        let alignment = if need_alignment {
            match utt.frame_alignment(model.config().stride, space_id) {
                Ok(fa) => Some(fa),
                Err(Error::DegenerateUtterance { .. }) => {
                    skipped_degenerate += 1;
                    continue;
                }
                Err(e) => return Err(e),
            }
        } else {
            None
        };
        items.push(Prepared {
            frames: model.frames(&utt.features_tensor()?)?,
            transcript: utt.transcript.clone(),
            alignment,
        });
    }
    Ok(Preparation {
        items,
        skipped_degenerate,
    })
}

/// Trains `work` (the model's parameters, possibly with a head appended),
/// then drops the head and rebuilds the model.
fn finish(
    model: &RnntModel,
    mut work: ParamSet,
    head: Option<&Head>,
    epoch_losses: Vec<f64>,
    report: PretrainReport,
) -> Result<PretrainOutcome> {
    let head = head.map(|h| h.extract(&work));
    work.truncate(model.params().len());
    Ok(PretrainOutcome {
        model: RnntModel::from_params(model.config().clone(), work)?,
        head,
        report: PretrainReport { epoch_losses, ..report },
    })
}

fn report(variant: PretrainVariant, cfg: &PretrainConfig, used: usize, degenerate: usize, unusable: usize) -> PretrainReport {
    PretrainReport {
        variant,
        epochs: cfg.fit.epochs,
        epoch_losses: Vec::new(),
        used,
        skipped_degenerate: degenerate,
        skipped_unusable: unusable,
    }
}

/// Encoder plus a fresh output layer trained with frame cross-entropy on the
/// alignment labels.
pub fn pretrain_encoder_ce(model: &RnntModel, corpus: &[Utterance], cfg: &PretrainConfig) -> Result<PretrainOutcome> {
    let prep = prepare(model, corpus, cfg.space_id, true)?;
    let layout = model.layout().clone();
    let mut work = model.params().clone();
    let head = Head::attach(&mut work, model.config().encoder_hidden, model.num_classes(), cfg.head_seed)?;
    let losses = fit(
        &mut work,
        &prep.items,
        &cfg.fit,
        |tape, params, item| {
            let x = tape.input(&item.frames);
            let enc = layout.encode_on(tape, params, x)?;
            let scores = head.apply(tape, params, enc)?;
            let labels = &item.alignment.as_ref().expect("prepared with alignment").labels;
            let out = frame_ce_from_logits(&tape.tensor(scores), labels)?;
            attach_loss(tape, scores, out, 1.0)
        },
        |_, _, _| Ok(()),
    )?;
    let r = report(PretrainVariant::EncoderCe, cfg, prep.items.len(), prep.skipped_degenerate, 0);
    finish(model, work, Some(&head), losses, r)
}

/// Encoder plus a fresh output layer trained with CTC on the transcripts.
/// Utterances with too few frames for their transcript are skipped.
pub fn pretrain_encoder_ctc(model: &RnntModel, corpus: &[Utterance], cfg: &PretrainConfig) -> Result<PretrainOutcome> {
    let prep = prepare(model, corpus, cfg.space_id, false)?;
    let total = prep.items.len();
    let items: Vec<Prepared> = prep
        .items
        .into_iter()
        .filter(|p| p.frames.rows() >= crate::loss::ctc_min_frames(&p.transcript))
        .collect();
    let unusable = total - items.len();
    let layout = model.layout().clone();
    let blank = model.blank();
    let mut work = model.params().clone();
    let head = Head::attach(&mut work, model.config().encoder_hidden, model.num_classes(), cfg.head_seed)?;
    let losses = fit(
        &mut work,
        &items,
        &cfg.fit,
        |tape, params, item| {
            let x = tape.input(&item.frames);
            let enc = layout.encode_on(tape, params, x)?;
            let scores = head.apply(tape, params, enc)?;
            let out = ctc_loss(&tape.tensor(scores), &item.transcript, blank)?;
            attach_loss(tape, scores, out, item.transcript.len().max(1) as f64)
        },
        |_, _, _| Ok(()),
    )?;
    let r = report(PretrainVariant::EncoderCtc, cfg, items.len(), 0, unusable);
    finish(model, work, Some(&head), losses, r)
}

/// Prediction network plus a fresh output layer trained to predict each next
/// transcript token. Empty transcripts are skipped.
pub fn pretrain_prediction_lm(model: &RnntModel, corpus: &[Utterance], cfg: &PretrainConfig) -> Result<PretrainOutcome> {
    let items: Vec<Vec<usize>> = corpus
        .iter()
        .filter(|u| !u.transcript.is_empty())
        .map(|u| u.transcript.clone())
        .collect();
    let unusable = corpus.len() - items.len();
    let layout = model.layout().clone();
    let mut work = model.params().clone();
    let head = Head::attach(&mut work, model.config().prediction_hidden, model.num_classes(), cfg.head_seed)?;
    let losses = fit(
        &mut work,
        &items,
        &cfg.fit,
        |tape, params, transcript| {
            let pred = layout.predict_on(tape, params, transcript)?;
            let scores = head.apply(tape, params, pred)?;
            let out = lm_ce_from_logits(&tape.tensor(scores), transcript)?;
            attach_loss(tape, scores, out, 1.0)
        },
        |_, _, _| Ok(()),
    )?;
    let r = report(PretrainVariant::PredictionLm, cfg, items.len(), 0, unusable);
    finish(model, work, Some(&head), losses, r)
}

/// Encoder, prediction and joint networks trained together with masked
/// cross-entropy against the label tensors produced by `labels`.
pub fn pretrain_whole_network(
    model: &RnntModel,
    corpus: &[Utterance],
    labels: &dyn LabelBuilder,
    cfg: &PretrainConfig,
) -> Result<PretrainOutcome> {
    let prep = prepare(model, corpus, cfg.space_id, true)?;
    let blank = model.blank();
    let mut items = Vec::with_capacity(prep.items.len());
    for p in prep.items {
        let fa = p.alignment.as_ref().expect("prepared with alignment");
        let label = labels.build(fa, &p.transcript, blank, cfg.space_id)?;
        items.push((p, label));
    }
    let layout = model.layout().clone();
    let mut work = model.params().clone();
    let losses = fit(
        &mut work,
        &items,
        &cfg.fit,
        |tape, params, (item, label)| {
            let scores = layout.logits_on(tape, params, &item.frames, &item.transcript)?;
            let out = masked_ce_3d(&tape.tensor(scores), label)?;
            attach_loss(tape, scores, out, 1.0)
        },
        |_, _, _| Ok(()),
    )?;
    let variant = match labels.variant() {
        LabelVariant::Y1 => PretrainVariant::WholeY1,
        LabelVariant::Y2 => PretrainVariant::WholeY2,
        LabelVariant::Y3 => PretrainVariant::WholeY3,
    };
    let r = report(variant, cfg, items.len(), prep.skipped_degenerate, 0);
    finish(model, work, None, losses, r)
}
