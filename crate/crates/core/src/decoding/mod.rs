//! Frame-synchronous greedy and beam decoding, and emission-delay analysis.
//!
//! Decoders are written against [`Transducer`], which exposes one output
//! distribution per (frame, label-history state). [`ModelScorer`] implements
//! it for a trained model; [`LabelOracle`] reads a label tensor as if it were
//! model output, which is how the whole-network targets can be checked for
//! decodability.

mod beam;
mod delay;
mod greedy;

pub use beam::{beam_decode, beam_search, BeamResult};
pub use delay::{measure_delay, write_delay_csv, DelayStats};
pub use greedy::{greedy_decode, greedy_decode_traced};

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{LstmState, RnntModel};
use crate::numerics::ops::log_softmax_into;
use crate::numerics::Tensor;
use crate::pretrain::LabelTensor;

/// Default cap on non-blank emissions per frame.
pub const DEFAULT_MAX_SYMBOLS: usize = 4;

/// A source of per-frame output distributions conditioned on label history.
pub trait Transducer {
    type State: Clone;

    fn num_frames(&self) -> usize;

    /// Number of output classes including blank.
    fn num_classes(&self) -> usize;

    fn blank(&self) -> usize;

    /// State before any label has been emitted.
    fn initial_state(&self) -> Self::State;

    /// Normalized log-probabilities over all classes at `frame`.
    fn log_probs(&self, frame: usize, state: &Self::State) -> Vec<f64>;

    /// State after emitting the non-blank `token`.
    fn advance(&self, state: &Self::State, token: usize) -> Result<Self::State>;
}

/// A partial or complete decoding result.
#[derive(Debug, Clone, PartialEq)]
pub struct Hypothesis<S> {
    pub prefix: Vec<usize>,
    pub log_prob: f64,
    pub state: S,
    /// Encoder frame at which each prefix token was emitted.
    pub emit_frames: Vec<usize>,
}

impl<S> Hypothesis<S> {
    fn start(state: S) -> Self {
        Self {
            prefix: Vec::new(),
            log_prob: 0.0,
            state,
            emit_frames: Vec::new(),
        }
    }
}

/// Prediction-network state together with its joint contribution.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionState {
    pub lstm: LstmState,
    term: Vec<f64>,
}

/// Scores a model on one utterance. The encoder is run once up front; the
/// prediction network is stepped per emitted token.
pub struct ModelScorer<'a> {
    model: &'a RnntModel,
    encoder_terms: Vec<Vec<f64>>,
}

impl<'a> ModelScorer<'a> {
    /// `frames` are stacked encoder inputs, `T×D`.
    pub fn new(model: &'a RnntModel, frames: &Tensor) -> Result<Self> {
        let enc = model.encode(frames)?;
        let encoder_terms = (0..enc.rows()).map(|t| model.joint_encoder_term(enc.row(t))).collect();
        Ok(Self { model, encoder_terms })
    }

    /// Stacks raw features first.
    pub fn from_features(model: &'a RnntModel, features: &Tensor) -> Result<Self> {
        Self::new(model, &model.frames(features)?)
    }

    fn state_from(&self, lstm: LstmState) -> PredictionState {
        let term = self.model.joint_prediction_term(&lstm.output);
        PredictionState { lstm, term }
    }
}

impl Transducer for ModelScorer<'_> {
    type State = PredictionState;

    fn num_frames(&self) -> usize {
        self.encoder_terms.len()
    }

    fn num_classes(&self) -> usize {
        self.model.num_classes()
    }

    fn blank(&self) -> usize {
        self.model.blank()
    }

    fn initial_state(&self) -> PredictionState {
        self.state_from(self.model.prediction_start())
    }

    fn log_probs(&self, frame: usize, state: &PredictionState) -> Vec<f64> {
        let z: Vec<f64> = self.encoder_terms[frame]
            .iter()
            .zip(&state.term)
            .map(|(e, p)| e + p)
            .collect();
        let mut out = vec![0.0; z.len()];
        log_softmax_into(&z, &mut out);
        out
    }

    fn advance(&self, state: &PredictionState, token: usize) -> Result<PredictionState> {
        Ok(self.state_from(self.model.prediction_step(&state.lstm, token)?))
    }
}

/// Reads a label tensor as decoder scores: a masked cell puts all mass on
/// its target, an unmasked cell puts all mass on blank. The state is the
/// number of tokens emitted so far.
pub struct LabelOracle<'a> {
    label: &'a LabelTensor,
    blank: usize,
}

impl<'a> LabelOracle<'a> {
    pub fn new(label: &'a LabelTensor, blank: usize) -> Result<Self> {
        if blank >= label.classes() {
            return Err(Error::TokenOutOfRange {
                id: blank,
                limit: label.classes(),
            });
        }
        Ok(Self { label, blank })
    }
}

impl Transducer for LabelOracle<'_> {
    type State = usize;

    fn num_frames(&self) -> usize {
        self.label.frames()
    }

    fn num_classes(&self) -> usize {
        self.label.classes()
    }

    fn blank(&self) -> usize {
        self.blank
    }

    fn initial_state(&self) -> usize {
        0
    }

    fn log_probs(&self, frame: usize, &u: &usize) -> Vec<f64> {
        let target = self.label.get(frame, u).unwrap_or(self.blank);
        let mut out = vec![f64::NEG_INFINITY; self.label.classes()];
        out[target] = 0.0;
        out
    }

    fn advance(&self, &u: &usize, _token: usize) -> Result<usize> {
        if u + 1 >= self.label.rows() {
            return Err(Error::invalid("label oracle emitted past the last row"));
        }
        Ok(u + 1)
    }
}

/// One line of n-best output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NbestRecord {
    pub utt_id: String,
    pub rank: usize,
    pub hyp_tokens: Vec<usize>,
    pub log_prob: f64,
    pub emit_frames: Vec<usize>,
}

impl NbestRecord {
    pub fn from_result<S>(utt_id: &str, result: &BeamResult<S>) -> Vec<Self> {
        result
            .nbest
            .iter()
            .enumerate()
            .map(|(rank, h)| NbestRecord {
                utt_id: utt_id.to_string(),
                rank,
                hyp_tokens: h.prefix.clone(),
                log_prob: h.log_prob,
                emit_frames: h.emit_frames.clone(),
            })
            .collect()
    }
}

pub fn write_nbest(path: impl AsRef<Path>, records: &[NbestRecord]) -> Result<()> {
    let mut out = std::io::BufWriter::new(fs::File::create(path)?);
    for r in records {
        out.write_all(serde_json::to_string(r)?.as_bytes())?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub(crate) fn check_max_symbols(max_symbols: usize) -> Result<()> {
    if max_symbols == 0 {
        return Err(Error::invalid("max_symbols_per_frame must be at least 1"));
    }
    Ok(())
}

/// Stand-ins for a trained model, used by tests and examples.
pub mod test_support {
    use super::*;

    /// A transducer with a fixed random score table indexed by frame and
    /// prefix length; advancing only counts. Cheap stand-in for a model.
    pub struct TableTransducer {
        pub table: Vec<Vec<Vec<f64>>>,
        pub blank: usize,
    }

    impl TableTransducer {
        pub fn random(rng: &mut impl rand::Rng, frames: usize, depth: usize, classes: usize, sharp: f64) -> Self {
            let table = (0..frames)
                .map(|_| {
                    (0..depth)
                        .map(|_| {
                            let z: Vec<f64> = (0..classes).map(|_| sharp * rng.random_range(-1.0..1.0)).collect();
                            let mut out = vec![0.0; classes];
                            log_softmax_into(&z, &mut out);
                            out
                        })
                        .collect()
                })
                .collect();
            Self {
                table,
                blank: classes - 1,
            }
        }
    }

    impl Transducer for TableTransducer {
        type State = usize;

        fn num_frames(&self) -> usize {
            self.table.len()
        }

        fn num_classes(&self) -> usize {
            self.table[0][0].len()
        }

        fn blank(&self) -> usize {
            self.blank
        }

        fn initial_state(&self) -> usize {
            0
        }

        fn log_probs(&self, frame: usize, &u: &usize) -> Vec<f64> {
            let rows = &self.table[frame];
            rows[u.min(rows.len() - 1)].clone()
        }

        fn advance(&self, &u: &usize, _token: usize) -> Result<usize> {
            Ok(u + 1)
        }
    }
}
