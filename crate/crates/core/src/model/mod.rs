//! The transducer: LSTM encoder, LSTM prediction network and a joint
//! network made of two linear layers.
//!
//! The joint network projects both streams into a shared space, sums them
//! and applies an output affine map:
//!
//! ```text
//! z[t,u] = W_out · (W_enc · h_enc[t] + W_pred · h_pred[u] + b) + b_out
//! ```
//!
//! Because there is no activation, `z[t,u]` splits into an encoder term and a
//! prediction term, which is how both the tape and the decoder evaluate it.

mod checkpoint;
mod config;
mod frames;
mod lstm;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_FORMAT, CHECKPOINT_VERSION};
pub use config::ModelConfig;
pub use frames::stack_frames;
pub use lstm::{LstmLayer, LstmStack, LstmState};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::numerics::ops::vec_mat;
use crate::numerics::{xavier_uniform, ParamId, ParamSet, Tape, Tensor, Var};
use lstm::lookup_param;

/// Handles to the joint network parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct JointParams {
    pub w_enc: ParamId,
    pub w_pred: ParamId,
    pub bias: ParamId,
    pub w_out: ParamId,
    pub b_out: ParamId,
}

/// Where every model parameter lives inside a [`ParamSet`].
///
/// The layout only stores handles, so it can drive a parameter set that has
/// extra tensors appended (pre-training heads) after the model's own.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelLayout {
    pub config: ModelConfig,
    pub encoder: LstmStack,
    pub embedding: ParamId,
    pub prediction: LstmStack,
    pub joint: JointParams,
}

impl ModelLayout {
    fn register(config: &ModelConfig, params: &mut ParamSet, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ln = config.use_layer_norm;
        let encoder = LstmStack::register(
            params,
            "encoder",
            config.frame_dim(),
            config.encoder_hidden,
            config.encoder_layers,
            ln,
            &mut rng,
        )?;
        let embedding = params.add(
            "prediction.embedding",
            xavier_uniform(&mut rng, config.vocab_size, config.prediction_hidden),
        )?;
        let prediction = LstmStack::register(
            params,
            "prediction",
            config.prediction_hidden,
            config.prediction_hidden,
            config.prediction_layers,
            ln,
            &mut rng,
        )?;
        let j = config.projection;
        let v = config.num_classes();
        let joint = JointParams {
            w_enc: params.add("joint.w_enc", xavier_uniform(&mut rng, config.encoder_hidden, j))?,
            w_pred: params.add("joint.w_pred", xavier_uniform(&mut rng, config.prediction_hidden, j))?,
            bias: params.add("joint.bias", Tensor::zeros(&[j]))?,
            w_out: params.add("joint.w_out", xavier_uniform(&mut rng, j, v))?,
            b_out: params.add("joint.b_out", Tensor::zeros(&[v]))?,
        };
        Ok(Self {
            config: config.clone(),
            encoder,
            embedding,
            prediction,
            joint,
        })
    }

    fn resolve(config: &ModelConfig, params: &ParamSet) -> Result<Self> {
        config.validate()?;
        let ln = config.use_layer_norm;
        let encoder = LstmStack::resolve(
            params,
            "encoder",
            config.frame_dim(),
            config.encoder_hidden,
            config.encoder_layers,
            ln,
        )?;
        let embedding = lookup_param(
            params,
            "prediction.embedding",
            &[config.vocab_size, config.prediction_hidden],
        )?;
        let prediction = LstmStack::resolve(
            params,
            "prediction",
            config.prediction_hidden,
            config.prediction_hidden,
            config.prediction_layers,
            ln,
        )?;
        let j = config.projection;
        let v = config.num_classes();
        let joint = JointParams {
            w_enc: lookup_param(params, "joint.w_enc", &[config.encoder_hidden, j])?,
            w_pred: lookup_param(params, "joint.w_pred", &[config.prediction_hidden, j])?,
            bias: lookup_param(params, "joint.bias", &[j])?,
            w_out: lookup_param(params, "joint.w_out", &[j, v])?,
            b_out: lookup_param(params, "joint.b_out", &[v])?,
        };
        Ok(Self {
            config: config.clone(),
            encoder,
            embedding,
            prediction,
            joint,
        })
    }

    /// Encoder over stacked frames `x: T×D`, giving `T×H_enc`.
    pub fn encode_on(&self, tape: &mut Tape, params: &ParamSet, x: Var) -> Result<Var> {
        let shape = tape.shape(x);
        if shape.len() != 2 || shape[1] != self.config.frame_dim() {
            return Err(Error::ShapeMismatch {
                op: "encode",
                left: shape.to_vec(),
                right: vec![self.config.frame_dim()],
            });
        }
        self.encoder.forward_on(tape, params, x)
    }

    /// Prediction network over the start symbol followed by `prefix`,
    /// giving `(U+1)×H_pred`. Row 0 is the start-of-sequence context.
    pub fn predict_on(&self, tape: &mut Tape, params: &ParamSet, prefix: &[usize]) -> Result<Var> {
        let rows = self.prediction_inputs(prefix)?;
        let table = tape.param(params, self.embedding);
        let x = tape.gather(table, &rows)?;
        self.prediction.forward_on(tape, params, x)
    }

    fn prediction_inputs(&self, prefix: &[usize]) -> Result<Vec<Option<usize>>> {
        let limit = self.config.vocab_size;
        if let Some(&bad) = prefix.iter().find(|&&y| y >= limit) {
            return Err(Error::TokenOutOfRange { id: bad, limit });
        }
        Ok(std::iter::once(None).chain(prefix.iter().map(|&y| Some(y))).collect())
    }

    /// Joint lattice `T×(U+1)×(K+1)` of unnormalized scores.
    pub fn joint_on(&self, tape: &mut Tape, params: &ParamSet, enc: Var, pred: Var) -> Result<Var> {
        let c = &self.config;
        if tape.shape(enc).len() != 2 || tape.shape(enc)[1] != c.encoder_hidden {
            return Err(Error::ShapeMismatch {
                op: "joint (encoder side)",
                left: tape.shape(enc).to_vec(),
                right: vec![c.encoder_hidden],
            });
        }
        if tape.shape(pred).len() != 2 || tape.shape(pred)[1] != c.prediction_hidden {
            return Err(Error::ShapeMismatch {
                op: "joint (prediction side)",
                left: tape.shape(pred).to_vec(),
                right: vec![c.prediction_hidden],
            });
        }
        let j = &self.joint;
        let w_enc = tape.param(params, j.w_enc);
        let w_pred = tape.param(params, j.w_pred);
        let bias = tape.param(params, j.bias);
        let w_out = tape.param(params, j.w_out);
        let b_out = tape.param(params, j.b_out);

        let e = tape.matmul(enc, w_enc)?;
        let e = tape.matmul(e, w_out)?;
        let p = tape.matmul(pred, w_pred)?;
        let p = tape.add_row(p, bias)?;
        let p = tape.matmul(p, w_out)?;
        let p = tape.add_row(p, b_out)?;
        tape.outer_sum(e, p)
    }

    /// Full forward pass to joint scores.
    pub fn logits_on(
        &self,
        tape: &mut Tape,
        params: &ParamSet,
        frames: &Tensor,
        targets: &[usize],
    ) -> Result<Var> {
        let x = tape.input(frames);
        let enc = self.encode_on(tape, params, x)?;
        let pred = self.predict_on(tape, params, targets)?;
        self.joint_on(tape, params, enc, pred)
    }
}

/// A transducer together with its parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct RnntModel {
    layout: ModelLayout,
    params: ParamSet,
}

impl RnntModel {
    /// Xavier-initialized model; identical seeds give identical weights.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        let mut params = ParamSet::new();
        let layout = ModelLayout::register(&config, &mut params, seed)?;
        Ok(Self { layout, params })
    }

    /// Wraps an existing parameter set, validating names and shapes.
    pub fn from_params(config: ModelConfig, params: ParamSet) -> Result<Self> {
        let layout = ModelLayout::resolve(&config, &params)?;
        if params.len() != layout_len(&config) {
            return Err(Error::Checkpoint(format!(
                "expected {} parameters, found {}",
                layout_len(&config),
                params.len()
            )));
        }
        Ok(Self { layout, params })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.layout.config
    }

    pub fn layout(&self) -> &ModelLayout {
        &self.layout
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    pub fn into_params(self) -> ParamSet {
        self.params
    }

    pub fn blank(&self) -> usize {
        self.config().blank()
    }

    pub fn num_classes(&self) -> usize {
        self.config().num_classes()
    }

    /// Sets every parameter to zero.
    pub fn zero_weights(&mut self) {
        for t in self.params.tensors_mut() {
            t.data_mut().iter_mut().for_each(|v| *v = 0.0);
        }
    }

    /// Stacks raw feature vectors into encoder frames.
    pub fn frames(&self, raw: &Tensor) -> Result<Tensor> {
        if raw.ndim() != 2 || raw.cols() != self.config().input_dim {
            return Err(Error::ShapeMismatch {
                op: "frames",
                left: raw.shape().to_vec(),
                right: vec![self.config().input_dim],
            });
        }
        stack_frames(raw, self.config().stack_factor, self.config().stride)
    }

    pub fn encode(&self, x: &Tensor) -> Result<Tensor> {
        let mut tape = Tape::new();
        let v = tape.input(x);
        let out = self.layout.encode_on(&mut tape, &self.params, v)?;
        Ok(tape.tensor(out))
    }

    pub fn predict(&self, prefix: &[usize]) -> Result<Tensor> {
        let mut tape = Tape::new();
        let out = self.layout.predict_on(&mut tape, &self.params, prefix)?;
        Ok(tape.tensor(out))
    }

    pub fn joint(&self, h_enc: &Tensor, h_pred: &Tensor) -> Result<Tensor> {
        let mut tape = Tape::new();
        let e = tape.input(h_enc);
        let p = tape.input(h_pred);
        let out = self.layout.joint_on(&mut tape, &self.params, e, p)?;
        Ok(tape.tensor(out))
    }

    /// Joint scores for stacked frames and a target prefix.
    pub fn logits(&self, frames: &Tensor, targets: &[usize]) -> Result<Tensor> {
        let mut tape = Tape::new();
        let out = self.layout.logits_on(&mut tape, &self.params, frames, targets)?;
        Ok(tape.tensor(out))
    }

    /// Encoder-side joint term `W_out · W_enc · h` for one encoder row.
    pub fn joint_encoder_term(&self, h_enc: &[f64]) -> Vec<f64> {
        let j = &self.layout.joint;
        let e = vec_mat(h_enc, self.params.get(j.w_enc));
        vec_mat(&e, self.params.get(j.w_out))
    }

    /// Prediction-side joint term `W_out · (W_pred · h + b) + b_out`.
    pub fn joint_prediction_term(&self, h_pred: &[f64]) -> Vec<f64> {
        let j = &self.layout.joint;
        let mut p = vec_mat(h_pred, self.params.get(j.w_pred));
        for (v, b) in p.iter_mut().zip(self.params.get(j.bias).data()) {
            *v += b;
        }
        let mut out = vec_mat(&p, self.params.get(j.w_out));
        for (v, b) in out.iter_mut().zip(self.params.get(j.b_out).data()) {
            *v += b;
        }
        out
    }

    /// Prediction-network state after consuming only the start symbol.
    pub fn prediction_start(&self) -> LstmState {
        let zero_input = vec![0.0; self.config().prediction_hidden];
        self.layout
            .prediction
            .step(&self.params, &self.layout.prediction.zero_state(), &zero_input)
    }

    /// Advances the prediction network by one emitted token.
    pub fn prediction_step(&self, state: &LstmState, token: usize) -> Result<LstmState> {
        let limit = self.config().vocab_size;
        if token >= limit {
            return Err(Error::TokenOutOfRange { id: token, limit });
        }
        let table = self.params.get(self.layout.embedding);
        Ok(self.layout.prediction.step(&self.params, state, table.row(token)))
    }
}

fn layout_len(config: &ModelConfig) -> usize {
    let per_layer = if config.use_layer_norm { 5 } else { 3 };
    per_layer * (config.encoder_layers + config.prediction_layers) + 1 + 5
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::log_softmax;
    use rand::{Rng, SeedableRng};

    fn tiny() -> ModelConfig {
        ModelConfig {
            input_dim: 3,
            stack_factor: 2,
            stride: 1,
            encoder_layers: 2,
            encoder_hidden: 5,
            prediction_layers: 1,
            prediction_hidden: 4,
            projection: 3,
            vocab_size: 4,
            use_layer_norm: false,
        }
    }

    fn random_frames(t: usize, d: usize, seed: u64) -> Tensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Tensor::new(vec![t, d], (0..t * d).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn rejects_empty_sequence_and_bad_width() {
        let m = RnntModel::new(tiny(), 1).unwrap();
        assert!(Tensor::new(vec![0, 6], vec![]).is_err());
        assert!(m.encode(&random_frames(3, 5, 0)).is_err());
    }

    #[test]
    fn zero_weights_give_zero_encoder_output() {
        let mut m = RnntModel::new(tiny(), 1).unwrap();
        m.zero_weights();
        let out = m.encode(&random_frames(4, 6, 2)).unwrap();
        assert_eq!(out.shape(), &[4, 5]);
        assert!(out.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn encoder_is_causal() {
        for ln in [false, true] {
            let cfg = ModelConfig {
                use_layer_norm: ln,
                ..tiny()
            };
            let m = RnntModel::new(cfg, 3).unwrap();
            let x = random_frames(6, 6, 4);
            let base = m.encode(&x).unwrap();
            for t in 0..6 {
                let mut y = x.clone();
                y.row_mut(t).iter_mut().for_each(|v| *v += 0.7);
                let out = m.encode(&y).unwrap();
                for s in 0..t {
                    assert_eq!(out.row(s), base.row(s), "frame {s} changed after perturbing {t}");
                }
                assert_ne!(out.row(t), base.row(t));
            }
        }
    }

    #[test]
    fn prediction_rows_and_causality() {
        let m = RnntModel::new(tiny(), 5).unwrap();
        assert_eq!(m.predict(&[]).unwrap().shape(), &[1, 4]);
        let one = m.predict(&[2]).unwrap();
        assert_ne!(one.row(0), one.row(1));
        let a = m.predict(&[1, 2, 3]).unwrap();
        let b = m.predict(&[1, 0, 3]).unwrap();
        assert_eq!(a.row(0), b.row(0));
        assert_eq!(a.row(1), b.row(1));
        assert_ne!(a.row(2), b.row(2));
        assert!(matches!(m.predict(&[4]), Err(Error::TokenOutOfRange { id: 4, limit: 4 })));
    }

    #[test]
    fn stepwise_prediction_matches_taped_rows() {
        for ln in [false, true] {
            let cfg = ModelConfig {
                use_layer_norm: ln,
                prediction_layers: 2,
                ..tiny()
            };
            let m = RnntModel::new(cfg, 6).unwrap();
            let prefix = [3, 1, 1, 0];
            let rows = m.predict(&prefix).unwrap();
            let mut state = m.prediction_start();
            assert_eq!(state.output.as_slice(), rows.row(0));
            for (u, &y) in prefix.iter().enumerate() {
                state = m.prediction_step(&state, y).unwrap();
                assert_eq!(state.output.as_slice(), rows.row(u + 1));
            }
        }
    }

    #[test]
    fn minimal_joint_shape_and_uniform_posterior() {
        let mut m = RnntModel::new(tiny(), 7).unwrap();
        let enc = m.encode(&random_frames(1, 6, 8)).unwrap();
        let pred = m.predict(&[]).unwrap();
        assert_eq!(m.joint(&enc, &pred).unwrap().shape(), &[1, 1, 5]);

        m.zero_weights();
        let z = m.logits(&random_frames(3, 6, 9), &[1, 2]).unwrap();
        let lp = log_softmax(&z).unwrap();
        let expected = -(5f64).ln();
        assert!(lp.data().iter().all(|v| (v - expected).abs() < 1e-15));
    }

    #[test]
    fn joint_matches_pointwise_recomputation() {
        let m = RnntModel::new(tiny(), 10).unwrap();
        let enc = m.encode(&random_frames(4, 6, 11)).unwrap();
        let pred = m.predict(&[0, 3, 2]).unwrap();
        let z = m.joint(&enc, &pred).unwrap();
        let p = m.params();
        let j = m.layout().joint;
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..10 {
            let t = rng.random_range(0..4);
            let u = rng.random_range(0..4);
            // Direct evaluation of W_out·(W_enc·h_e + W_pred·h_p + b) + b_out.
            let w_enc = p.get(j.w_enc);
            let w_pred = p.get(j.w_pred);
            let mut hidden = p.get(j.bias).data().to_vec();
            for (k, h) in hidden.iter_mut().enumerate() {
                for i in 0..5 {
                    *h += enc.at(&[t, i]) * w_enc.at(&[i, k]);
                }
                for i in 0..4 {
                    *h += pred.at(&[u, i]) * w_pred.at(&[i, k]);
                }
            }
            let w_out = p.get(j.w_out);
            for c in 0..5 {
                let mut v = p.get(j.b_out).data()[c];
                for (k, h) in hidden.iter().enumerate() {
                    v += h * w_out.at(&[k, c]);
                }
                assert!((v - z.at(&[t, u, c])).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn decoder_terms_match_joint() {
        let m = RnntModel::new(tiny(), 13).unwrap();
        let enc = m.encode(&random_frames(3, 6, 14)).unwrap();
        let pred = m.predict(&[2, 1]).unwrap();
        let z = m.joint(&enc, &pred).unwrap();
        for t in 0..3 {
            let e = m.joint_encoder_term(enc.row(t));
            for u in 0..3 {
                let p = m.joint_prediction_term(pred.row(u));
                for c in 0..5 {
                    assert!((e[c] + p[c] - z.at(&[t, u, c])).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn from_params_validates_layout() {
        let m = RnntModel::new(tiny(), 1).unwrap();
        let again = RnntModel::from_params(tiny(), m.params().clone()).unwrap();
        assert_eq!(again, m);
        let other = ModelConfig {
            encoder_hidden: 6,
            ..tiny()
        };
        assert!(RnntModel::from_params(other, m.params().clone()).is_err());
    }
}
