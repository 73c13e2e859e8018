use rand::Rng;

use crate::error::{Error, Result};
use crate::numerics::ops::{sigmoid, vec_mat};
use crate::numerics::{xavier_uniform, ParamId, ParamSet, Tape, Tensor, Var};

const LN_EPS: f64 = 1e-5;

/// Parameter handles of one LSTM layer. Gate blocks are ordered input,
/// forget, cell, output along the `4H` axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LstmLayer {
    pub w_ih: ParamId,
    pub w_hh: ParamId,
    pub bias: ParamId,
    pub norm: Option<(ParamId, ParamId)>,
    pub input: usize,
    pub hidden: usize,
}

/// A stack of unidirectional LSTM layers.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LstmStack {
    pub layers: Vec<LstmLayer>,
    pub hidden_size: usize,
}

impl LstmStack {
    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub(crate) fn register<R: Rng>(
        params: &mut ParamSet,
        prefix: &str,
        input: usize,
        hidden: usize,
        layers: usize,
        layer_norm: bool,
        rng: &mut R,
    ) -> Result<Self> {
        let mut out = Vec::with_capacity(layers);
        let mut width = input;
        for l in 0..layers {
            let w_ih = params.add(format!("{prefix}.{l}.w_ih"), xavier_uniform(rng, width, 4 * hidden))?;
            let w_hh = params.add(format!("{prefix}.{l}.w_hh"), xavier_uniform(rng, hidden, 4 * hidden))?;
            let bias = params.add(format!("{prefix}.{l}.bias"), Tensor::zeros(&[4 * hidden]))?;
            let norm = if layer_norm {
                let gain = Tensor::new(vec![hidden], vec![1.0; hidden])?;
                Some((
                    params.add(format!("{prefix}.{l}.ln_gain"), gain)?,
                    params.add(format!("{prefix}.{l}.ln_bias"), Tensor::zeros(&[hidden]))?,
                ))
            } else {
                None
            };
            out.push(LstmLayer {
                w_ih,
                w_hh,
                bias,
                norm,
                input: width,
                hidden,
            });
            width = hidden;
        }
        Ok(Self {
            layers: out,
            hidden_size: hidden,
        })
    }

    pub(crate) fn resolve(
        params: &ParamSet,
        prefix: &str,
        input: usize,
        hidden: usize,
        layers: usize,
        layer_norm: bool,
    ) -> Result<Self> {
        let mut out = Vec::with_capacity(layers);
        let mut width = input;
        for l in 0..layers {
            let w_ih = lookup(params, &format!("{prefix}.{l}.w_ih"), &[width, 4 * hidden])?;
            let w_hh = lookup(params, &format!("{prefix}.{l}.w_hh"), &[hidden, 4 * hidden])?;
            let bias = lookup(params, &format!("{prefix}.{l}.bias"), &[4 * hidden])?;
            let norm = if layer_norm {
                Some((
                    lookup(params, &format!("{prefix}.{l}.ln_gain"), &[hidden])?,
                    lookup(params, &format!("{prefix}.{l}.ln_bias"), &[hidden])?,
                ))
            } else {
                None
            };
            out.push(LstmLayer {
                w_ih,
                w_hh,
                bias,
                norm,
                input: width,
                hidden,
            });
            width = hidden;
        }
        Ok(Self {
            layers: out,
            hidden_size: hidden,
        })
    }

    /// Runs the whole stack over a `T×input` sequence, layer by layer.
    pub fn forward_on(&self, tape: &mut Tape, params: &ParamSet, x: Var) -> Result<Var> {
        let mut h = x;
        for layer in &self.layers {
            h = layer_on(tape, params, layer, h)?;
        }
        Ok(h)
    }

    /// All-zero recurrent state, before any input.
    pub fn zero_state(&self) -> LstmState {
        LstmState {
            h: self.layers.iter().map(|l| vec![0.0; l.hidden]).collect(),
            c: self.layers.iter().map(|l| vec![0.0; l.hidden]).collect(),
            output: vec![0.0; self.hidden_size],
        }
    }

    /// One untaped time step. Matches [`LstmStack::forward_on`] bit for bit.
    pub fn step(&self, params: &ParamSet, state: &LstmState, x: &[f64]) -> LstmState {
        let mut next = LstmState {
            h: Vec::with_capacity(self.layers.len()),
            c: Vec::with_capacity(self.layers.len()),
            output: Vec::new(),
        };
        let mut input = x.to_vec();
        for (l, layer) in self.layers.iter().enumerate() {
            let hd = layer.hidden;
            let mut gates = vec_mat(&input, params.get(layer.w_ih));
            for (g, b) in gates.iter_mut().zip(params.get(layer.bias).data()) {
                *g += b;
            }
            let rec = vec_mat(&state.h[l], params.get(layer.w_hh));
            for (g, r) in gates.iter_mut().zip(&rec) {
                *g += r;
            }
            let mut c = vec![0.0; hd];
            let mut h = vec![0.0; hd];
            for j in 0..hd {
                let i = sigmoid(gates[j]);
                let f = sigmoid(gates[hd + j]);
                let g = gates[2 * hd + j].tanh();
                let o = sigmoid(gates[3 * hd + j]);
                c[j] = f * state.c[l][j] + i * g;
                h[j] = o * c[j].tanh();
            }
            input = match layer.norm {
                Some((gain, bias)) => normalize(&h, params.get(gain).data(), params.get(bias).data()),
                None => h.clone(),
            };
            next.h.push(h);
            next.c.push(c);
        }
        next.output = input;
        next
    }
}

/// Recurrent state of a stack plus the top-layer output of the last step.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmState {
    pub h: Vec<Vec<f64>>,
    pub c: Vec<Vec<f64>>,
    pub output: Vec<f64>,
}

fn lookup(params: &ParamSet, name: &str, shape: &[usize]) -> Result<ParamId> {
    let id = params
        .id_of(name)
        .ok_or_else(|| Error::Checkpoint(format!("missing parameter {name:?}")))?;
    if params.get(id).shape() != shape {
        return Err(Error::Checkpoint(format!(
            "parameter {name:?} has shape {:?}, expected {shape:?}",
            params.get(id).shape()
        )));
    }
    Ok(id)
}

pub(crate) fn lookup_param(params: &ParamSet, name: &str, shape: &[usize]) -> Result<ParamId> {
    lookup(params, name, shape)
}

fn normalize(row: &[f64], gain: &[f64], bias: &[f64]) -> Vec<f64> {
    let n = row.len() as f64;
    let mean = row.iter().sum::<f64>() / n;
    let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let s = 1.0 / (var + LN_EPS).sqrt();
    row.iter()
        .zip(gain)
        .zip(bias)
        .map(|((v, g), b)| (v - mean) * s * g + b)
        .collect()
}

fn layer_on(tape: &mut Tape, params: &ParamSet, layer: &LstmLayer, x: Var) -> Result<Var> {
    let steps = tape.shape(x)[0];
    let hd = layer.hidden;
    let w_ih = tape.param(params, layer.w_ih);
    let w_hh = tape.param(params, layer.w_hh);
    let bias = tape.param(params, layer.bias);
    let xw = tape.matmul(x, w_ih)?;
    let xw = tape.add_row(xw, bias)?;

    let mut state: Option<(Var, Var)> = None;
    let mut outputs = Vec::with_capacity(steps);
    for t in 0..steps {
        let mut gates = tape.row(xw, t)?;
        if let Some((h, _)) = state {
            let rec = tape.matmul(h, w_hh)?;
            gates = tape.add(gates, rec)?;
        }
        let i = tape.cols(gates, 0, hd)?;
        let i = tape.sigmoid(i);
        let f = tape.cols(gates, hd, hd)?;
        let f = tape.sigmoid(f);
        let g = tape.cols(gates, 2 * hd, hd)?;
        let g = tape.tanh(g);
        let o = tape.cols(gates, 3 * hd, hd)?;
        let o = tape.sigmoid(o);
        let ig = tape.mul(i, g)?;
        let c = match state {
            Some((_, c_prev)) => {
                let fc = tape.mul(f, c_prev)?;
                tape.add(fc, ig)?
            }
            None => ig,
        };
        let tc = tape.tanh(c);
        let h = tape.mul(o, tc)?;
        outputs.push(h);
        state = Some((h, c));
    }
    let out = tape.concat_rows(&outputs)?;
    match layer.norm {
        Some((gain, bias)) => {
            let g = tape.param(params, gain);
            let b = tape.param(params, bias);
            tape.layer_norm(out, g, b)
        }
        None => Ok(out),
    }
}
