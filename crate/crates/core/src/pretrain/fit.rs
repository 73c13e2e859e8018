//! The minibatch loop shared by every schedule, pre-training and main
//! training alike.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{Adam, AdamConfig, ParamSet, Tape, Var};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    /// Seeds the per-epoch shuffle of the training items.
    pub shuffle_seed: u64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            epochs: 10,
            batch_size: 8,
            adam: AdamConfig::default(),
            shuffle_seed: 0,
        }
    }
}

/// One item's contribution: a scalar node on the tape, its value, and how
/// many normalization units (target tokens, or 1 for per-item means) it
/// covers.
pub struct ItemLoss {
    pub root: Var,
    pub value: f64,
    pub units: f64,
}

/// Runs `cfg.epochs` passes over `items`, calling `loss` to build each item's
/// graph. Within a minibatch the summed loss is divided by the summed units
/// before the optimizer step. `on_epoch` sees the epoch index (from 1), the
/// epoch's normalized training loss and the current parameters.
///
/// Returns the per-epoch losses.
pub fn fit<I, F, E>(params: &mut ParamSet, items: &[I], cfg: &FitConfig, mut loss: F, mut on_epoch: E) -> Result<Vec<f64>>
where
    F: FnMut(&mut Tape, &ParamSet, &I) -> Result<ItemLoss>,
    E: FnMut(usize, f64, &ParamSet) -> Result<()>,
{
    if cfg.batch_size == 0 {
        return Err(Error::invalid("batch_size must be positive"));
    }
    if items.is_empty() && cfg.epochs > 0 {
        return Err(Error::Empty("training items"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.shuffle_seed);
    let mut adam = Adam::new(cfg.adam);
    let mut order: Vec<usize> = (0..items.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    params.zero_grad();
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let (mut epoch_loss, mut epoch_units) = (0.0, 0.0);
        for batch in order.chunks(cfg.batch_size) {
            let mut units = 0.0;
            for &i in batch {
                let mut tape = Tape::new();
                let item = loss(&mut tape, params, &items[i])?;
                if !item.value.is_finite() {
                    return Err(Error::NonFinite("training loss"));
                }
                let grads = tape.backward(item.root)?;
                tape.accumulate_param_grads(&grads, params)?;
                epoch_loss += item.value;
                units += item.units;
            }
            if units > 0.0 {
                for t in params.tensors_mut() {
                    if t.grad().is_some() {
                        t.grad_mut().iter_mut().for_each(|g| *g /= units);
                    }
                }
                adam.step(params);
            }
            epoch_units += units;
        }
        let mean = if epoch_units > 0.0 { epoch_loss / epoch_units } else { 0.0 };
        history.push(mean);
        on_epoch(epoch, mean, params)?;
    }
    params.tensors_mut().iter_mut().for_each(|t| t.clear_grad());
    Ok(history)
}
