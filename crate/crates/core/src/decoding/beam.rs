use std::cmp::Ordering;
use std::collections::HashMap;

use super::{check_max_symbols, Hypothesis, Transducer};
use crate::error::{Error, Result};
use crate::numerics::ops::log_add;

#[derive(Debug, Clone, PartialEq)]
pub struct BeamResult<S> {
    pub best: Hypothesis<S>,
    /// Surviving hypotheses, most probable first.
    pub nbest: Vec<Hypothesis<S>>,
}

/// Orders by descending log-probability, then ascending prefix.
fn rank(a_lp: f64, a_prefix: &[usize], b_lp: f64, b_prefix: &[usize]) -> Ordering {
    b_lp.total_cmp(&a_lp).then_with(|| a_prefix.cmp(b_prefix))
}

/// Label-history states keyed by prefix, shared between searches over the
/// same utterance.
struct StateCache<S> {
    states: HashMap<Vec<usize>, S>,
}

impl<S: Clone> StateCache<S> {
    fn new() -> Self {
        Self {
            states: HashMap::new(),
        }
    }

    fn advance<M: Transducer<State = S>>(&mut self, model: &M, parent: &S, prefix: &[usize]) -> Result<S> {
        if let Some(s) = self.states.get(prefix) {
            return Ok(s.clone());
        }
        let token = *prefix.last().expect("non-empty prefix");
        let s = model.advance(parent, token)?;
        self.states.insert(prefix.to_vec(), s.clone());
        Ok(s)
    }
}

/// Adds `hyp` to `pool`, merging with an entry of the same prefix by
/// summing probabilities. The merged entry keeps the emission frames of the
/// more probable contribution.
fn merge_into<S>(pool: &mut Vec<Hypothesis<S>>, index: &mut HashMap<Vec<usize>, usize>, hyp: Hypothesis<S>) {
    match index.get(&hyp.prefix) {
        Some(&i) => {
            let existing = &mut pool[i];
            if hyp.log_prob > existing.log_prob {
                existing.emit_frames = hyp.emit_frames;
            }
            existing.log_prob = log_add(existing.log_prob, hyp.log_prob);
        }
        None => {
            index.insert(hyp.prefix.clone(), pool.len());
            pool.push(hyp);
        }
    }
}

fn search<M: Transducer>(
    model: &M,
    width: usize,
    max_symbols: usize,
    cache: &mut StateCache<M::State>,
) -> Result<Vec<Hypothesis<M::State>>> {
    let blank = model.blank();
    let mut hyps = vec![Hypothesis::start(model.initial_state())];
    for t in 0..model.num_frames() {
        // Hypotheses that have taken blank on this frame.
        let mut done: Vec<Hypothesis<M::State>> = Vec::new();
        let mut done_index: HashMap<Vec<usize>, usize> = HashMap::new();
        let mut active = std::mem::take(&mut hyps);
        for round in 0..=max_symbols {
            // (log-prob, parent, token, prefix)
            let mut expansions: Vec<(f64, usize, usize, Vec<usize>)> = Vec::new();
            for (i, h) in active.iter().enumerate() {
                let lp = model.log_probs(t, &h.state);
                merge_into(
                    &mut done,
                    &mut done_index,
                    Hypothesis {
                        prefix: h.prefix.clone(),
                        log_prob: h.log_prob + lp[blank],
                        state: h.state.clone(),
                        emit_frames: h.emit_frames.clone(),
                    },
                );
                if round < max_symbols {
                    for (k, &v) in lp.iter().enumerate() {
                        if k != blank && v.is_finite() {
                            let mut prefix = h.prefix.clone();
                            prefix.push(k);
                            expansions.push((h.log_prob + v, i, k, prefix));
                        }
                    }
                }
            }

            // Keep the best `width` of finished and still-expanding entries.
            enum Entry {
                Done(usize),
                Expansion(usize),
            }
            let mut entries: Vec<(f64, &[usize], Entry)> = done
                .iter()
                .enumerate()
                .map(|(i, h)| (h.log_prob, h.prefix.as_slice(), Entry::Done(i)))
                .chain(
                    expansions
                        .iter()
                        .enumerate()
                        .map(|(i, e)| (e.0, e.3.as_slice(), Entry::Expansion(i))),
                )
                .collect();
            entries.sort_by(|a, b| rank(a.0, a.1, b.0, b.1));
            entries.truncate(width);
            let mut keep_done = vec![false; done.len()];
            let mut keep_exp = Vec::new();
            for (_, _, e) in &entries {
                match *e {
                    Entry::Done(i) => keep_done[i] = true,
                    Entry::Expansion(i) => keep_exp.push(i),
                }
            }
            drop(entries);

            let mut kept = Vec::new();
            let mut kept_index = HashMap::new();
            for (h, keep) in done.into_iter().zip(keep_done) {
                if keep {
                    kept_index.insert(h.prefix.clone(), kept.len());
                    kept.push(h);
                }
            }
            done = kept;
            done_index = kept_index;

            keep_exp.sort_unstable();
            let mut next = Vec::with_capacity(keep_exp.len());
            for i in keep_exp {
                let (log_prob, parent, _, prefix) = &expansions[i];
                let p = &active[*parent];
                let state = cache.advance(model, &p.state, prefix)?;
                let mut emit_frames = p.emit_frames.clone();
                emit_frames.push(t);
                next.push(Hypothesis {
                    prefix: prefix.clone(),
                    log_prob: *log_prob,
                    state,
                    emit_frames,
                });
            }
            active = next;
            if active.is_empty() {
                break;
            }
        }
        done.sort_by(|a, b| rank(a.log_prob, &a.prefix, b.log_prob, &b.prefix));
        done.truncate(width);
        hyps = done;
    }
    hyps.sort_by(|a, b| rank(a.log_prob, &a.prefix, b.log_prob, &b.prefix));
    Ok(hyps)
}

fn result<S>(mut nbest: Vec<Hypothesis<S>>) -> Result<BeamResult<S>>
where
    S: Clone,
{
    if nbest.is_empty() {
        return Err(Error::invalid("beam search lost every hypothesis"));
    }
    nbest.sort_by(|a, b| rank(a.log_prob, &a.prefix, b.log_prob, &b.prefix));
    Ok(BeamResult {
        best: nbest[0].clone(),
        nbest,
    })
}

/// One frame-synchronous beam search of the given width.
///
/// On each frame, every active hypothesis either takes blank (and is done
/// with the frame) or is extended by a token (and stays on the frame), for
/// up to `max_symbols` tokens. After each round the finished and extended
/// hypotheses are pooled and only the best `width` survive. Hypotheses that
/// reach the same prefix are merged by adding their probabilities. Ties are
/// broken towards the lexicographically smaller prefix.
///
/// Plain beam search can return a worse best hypothesis at a larger width;
/// [`beam_decode`] removes that effect.
pub fn beam_search<M: Transducer>(model: &M, width: usize, max_symbols: usize) -> Result<BeamResult<M::State>> {
    check_args(width, max_symbols)?;
    result(search(model, width, max_symbols, &mut StateCache::new())?)
}

/// Beam decoding whose best score never decreases with the width: searches
/// at widths `1..=width` and pools their final hypotheses, keeping the
/// highest score per prefix. Width 1 is exactly greedy decoding on
/// tie-free scores.
pub fn beam_decode<M: Transducer>(model: &M, width: usize, max_symbols: usize) -> Result<BeamResult<M::State>> {
    check_args(width, max_symbols)?;
    let mut cache = StateCache::new();
    let mut pooled: Vec<Hypothesis<M::State>> = Vec::new();
    let mut index: HashMap<Vec<usize>, usize> = HashMap::new();
    for w in 1..=width {
        for h in search(model, w, max_symbols, &mut cache)? {
            match index.get(&h.prefix) {
                Some(&i) if pooled[i].log_prob >= h.log_prob => {}
                Some(&i) => pooled[i] = h,
                None => {
                    index.insert(h.prefix.clone(), pooled.len());
                    pooled.push(h);
                }
            }
        }
    }
    pooled.sort_by(|a, b| rank(a.log_prob, &a.prefix, b.log_prob, &b.prefix));
    pooled.truncate(width);
    result(pooled)
}

fn check_args(width: usize, max_symbols: usize) -> Result<()> {
    if width == 0 {
        return Err(Error::invalid("beam width must be at least 1"));
    }
    check_max_symbols(max_symbols)
}
