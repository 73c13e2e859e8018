use super::{check_max_symbols, Hypothesis, Transducer};
use crate::error::Result;
use crate::numerics::argmax;

/// Greedy decoding: at each step take the most probable class; a token
/// updates the label history and stays on the frame, blank moves to the
/// next frame. After `max_symbols` tokens on one frame, blank is taken.
pub fn greedy_decode<M: Transducer>(model: &M, max_symbols: usize) -> Result<Hypothesis<M::State>> {
    greedy_decode_traced(model, max_symbols).map(|(h, _)| h)
}

/// [`greedy_decode`] that also returns every class taken, blanks included.
pub fn greedy_decode_traced<M: Transducer>(
    model: &M,
    max_symbols: usize,
) -> Result<(Hypothesis<M::State>, Vec<usize>)> {
    check_max_symbols(max_symbols)?;
    let blank = model.blank();
    let mut hyp = Hypothesis::start(model.initial_state());
    let mut trace = Vec::new();
    for t in 0..model.num_frames() {
        let mut emitted = 0;
        loop {
            let lp = model.log_probs(t, &hyp.state);
            let k = argmax(&lp);
            if k == blank || emitted == max_symbols {
                hyp.log_prob += lp[blank];
                trace.push(blank);
                break;
            }
            hyp.log_prob += lp[k];
            hyp.prefix.push(k);
            hyp.emit_frames.push(t);
            hyp.state = model.advance(&hyp.state, k)?;
            trace.push(k);
            emitted += 1;
        }
    }
    Ok((hyp, trace))
}
