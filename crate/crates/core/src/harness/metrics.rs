use serde::{Deserialize, Serialize};

use crate::alignment::Utterance;
use crate::decoding::{beam_decode, greedy_decode, DelayStats, ModelScorer};
use crate::error::Result;
use crate::model::RnntModel;

/// Levenshtein distance with unit costs.
pub fn edit_distance<T: PartialEq>(hyp: &[T], reference: &[T]) -> usize {
    let mut prev: Vec<usize> = (0..=reference.len()).collect();
    let mut cur = vec![0; reference.len() + 1];
    for (i, h) in hyp.iter().enumerate() {
        cur[0] = i + 1;
        for (j, r) in reference.iter().enumerate() {
            let sub = prev[j] + usize::from(h != r);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[reference.len()]
}

/// Test-set scores of one model.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    /// Edit operations over reference tokens, from beam decoding.
    pub token_error_rate: f64,
    pub errors: usize,
    pub reference_tokens: usize,
    /// Emission delays from greedy decoding of correctly recognized
    /// utterances.
    pub delay: DelayStats,
}

pub fn evaluate(model: &RnntModel, test: &[Utterance], beam_width: usize, max_symbols: usize) -> Result<Evaluation> {
    let mut eval = Evaluation::default();
    for utt in test {
        let scorer = ModelScorer::from_features(model, &utt.features_tensor()?)?;
        let beam = beam_decode(&scorer, beam_width, max_symbols)?;
        eval.errors += edit_distance(&beam.best.prefix, &utt.transcript);
        eval.reference_tokens += utt.transcript.len();
        let greedy = greedy_decode(&scorer, max_symbols)?;
        eval.delay.add(&greedy, &utt.transcript, &utt.words)?;
    }
    eval.token_error_rate = if eval.reference_tokens == 0 {
        0.0
    } else {
        eval.errors as f64 / eval.reference_tokens as f64
    };
    Ok(eval)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn edit_distance_cases() {
        assert_eq!(edit_distance(&[1, 2, 3], &[1, 2, 3]), 0);
        assert_eq!(edit_distance(&[1, 9, 2, 3], &[1, 2, 3]), 1);
        assert_eq!(edit_distance::<usize>(&[], &[1, 2]), 2);
        assert_eq!(edit_distance(&[1, 2], &[]), 2);
        // 'A B s C' against 'A B C'.
        assert_eq!(edit_distance(&["A", "B", "s", "C"], &["A", "B", "C"]), 1);
        assert_eq!(edit_distance(&[1, 2, 3], &[3, 2, 1]), 2);
    }
}
