mod common;

use common::{tiny_corpus, tiny_model};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rnnt_lab::decoding::test_support::TableTransducer;
use rnnt_lab::decoding::{beam_decode, greedy_decode_traced, measure_delay, LabelOracle, ModelScorer};
use rnnt_lab::harness::{edit_distance, SPACE_ID};
use rnnt_lab::loss::oracle::rnnt_brute_force;
use rnnt_lab::loss::{rnnt_lattice, rnnt_loss};
use rnnt_lab::model::RnntModel;
use rnnt_lab::numerics::Tensor;
use rnnt_lab::pretrain::build_y2;

fn instance(seed: u64, t: usize, u: usize, k: usize) -> (Tensor, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let targets = (0..u).map(|_| rng.random_range(0..k)).collect();
    let data = (0..t * (u + 1) * (k + 1)).map(|_| rng.random_range(-4.0..4.0)).collect();
    (Tensor::new(vec![t, u + 1, k + 1], data).unwrap(), targets)
}

proptest! {
    #[test]
    fn transducer_loss_matches_enumeration(seed in any::<u64>(), t in 1usize..=5, u in 0usize..=3, k in 1usize..=3) {
        let (logits, targets) = instance(seed, t, u, k);
        let out = rnnt_loss(&logits, &targets, k).unwrap();
        prop_assert!(out.value >= 0.0);
        prop_assert!((out.value - rnnt_brute_force(&logits, &targets, k).unwrap()).abs() < 1e-10);
    }

    #[test]
    fn gradient_rows_sum_to_zero(seed in any::<u64>(), t in 1usize..=8, u in 0usize..=5) {
        let (logits, targets) = instance(seed, t, u, 4);
        let out = rnnt_loss(&logits, &targets, 4).unwrap();
        for row in out.grad_logits.data().chunks(5) {
            prop_assert!(row.iter().sum::<f64>().abs() < 1e-9);
        }
    }

    #[test]
    fn occupancy_counts_every_step(seed in any::<u64>(), t in 1usize..=8, u in 0usize..=5) {
        let (logits, targets) = instance(seed, t, u, 4);
        let lattice = rnnt_lattice(&logits, &targets, 4).unwrap();
        let total: f64 = lattice.occupancy(&targets, 4).data().iter().sum();
        prop_assert!((total - (t + u) as f64).abs() < 1e-8);
    }

    #[test]
    fn edit_distance_is_a_metric(
        a in prop::collection::vec(0u8..4, 0..8),
        b in prop::collection::vec(0u8..4, 0..8),
        c in prop::collection::vec(0u8..4, 0..8),
    ) {
        let ab = edit_distance(&a, &b);
        prop_assert_eq!(ab, edit_distance(&b, &a));
        prop_assert!(ab <= a.len().max(b.len()));
        prop_assert!(ab >= a.len().abs_diff(b.len()));
        prop_assert!(edit_distance(&a, &c) <= ab + edit_distance(&b, &c));
        prop_assert_eq!(edit_distance(&a, &a), 0);
    }

    #[test]
    fn beam_hypotheses_are_well_formed(seed in any::<u64>(), frames in 1usize..=6, width in 1usize..=6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let table = TableTransducer::random(&mut rng, frames, 8, 4, 3.0);
        let result = beam_decode(&table, width, 4).unwrap();
        prop_assert!(result.nbest.len() <= width);
        prop_assert!(result.nbest.windows(2).all(|w| w[0].log_prob >= w[1].log_prob));
        for h in &result.nbest {
            prop_assert_eq!(h.emit_frames.len(), h.prefix.len());
            prop_assert!(h.emit_frames.windows(2).all(|w| w[0] <= w[1]));
            prop_assert!(h.emit_frames.iter().all(|&f| f < frames));
        }
        let wider = beam_decode(&table, width + 1, 4).unwrap();
        prop_assert!(wider.best.log_prob >= result.best.log_prob - 1e-12);
    }
}

#[test]
fn y2_paths_replay_generated_alignments() {
    let corpus = tiny_corpus(60, 1.0, 21);
    let blank = tiny_model().blank();
    let mut checked = 0;
    for utt in &corpus.train {
        let Ok(fa) = utt.frame_alignment(2, SPACE_ID) else { continue };
        let y2 = build_y2(&fa, &utt.transcript, blank).unwrap();
        let oracle = LabelOracle::new(&y2, blank).unwrap();
        let (hyp, trace) = greedy_decode_traced(&oracle, 4).unwrap();
        assert_eq!(hyp.prefix, utt.transcript, "{}", utt.id);
        assert_eq!(trace.len(), fa.len() + utt.transcript.len());
        assert_eq!(trace.iter().filter(|&&k| k == blank).count(), fa.len());
        // Every token is emitted on the first frame it covers, so every word
        // is recognized exactly at its start.
        let delays = measure_delay(&hyp, &utt.transcript, &utt.words).unwrap();
        assert!(delays.iter().all(|&d| d == 0), "{}: {delays:?}", utt.id);
        checked += 1;
    }
    assert!(checked > 40);
}

#[test]
fn decoding_a_prefix_of_frames_is_a_prefix_of_decoding() {
    let corpus = tiny_corpus(5, 1.0, 22);
    let model = RnntModel::new(tiny_model(), 9).unwrap();
    for utt in &corpus.train {
        let frames = model.frames(&utt.features_tensor().unwrap()).unwrap();
        let full = ModelScorer::new(&model, &frames).unwrap();
        let (_, full_trace) = greedy_decode_traced(&full, 4).unwrap();
        let width = frames.cols();
        for t in 1..frames.rows() {
            let head = Tensor::new(vec![t, width], frames.data()[..t * width].to_vec()).unwrap();
            let part = ModelScorer::new(&model, &head).unwrap();
            let (_, trace) = greedy_decode_traced(&part, 4).unwrap();
            assert_eq!(trace[..], full_trace[..trace.len()]);
        }
    }
}
