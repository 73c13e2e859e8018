//! Generates a small synthetic corpus and shows one utterance's words,
//! frame alignment and whole-network label tensors.

use anyhow::Result;
use rnnt_lab::decoding::{greedy_decode_traced, LabelOracle};
use rnnt_lab::harness::{count_degenerate, gen_corpus, CorpusConfig, SPACE_ID};
use rnnt_lab::pretrain::{LabelBuilder, LabelVariant};

fn main() -> Result<()> {
    let cfg = CorpusConfig {
        train_utterances: 20,
        test_utterances: 5,
        ..CorpusConfig::default()
    };
    let corpus = gen_corpus(&cfg)?;
    println!(
        "{} train / {} test utterances, {} unusable for alignment",
        corpus.train.len(),
        corpus.test.len(),
        count_degenerate(&corpus.train, cfg.stride)
    );

    let utt = &corpus.train[0];
    println!("{}: {} raw frames, transcript {:?}", utt.id, utt.raw_frames(), utt.transcript);
    for w in &utt.words {
        println!("  word {:<10} pieces {:?} frames {}..{}", w.word, w.pieces, w.start, w.end);
    }
    let fa = utt.frame_alignment(cfg.stride, SPACE_ID)?;
    println!("frame labels {:?}", fa.labels);

    let blank = cfg.vocab_size;
    for variant in LabelVariant::ALL {
        let label = variant.build(&fa, &utt.transcript, blank, SPACE_ID)?;
        let (hyp, trace) = greedy_decode_traced(&LabelOracle::new(&label, blank)?, 4)?;
        println!(
            "{variant}: {} masked cells, replayed tokens {:?}, {} decoder steps",
            label.masked_count(),
            hyp.prefix,
            trace.len()
        );
    }
    Ok(())
}
