//! Trains a transducer from scratch, then decodes the test set greedily and
//! with beam search and measures word emission delays.

use anyhow::Result;
use rnnt_lab::decoding::{beam_decode, greedy_decode, DelayStats, ModelScorer};
use rnnt_lab::harness::{edit_distance, gen_corpus, train_items, train_rnnt, CorpusConfig};
use rnnt_lab::model::{ModelConfig, RnntModel};
use rnnt_lab::pretrain::FitConfig;

fn main() -> Result<()> {
    let corpus = gen_corpus(&CorpusConfig {
        train_utterances: 100,
        test_utterances: 20,
        noise: 0.5,
        ..CorpusConfig::default()
    })?;
    let model = RnntModel::new(ModelConfig::default(), 11)?;
    let items = train_items(&model, &corpus.train)?;
    let fit = FitConfig {
        epochs: 15,
        ..FitConfig::default()
    };
    let (model, _) = train_rnnt(model, &items, &fit, |epoch, loss, _| {
        println!("epoch {epoch:>2}  loss/token {loss:.4}");
        Ok(())
    })?;

    let (mut greedy_errors, mut beam_errors, mut tokens) = (0, 0, 0);
    let mut delays = DelayStats::default();
    for utt in &corpus.test {
        let scorer = ModelScorer::from_features(&model, &utt.features_tensor()?)?;
        let greedy = greedy_decode(&scorer, 4)?;
        let beam = beam_decode(&scorer, 4, 4)?;
        greedy_errors += edit_distance(&greedy.prefix, &utt.transcript);
        beam_errors += edit_distance(&beam.best.prefix, &utt.transcript);
        tokens += utt.transcript.len();
        delays.add(&greedy, &utt.transcript, &utt.words)?;
    }
    println!(
        "token error rate: greedy {:.3}, beam {:.3}",
        greedy_errors as f64 / tokens as f64,
        beam_errors as f64 / tokens as f64
    );
    println!(
        "delay over {} correct utterances: mean {:?}, histogram {:?}",
        delays.measured,
        delays.mean(),
        delays.histogram()
    );
    Ok(())
}
