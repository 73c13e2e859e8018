//! Pre-trains the encoder with frame cross-entropy and with CTC, then
//! reports frame accuracy of the cross-entropy head on held-out data.

use anyhow::Result;
use rnnt_lab::harness::{gen_corpus, CorpusConfig, SPACE_ID};
use rnnt_lab::model::{ModelConfig, RnntModel};
use rnnt_lab::numerics::argmax;
use rnnt_lab::pretrain::{pretrain_encoder_ce, pretrain_encoder_ctc, FitConfig, PretrainConfig};

fn main() -> Result<()> {
    let corpus = gen_corpus(&CorpusConfig {
        train_utterances: 60,
        test_utterances: 20,
        ..CorpusConfig::default()
    })?;
    let model = RnntModel::new(ModelConfig::default(), 11)?;
    let cfg = PretrainConfig {
        fit: FitConfig {
            epochs: 8,
            ..FitConfig::default()
        },
        ..PretrainConfig::default()
    };

    let ce = pretrain_encoder_ce(&model, &corpus.train, &cfg)?;
    println!("cross-entropy losses {:?}", ce.report.epoch_losses);
    let head = ce.head.as_ref().expect("cross-entropy keeps its output layer");
    let (mut right, mut total) = (0, 0);
    for utt in &corpus.test {
        let Ok(fa) = utt.frame_alignment(model.config().stride, SPACE_ID) else { continue };
        let enc = ce.model.encode(&ce.model.frames(&utt.features_tensor()?)?)?;
        let scores = head.apply(&enc)?;
        for (t, &label) in fa.labels.iter().enumerate() {
            right += usize::from(argmax(scores.row(t)) == label);
            total += 1;
        }
    }
    println!("held-out frame accuracy {:.3}", right as f64 / total as f64);

    let ctc = pretrain_encoder_ctc(&model, &corpus.train, &cfg)?;
    println!(
        "CTC losses {:?} ({} utterances too short)",
        ctc.report.epoch_losses, ctc.report.skipped_unusable
    );
    Ok(())
}
