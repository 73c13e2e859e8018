mod common;

use std::sync::Mutex;

use common::{fast_fit, tiny_model};
use rnnt_lab::harness::{
    evaluate, gen_corpus, initialize_arm, run_experiment, run_experiment_observed, train_items, train_rnnt, Arm,
    CorpusConfig, ExperimentConfig, ExperimentObserver,
};
use rnnt_lab::model::RnntModel;
use rnnt_lab::pretrain::PretrainConfig;

fn tiny_experiment() -> ExperimentConfig {
    ExperimentConfig {
        model: tiny_model(),
        corpus: CorpusConfig {
            vocab_size: 5,
            input_dim: 4,
            train_utterances: 6,
            test_utterances: 3,
            max_words: 3,
            max_pieces_per_word: 2,
            min_piece_frames: 3,
            ..CorpusConfig::default()
        },
        pretrain: PretrainConfig {
            fit: fast_fit(2, 1e-2),
            ..PretrainConfig::default()
        },
        train: fast_fit(2, 1e-2),
        beam_width: 3,
        ..ExperimentConfig::default()
    }
}

#[test]
fn every_arm_overfits_a_single_utterance() {
    let cfg = ExperimentConfig {
        corpus: CorpusConfig {
            train_utterances: 1,
            noise: 0.2,
            seed: 4,
            ..tiny_experiment().corpus
        },
        pretrain: PretrainConfig {
            fit: fast_fit(30, 1e-2),
            ..PretrainConfig::default()
        },
        ..tiny_experiment()
    };
    let corpus = gen_corpus(&cfg.corpus).unwrap();
    let base = RnntModel::new(cfg.model.clone(), cfg.init_seed).unwrap();
    let items = train_items(&base, &corpus.train).unwrap();
    for arm in Arm::ALL {
        let (model, _) = initialize_arm(arm, &base, &corpus.train, &cfg.pretrain).unwrap();
        let (model, losses) = train_rnnt(model, &items, &fast_fit(150, 1e-2), |_, _, _| Ok(())).unwrap();
        let eval = evaluate(&model, &corpus.train, cfg.beam_width, 4).unwrap();
        assert_eq!(eval.errors, 0, "{arm}: final loss {}", losses.last().unwrap());
        assert_eq!(eval.delay.measured, 1, "{arm}");
    }
}

#[derive(Default)]
struct Recorder {
    initialized: Mutex<Vec<(Arm, RnntModel)>>,
    trained: Mutex<Vec<(Arm, RnntModel)>>,
}

impl ExperimentObserver for Recorder {
    fn initialized(&self, arm: Arm, model: &RnntModel) {
        self.initialized.lock().unwrap().push((arm, model.clone()));
    }

    fn trained(&self, arm: Arm, model: &RnntModel) {
        self.trained.lock().unwrap().push((arm, model.clone()));
    }
}

#[test]
fn arms_share_everything_after_initialization() {
    let cfg = tiny_experiment();
    let recorder = Recorder::default();
    let report = run_experiment_observed(&cfg, &recorder).unwrap();
    assert!(report.summary.arms.iter().all(|a| a.error.is_none()));

    let corpus = gen_corpus(&cfg.corpus).unwrap();
    let base = RnntModel::new(cfg.model.clone(), cfg.init_seed).unwrap();
    let items = train_items(&base, &corpus.train).unwrap();
    let initialized = recorder.initialized.into_inner().unwrap();
    let trained = recorder.trained.into_inner().unwrap();
    assert_eq!(initialized.len(), Arm::ALL.len());
    for ((arm, init), (arm2, done)) in initialized.iter().zip(&trained) {
        assert_eq!(arm, arm2);
        let (expected_init, _) = initialize_arm(*arm, &base, &corpus.train, &cfg.pretrain).unwrap();
        assert_eq!(init, &expected_init, "{arm}");
        // Re-running the shared training function on the recorded start
        // reproduces the arm's result exactly.
        let (again, _) = train_rnnt(init.clone(), &items, &cfg.train, |_, _, _| Ok(())).unwrap();
        assert_eq!(&again, done, "{arm}");
    }
    assert_eq!(initialized[0].1, base);
    for (arm, init) in &initialized[1..] {
        assert_ne!(init, &base, "{arm} left the model untouched");
    }
}

#[test]
fn failed_arm_is_recorded_and_others_continue() {
    // One-frame pieces at stride 2 leave every utterance with fewer frames
    // than tokens: CTC and alignment-based schedules have nothing to train on.
    let mut cfg = tiny_experiment();
    cfg.corpus.min_piece_frames = 1;
    cfg.corpus.max_piece_frames = 1;
    cfg.corpus.pause_prob = 0.0;
    cfg.corpus.min_words = 3;
    cfg.corpus.max_pieces_per_word = 1;
    cfg.arms = vec![Arm::CtcEncoder, Arm::Random, Arm::WholeY2];
    let report = run_experiment(&cfg).unwrap();
    let s = &report.summary;
    assert!(s.arm(Arm::CtcEncoder).unwrap().error.is_some());
    assert!(s.arm(Arm::WholeY2).unwrap().error.is_some());
    let random = s.arm(Arm::Random).unwrap();
    assert!(random.error.is_none());
    assert!(random.token_error_rate().is_some());
    assert_eq!(s.degenerate_train_utterances, cfg.corpus.train_utterances);
}

#[test]
fn rows_carry_the_config_hash() {
    let cfg = tiny_experiment();
    let report = run_experiment(&ExperimentConfig {
        arms: vec![Arm::EncoderCe],
        eval_every: 1,
        ..cfg.clone()
    })
    .unwrap();
    let hash = &report.summary.config_hash;
    assert!(report.rows.iter().all(|r| &r.config_hash == hash));
    assert!(report.rows.iter().any(|r| r.phase.starts_with("pretrain")));
    for row in report.rows.iter().filter(|r| r.phase == "train") {
        let ter = row.token_error_rate.unwrap();
        assert!(ter >= 0.0);
        assert!(row.train_loss.is_finite());
    }

    let mut other = cfg.clone();
    other.corpus.seed += 1;
    assert_ne!(other.hash(), cfg.hash());
    let mut parallel = cfg.clone();
    parallel.parallel_arms = true;
    assert_eq!(parallel.hash(), cfg.hash());
}

#[test]
fn delay_is_absent_when_nothing_decodes() {
    let cfg = ExperimentConfig {
        arms: vec![Arm::Random],
        train: fast_fit(0, 1e-2),
        ..tiny_experiment()
    };
    let report = run_experiment(&cfg).unwrap();
    let arm = &report.summary.arms[0];
    let eval = arm.evaluation.as_ref().unwrap();
    assert_eq!(eval.delay.measured, 0);
    assert_eq!(arm.mean_delay(), None);
}

#[test]
fn rejects_inconsistent_configs() {
    let mut cfg = tiny_experiment();
    cfg.corpus.vocab_size = 6;
    assert!(run_experiment(&cfg).is_err());
    let mut cfg = tiny_experiment();
    cfg.arms.clear();
    assert!(run_experiment(&cfg).is_err());
    let mut cfg = tiny_experiment();
    cfg.beam_width = 0;
    assert!(run_experiment(&cfg).is_err());
}
