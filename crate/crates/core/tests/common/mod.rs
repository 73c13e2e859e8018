#![allow(dead_code)]

use rnnt_lab::harness::{gen_corpus, CorpusConfig, SyntheticCorpus};
use rnnt_lab::model::ModelConfig;
use rnnt_lab::numerics::AdamConfig;
use rnnt_lab::pretrain::{FitConfig, PretrainConfig};

pub fn tiny_model() -> ModelConfig {
    ModelConfig {
        input_dim: 4,
        stack_factor: 2,
        stride: 2,
        encoder_layers: 1,
        encoder_hidden: 24,
        prediction_layers: 1,
        prediction_hidden: 16,
        projection: 16,
        vocab_size: 5,
        use_layer_norm: false,
    }
}

pub fn tiny_corpus(train: usize, noise: f64, seed: u64) -> SyntheticCorpus {
    gen_corpus(&CorpusConfig {
        vocab_size: 5,
        input_dim: 4,
        train_utterances: train,
        test_utterances: 2,
        min_words: 2,
        max_words: 3,
        max_pieces_per_word: 2,
        min_piece_frames: 3,
        max_piece_frames: 5,
        noise,
        seed,
        ..CorpusConfig::default()
    })
    .unwrap()
}

pub fn fast_fit(epochs: usize, lr: f64) -> FitConfig {
    FitConfig {
        epochs,
        batch_size: 1,
        adam: AdamConfig {
            lr,
            ..AdamConfig::default()
        },
        shuffle_seed: 3,
    }
}

pub fn pretrain_cfg(epochs: usize, lr: f64) -> PretrainConfig {
    PretrainConfig {
        fit: fast_fit(epochs, lr),
        ..PretrainConfig::default()
    }
}
