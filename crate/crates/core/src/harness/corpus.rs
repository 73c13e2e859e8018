//! Synthetic speech-like corpora with exact word alignments.
//!
//! Every token (the space token included, which doubles as silence) owns a
//! random feature template. An utterance is a sequence of words of one to a
//! few pieces; each piece is rendered as a run of noisy copies of its
//! template lasting a random number of raw frames, and words may be
//! separated by silence. Optionally the first frames of every sound glide
//! in from the previous sound's template. Word boundaries are converted to
//! encoder frames by rounding `raw / stride` half up, with the last word
//! ending on the final encoder frame.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::alignment::{transcript_from_spans, Utterance, WordSpan};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CorpusConfig {
    /// Token inventory size including the space token (id 0).
    pub vocab_size: usize,
    pub input_dim: usize,
    pub train_utterances: usize,
    pub test_utterances: usize,
    pub min_words: usize,
    pub max_words: usize,
    pub max_pieces_per_word: usize,
    /// Raw frames per piece, inclusive range.
    pub min_piece_frames: usize,
    pub max_piece_frames: usize,
    /// Chance of silence before each word after the first.
    pub pause_prob: f64,
    /// Longest pause in raw frames; lengths are uniform on `1..=max`.
    pub max_pause_frames: usize,
    /// Standard deviation of the Gaussian noise added to every frame.
    pub noise: f64,
    /// Leading frames of each piece or pause that glide from the previous
    /// sound's template to their own, so that a sound is only identifiable
    /// some frames after it starts.
    pub onset_frames: usize,
    /// Raw frames per encoder frame.
    pub stride: usize,
    pub seed: u64,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        Self {
            vocab_size: 12,
            input_dim: 8,
            train_utterances: 200,
            test_utterances: 50,
            min_words: 2,
            max_words: 5,
            max_pieces_per_word: 3,
            min_piece_frames: 2,
            max_piece_frames: 6,
            pause_prob: 0.5,
            max_pause_frames: 6,
            noise: 1.0,
            onset_frames: 0,
            stride: 2,
            seed: 1,
        }
    }
}

impl CorpusConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::invalid(format!("corpus config: {msg}")));
        if self.vocab_size < 3 {
            return bad("vocab_size must be at least 3 (space plus two content tokens)");
        }
        if self.input_dim == 0 || self.stride == 0 {
            return bad("input_dim and stride must be positive");
        }
        if self.min_words == 0 || self.min_words > self.max_words {
            return bad("need 1 <= min_words <= max_words");
        }
        if self.max_pieces_per_word == 0 {
            return bad("max_pieces_per_word must be positive");
        }
        if self.min_piece_frames == 0 || self.min_piece_frames > self.max_piece_frames {
            return bad("need 1 <= min_piece_frames <= max_piece_frames");
        }
        if !(0.0..=1.0).contains(&self.pause_prob) {
            return bad("pause_prob must lie in [0, 1]");
        }
        if self.pause_prob > 0.0 && self.max_pause_frames == 0 {
            return bad("max_pause_frames must be positive when pauses are enabled");
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return bad("noise must be finite and non-negative");
        }
        Ok(())
    }
}

/// Token id used for silence and word gaps.
pub const SPACE_ID: usize = 0;

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCorpus {
    pub train: Vec<Utterance>,
    pub test: Vec<Utterance>,
    /// One feature template per token id.
    pub templates: Vec<Vec<f64>>,
}

/// Builds train and test sets from independent random streams of one seed;
/// the same configuration always gives the same corpora.
pub fn gen_corpus(cfg: &CorpusConfig) -> Result<SyntheticCorpus> {
    cfg.validate()?;
    let stream = |s: u64| {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(s);
        rng
    };
    let mut rng = stream(0);
    let templates: Vec<Vec<f64>> = (0..cfg.vocab_size)
        .map(|_| (0..cfg.input_dim).map(|_| rng.sample(StandardNormal)).collect())
        .collect();
    let mut rng = stream(1);
    let train = (0..cfg.train_utterances)
        .map(|i| generate(cfg, &templates, &mut rng, format!("train-{i:05}")))
        .collect();
    let mut rng = stream(2);
    let test = (0..cfg.test_utterances)
        .map(|i| generate(cfg, &templates, &mut rng, format!("test-{i:05}")))
        .collect();
    Ok(SyntheticCorpus { train, test, templates })
}

fn render(cfg: &CorpusConfig, from: &[f64], template: &[f64], frames: usize, rng: &mut ChaCha8Rng, out: &mut Vec<Vec<f64>>) {
    for i in 0..frames {
        let w = if i < cfg.onset_frames {
            (i + 1) as f64 / (cfg.onset_frames + 1) as f64
        } else {
            1.0
        };
        out.push(
            from.iter()
                .zip(template)
                .map(|(&a, &b)| {
                    let n: f64 = rng.sample(StandardNormal);
                    (1.0 - w) * a + w * b + cfg.noise * n
                })
                .collect(),
        );
    }
}

fn generate(cfg: &CorpusConfig, templates: &[Vec<f64>], rng: &mut ChaCha8Rng, id: String) -> Utterance {
    let mut features = Vec::new();
    let mut raw_words: Vec<(Vec<usize>, usize, usize)> = Vec::new();
    let mut prev: Option<usize> = None;
    // The utterance starts out of silence.
    let mut sound = SPACE_ID;
    let words = rng.random_range(cfg.min_words..=cfg.max_words);
    for w in 0..words {
        if w > 0 && rng.random_bool(cfg.pause_prob) {
            let len = rng.random_range(1..=cfg.max_pause_frames);
            render(cfg, &templates[sound], &templates[SPACE_ID], len, rng, &mut features);
            sound = SPACE_ID;
        }
        let start = features.len();
        let n = rng.random_range(1..=cfg.max_pieces_per_word);
        let mut pieces = Vec::with_capacity(n);
        for _ in 0..n {
            // Neighbouring pieces always differ so that the frame alignment
            // collapses back to the transcript.
            let piece = loop {
                let p = rng.random_range(1..cfg.vocab_size);
                if Some(p) != prev {
                    break p;
                }
            };
            let len = rng.random_range(cfg.min_piece_frames..=cfg.max_piece_frames);
            render(cfg, &templates[sound], &templates[piece], len, rng, &mut features);
            sound = piece;
            pieces.push(piece);
            prev = Some(piece);
        }
        raw_words.push((pieces, start, features.len()));
    }

    let frames = features.len().div_ceil(cfg.stride);
    let to_encoder = |b: usize| ((2 * b + cfg.stride) / (2 * cfg.stride)).min(frames);
    let last = raw_words.len() - 1;
    let spans: Vec<WordSpan> = raw_words
        .into_iter()
        .enumerate()
        .map(|(i, (pieces, s, e))| {
            let name = pieces.iter().map(|p| format!("p{p}")).collect::<Vec<_>>().join("_");
            let end = if i == last { frames } else { to_encoder(e) };
            WordSpan::new(name, pieces, to_encoder(s), end)
        })
        .collect();
    let transcript = transcript_from_spans(&spans, frames, SPACE_ID);
    Utterance {
        id,
        features,
        words: spans,
        transcript,
    }
}

/// Utterances whose frame alignment fails because a word has more pieces
/// than frames.
pub fn count_degenerate(corpus: &[Utterance], stride: usize) -> usize {
    corpus
        .iter()
        .filter(|u| matches!(u.frame_alignment(stride, SPACE_ID), Err(Error::DegenerateUtterance { .. })))
        .count()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::alignment::corpus_hash;

    fn small() -> CorpusConfig {
        CorpusConfig {
            train_utterances: 20,
            test_utterances: 5,
            ..CorpusConfig::default()
        }
    }

    #[test]
    fn same_seed_same_bytes() {
        let a = gen_corpus(&small()).unwrap();
        let b = gen_corpus(&small()).unwrap();
        assert_eq!(corpus_hash(&a.train).unwrap(), corpus_hash(&b.train).unwrap());
        assert_eq!(corpus_hash(&a.test).unwrap(), corpus_hash(&b.test).unwrap());
        let c = gen_corpus(&CorpusConfig { seed: 2, ..small() }).unwrap();
        assert_ne!(corpus_hash(&a.train).unwrap(), corpus_hash(&c.train).unwrap());
        assert_ne!(a.train[0].features, a.test[0].features);
    }

    #[test]
    fn alignments_reproduce_transcripts() {
        let corpus = gen_corpus(&CorpusConfig {
            train_utterances: 300,
            ..small()
        })
        .unwrap();
        let mut ok = 0;
        for utt in &corpus.train {
            match utt.frame_alignment(2, SPACE_ID) {
                Ok(fa) => {
                    assert_eq!(fa.len(), utt.encoder_frames(2));
                    ok += 1;
                }
                Err(Error::DegenerateUtterance { .. }) => {}
                Err(e) => panic!("{}: {e}", utt.id),
            }
            assert!(utt.transcript.windows(2).all(|w| w[0] != w[1]));
            assert_eq!(utt.words.first().unwrap().start, 0);
            assert_eq!(utt.words.last().unwrap().end, utt.encoder_frames(2));
        }
        assert!(ok > 250, "only {ok} usable utterances");
    }

    #[test]
    fn noiseless_frames_are_templates() {
        let corpus = gen_corpus(&CorpusConfig { noise: 0.0, ..small() }).unwrap();
        for utt in &corpus.train {
            let mut decoded = Vec::new();
            for frame in &utt.features {
                let best = (0..corpus.templates.len())
                    .min_by(|&a, &b| {
                        let d = |k: usize| -> f64 { corpus.templates[k].iter().zip(frame).map(|(x, y)| (x - y).powi(2)).sum() };
                        d(a).total_cmp(&d(b))
                    })
                    .unwrap();
                assert_eq!(&corpus.templates[best], frame);
                if decoded.last() != Some(&best) {
                    decoded.push(best);
                }
            }
            let pieces: Vec<usize> = decoded.into_iter().filter(|&k| k != SPACE_ID).collect();
            let reference: Vec<usize> = utt.transcript.iter().copied().filter(|&k| k != SPACE_ID).collect();
            assert_eq!(pieces, reference);
        }
    }

    #[test]
    fn onsets_blend_into_the_template() {
        let corpus = gen_corpus(&CorpusConfig {
            noise: 0.0,
            onset_frames: 1,
            pause_prob: 0.0,
            ..small()
        })
        .unwrap();
        let t = &corpus.templates;
        for utt in &corpus.train {
            let mut raw = 0;
            let mut prev = SPACE_ID;
            for w in &utt.words {
                for &p in &w.pieces {
                    let midpoint: Vec<f64> = t[prev].iter().zip(&t[p]).map(|(a, b)| 0.5 * a + 0.5 * b).collect();
                    assert_eq!(utt.features[raw], midpoint);
                    // Later frames of the piece are the clean template.
                    raw += 1;
                    while raw < utt.features.len() && utt.features[raw] == t[p] {
                        raw += 1;
                    }
                    prev = p;
                }
            }
            assert_eq!(raw, utt.features.len());
        }
    }

    #[test]
    fn content_tokens_are_uniform() {
        let cfg = CorpusConfig {
            train_utterances: 3000,
            test_utterances: 0,
            input_dim: 1,
            ..CorpusConfig::default()
        };
        let corpus = gen_corpus(&cfg).unwrap();
        let mut counts = vec![0usize; cfg.vocab_size];
        for utt in &corpus.train {
            for w in &utt.words {
                for &p in &w.pieces {
                    counts[p] += 1;
                }
            }
        }
        let n: usize = counts[1..].iter().sum();
        assert!(n >= 10_000, "{n} pieces");
        let expected = n as f64 / (cfg.vocab_size - 1) as f64;
        let chi2: f64 = counts[1..].iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
        // Upper 0.001 quantile of chi-squared with 10 degrees of freedom.
        assert!(chi2 < 29.588, "chi2 = {chi2}");
        assert_eq!(counts[SPACE_ID], 0);
    }

    #[test]
    fn rejects_bad_parameters() {
        for cfg in [
            CorpusConfig { vocab_size: 2, ..small() },
            CorpusConfig { min_words: 3, max_words: 2, ..small() },
            CorpusConfig { min_piece_frames: 0, ..small() },
            CorpusConfig { pause_prob: 1.5, ..small() },
            CorpusConfig { noise: -1.0, ..small() },
        ] {
            assert!(gen_corpus(&cfg).is_err());
        }
    }
}
