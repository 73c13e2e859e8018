use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{build_frame_alignment, FrameAlignment, WordSpan};
use crate::error::{Error, Result};
use crate::numerics::Tensor;

/// One corpus entry: raw feature vectors, word spans in encoder frames and
/// the target token sequence.
///
/// Stored as one JSON object per line:
/// `{"id": .., "features": [[..], ..], "words": [{"word", "pieces", "start", "end"}], "transcript": [..]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Utterance {
    pub id: String,
    pub features: Vec<Vec<f64>>,
    pub words: Vec<WordSpan>,
    pub transcript: Vec<usize>,
}

impl Utterance {
    pub fn features_tensor(&self) -> Result<Tensor> {
        Tensor::from_rows(&self.features)
    }

    pub fn raw_frames(&self) -> usize {
        self.features.len()
    }

    pub fn encoder_frames(&self, stride: usize) -> usize {
        self.raw_frames().div_ceil(stride.max(1))
    }

    pub fn frame_alignment(&self, stride: usize, space_id: usize) -> Result<FrameAlignment> {
        let fa = build_frame_alignment(&self.words, self.encoder_frames(stride), space_id)?;
        fa.check_tokens(&self.transcript)?;
        Ok(fa)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }
}

pub fn write_corpus(path: impl AsRef<Path>, corpus: &[Utterance]) -> Result<()> {
    let mut out = std::io::BufWriter::new(fs::File::create(path)?);
    for utt in corpus {
        out.write_all(utt.to_json()?.as_bytes())?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

/// SHA-256 over the JSON-lines serialization, as lowercase hex.
pub fn corpus_hash(corpus: &[Utterance]) -> Result<String> {
    let mut hasher = Sha256::new();
    for utt in corpus {
        hasher.update(utt.to_json()?.as_bytes());
        hasher.update(b"\n");
    }
    Ok(hasher.finalize().iter().map(|b| format!("{b:02x}")).collect())
}

pub fn read_corpus(path: impl AsRef<Path>) -> Result<Vec<Utterance>> {
    let reader = BufReader::new(fs::File::open(path)?);
    let mut corpus = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let utt: Utterance = serde_json::from_str(&line)
            .map_err(|e| Error::invalid(format!("corpus line {}: {e}", i + 1)))?;
        corpus.push(utt);
    }
    Ok(corpus)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Utterance {
        Utterance {
            id: "u0".into(),
            features: vec![vec![0.1, -2.5e-17], vec![1.0 / 3.0, 7.0], vec![f64::MIN_POSITIVE, -0.0]],
            words: vec![WordSpan::new("w0", vec![1, 2], 0, 2)],
            transcript: vec![1, 2],
        }
    }

    #[test]
    fn jsonl_round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.jsonl");
        write_corpus(&path, &[sample(), sample()]).unwrap();
        let first = fs::read(&path).unwrap();
        let back = read_corpus(&path).unwrap();
        assert_eq!(back.len(), 2);
        for (a, b) in back[0].features.iter().flatten().zip(sample().features.iter().flatten()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        write_corpus(&path, &back).unwrap();
        assert_eq!(fs::read(&path).unwrap(), first);
    }

    #[test]
    fn frame_alignment_checks_transcript() {
        let mut utt = sample();
        assert_eq!(utt.encoder_frames(2), 2);
        assert_eq!(utt.frame_alignment(2, 0).unwrap().labels, vec![1, 2]);
        // At stride 1 the third frame is silence, which the transcript lacks.
        assert_eq!(utt.encoder_frames(1), 3);
        assert!(matches!(utt.frame_alignment(1, 0), Err(Error::AlignmentMismatch(_))));
        utt.transcript = vec![1, 2, 0];
        assert_eq!(utt.frame_alignment(1, 0).unwrap().labels, vec![1, 2, 0]);
    }
}
