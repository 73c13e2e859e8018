use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::Hypothesis;
use crate::alignment::{word_first_token_positions, WordSpan};
use crate::error::{Error, Result};

/// Per-word emission delays in encoder frames: the frame at which a word's
/// first piece was emitted minus the frame at which the word starts.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DelayStats {
    pub samples: Vec<i64>,
    /// Utterances whose decoded tokens matched the reference.
    pub measured: usize,
    /// Utterances left out because the decoded tokens differ.
    pub skipped_mismatch: usize,
}

impl DelayStats {
    /// Records one utterance, or counts it as skipped if the hypothesis does
    /// not reproduce `reference`.
    pub fn add<S>(&mut self, hyp: &Hypothesis<S>, reference: &[usize], spans: &[WordSpan]) -> Result<()> {
        match measure_delay(hyp, reference, spans) {
            Ok(d) => {
                self.samples.extend(d);
                self.measured += 1;
                Ok(())
            }
            Err(Error::TranscriptMismatch) => {
                self.skipped_mismatch += 1;
                Ok(())
            }
            Err(e) => Err(e),
        }
    }

    pub fn merge(&mut self, other: &DelayStats) {
        self.samples.extend_from_slice(&other.samples);
        self.measured += other.measured;
        self.skipped_mismatch += other.skipped_mismatch;
    }

    pub fn mean(&self) -> Option<f64> {
        if self.samples.is_empty() {
            return None;
        }
        Some(self.samples.iter().sum::<i64>() as f64 / self.samples.len() as f64)
    }

    /// Sample counts in unit-frame bins.
    pub fn histogram(&self) -> BTreeMap<i64, usize> {
        let mut h = BTreeMap::new();
        for &s in &self.samples {
            *h.entry(s).or_insert(0) += 1;
        }
        h
    }
}

/// Delay of every word in one correctly decoded utterance.
///
/// Fails with [`Error::TranscriptMismatch`] when the hypothesis tokens are
/// not exactly `reference`.
pub fn measure_delay<S>(hyp: &Hypothesis<S>, reference: &[usize], spans: &[WordSpan]) -> Result<Vec<i64>> {
    if hyp.prefix != reference {
        return Err(Error::TranscriptMismatch);
    }
    let positions = word_first_token_positions(spans);
    if let Some(&last) = positions.last() {
        if last >= hyp.emit_frames.len() {
            return Err(Error::AlignmentMismatch("word spans do not fit the transcript".into()));
        }
    }
    Ok(spans
        .iter()
        .zip(positions)
        .map(|(span, pos)| hyp.emit_frames[pos] as i64 - span.start as i64)
        .collect())
}

/// `bin,count` rows for the histogram, then `mean`, `samples` and
/// `skipped_mismatch` summary rows.
pub fn write_delay_csv(path: impl AsRef<Path>, stats: &DelayStats) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["bin", "count"])?;
    for (bin, count) in stats.histogram() {
        w.write_record([bin.to_string(), count.to_string()])?;
    }
    let mean = stats.mean().map(|m| m.to_string()).unwrap_or_default();
    w.write_record(["mean".to_string(), mean])?;
    w.write_record(["samples".to_string(), stats.samples.len().to_string()])?;
    w.write_record(["skipped_mismatch".to_string(), stats.skipped_mismatch.to_string()])?;
    w.flush()?;
    Ok(())
}
