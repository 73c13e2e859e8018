//! Word-level alignments to frame-level token targets, plus the utterance
//! record and its JSON-lines corpus format.
//!
//! All frame indices here are encoder frames (after stacking), not raw
//! feature vectors.

mod corpus;

pub use corpus::{corpus_hash, read_corpus, write_corpus, Utterance};

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Longest run of space frames still counted as a short pause.
pub const SHORT_PAUSE_MAX: usize = 2;

/// One word with its pieces and its half-open encoder-frame span.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WordSpan {
    pub word: String,
    pub pieces: Vec<usize>,
    pub start: usize,
    pub end: usize,
}

impl WordSpan {
    pub fn new(word: impl Into<String>, pieces: Vec<usize>, start: usize, end: usize) -> Self {
        Self {
            word: word.into(),
            pieces,
            start,
            end,
        }
    }

    pub fn len(&self) -> usize {
        self.end.saturating_sub(self.start)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// One token id per encoder frame.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrameAlignment {
    pub labels: Vec<usize>,
}

impl FrameAlignment {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Token sequence with consecutive duplicates merged.
    pub fn collapse(&self) -> Vec<usize> {
        let mut out: Vec<usize> = Vec::new();
        for &l in &self.labels {
            if out.last() != Some(&l) {
                out.push(l);
            }
        }
        out
    }

    /// For each frame, the index of the collapsed token covering it.
    pub fn token_index(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.labels.len());
        let mut u = 0;
        for (t, &l) in self.labels.iter().enumerate() {
            if t > 0 && l != self.labels[t - 1] {
                u += 1;
            }
            out.push(u);
        }
        out
    }

    /// Checks that `tokens` is exactly the collapsed label sequence.
    pub fn check_tokens(&self, tokens: &[usize]) -> Result<()> {
        let collapsed = self.collapse();
        if collapsed != tokens {
            return Err(Error::AlignmentMismatch(format!(
                "alignment collapses to {collapsed:?}, tokens are {tokens:?}"
            )));
        }
        Ok(())
    }
}

/// Frames per piece inside one word: as even as possible, with earlier
/// pieces taking the remainder.
pub fn allocate_frames(span: &WordSpan) -> Result<Vec<usize>> {
    let frames = span.len();
    let pieces = span.pieces.len();
    if pieces == 0 {
        return Err(Error::invalid(format!("word {:?} has no pieces", span.word)));
    }
    if pieces > frames {
        return Err(Error::DegenerateUtterance {
            word: span.word.clone(),
            pieces,
            frames,
        });
    }
    let (base, extra) = (frames / pieces, frames % pieces);
    Ok((0..pieces).map(|i| base + usize::from(i < extra)).collect())
}

/// Labels every frame: frames inside a word get its pieces in order, all
/// other frames get `space_id`.
pub fn build_frame_alignment(spans: &[WordSpan], frames: usize, space_id: usize) -> Result<FrameAlignment> {
    let mut labels = vec![space_id; frames];
    let mut cursor = 0;
    for span in spans {
        if span.start < cursor || span.end > frames || span.end < span.start {
            return Err(Error::AlignmentMismatch(format!(
                "span {:?} [{}, {}) overlaps or leaves [0, {frames})",
                span.word, span.start, span.end
            )));
        }
        let counts = allocate_frames(span)?;
        let mut t = span.start;
        for (&piece, &n) in span.pieces.iter().zip(&counts) {
            labels[t..t + n].fill(piece);
            t += n;
        }
        cursor = span.end;
    }
    Ok(FrameAlignment { labels })
}

/// Maximal runs of `space_id` no longer than `max_len` frames.
pub fn short_pause_spans(fa: &FrameAlignment, space_id: usize, max_len: usize) -> Vec<Range<usize>> {
    let mut out = Vec::new();
    let mut t = 0;
    while t < fa.labels.len() {
        if fa.labels[t] != space_id {
            t += 1;
            continue;
        }
        let start = t;
        while t < fa.labels.len() && fa.labels[t] == space_id {
            t += 1;
        }
        if t - start <= max_len {
            out.push(start..t);
        }
    }
    out
}

/// Position in the transcript of each word's first piece.
///
/// The transcript is the word pieces in order with a space token for every
/// run of uncovered frames, which is what collapsing the frame alignment
/// gives whenever neighbouring pieces differ.
pub fn word_first_token_positions(spans: &[WordSpan]) -> Vec<usize> {
    let mut out = Vec::with_capacity(spans.len());
    let mut prev_end = 0;
    let mut pos = 0;
    for span in spans {
        if span.start > prev_end {
            pos += 1;
        }
        out.push(pos);
        pos += span.pieces.len();
        prev_end = span.end;
    }
    out
}

/// Transcript implied by word spans over `frames` encoder frames (see
/// [`word_first_token_positions`]).
pub fn transcript_from_spans(spans: &[WordSpan], frames: usize, space_id: usize) -> Vec<usize> {
    let mut out = Vec::new();
    let mut prev_end = 0;
    for span in spans {
        if span.start > prev_end {
            out.push(space_id);
        }
        out.extend_from_slice(&span.pieces);
        prev_end = span.end;
    }
    if frames > prev_end {
        out.push(space_id);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const S: usize = 0;
    const A: usize = 1;
    const B: usize = 2;
    const C: usize = 3;

    fn span(pieces: &[usize], start: usize, end: usize) -> WordSpan {
        WordSpan::new("w", pieces.to_vec(), start, end)
    }

    /// The three-word example: A for 3 frames, B for 2, a 1-frame gap, C for 2.
    fn example() -> Vec<WordSpan> {
        vec![span(&[A], 0, 3), span(&[B], 3, 5), span(&[C], 6, 8)]
    }

    #[test]
    fn allocation_is_ceil_first() {
        assert_eq!(allocate_frames(&span(&[A, B], 0, 4)).unwrap(), vec![2, 2]);
        assert_eq!(allocate_frames(&span(&[A, B], 0, 5)).unwrap(), vec![3, 2]);
        assert_eq!(allocate_frames(&span(&[A, B, C], 2, 9)).unwrap(), vec![3, 2, 2]);
        assert!(matches!(
            allocate_frames(&span(&[A, B, C], 0, 2)),
            Err(Error::DegenerateUtterance { pieces: 3, frames: 2, .. })
        ));
    }

    #[test]
    fn frame_alignment_of_example() {
        let fa = build_frame_alignment(&example(), 8, S).unwrap();
        assert_eq!(fa.labels, vec![A, A, A, B, B, S, C, C]);
        assert_eq!(fa.collapse(), vec![A, B, S, C]);
        assert_eq!(fa.token_index(), vec![0, 0, 0, 1, 1, 2, 3, 3]);
        assert_eq!(transcript_from_spans(&example(), 8, S), fa.collapse());
        assert_eq!(word_first_token_positions(&example()), vec![0, 1, 3]);
    }

    #[test]
    fn empty_and_split_words() {
        assert_eq!(build_frame_alignment(&[], 3, S).unwrap().labels, vec![S, S, S]);
        assert_eq!(transcript_from_spans(&[], 3, S), vec![S]);
        let padded = [span(&[A], 1, 2)];
        assert_eq!(transcript_from_spans(&padded, 4, S), vec![S, A, S]);
        assert_eq!(word_first_token_positions(&padded), vec![1]);
        let fa = build_frame_alignment(&[span(&[4, 5], 0, 5)], 5, S).unwrap();
        assert_eq!(fa.labels, vec![4, 4, 4, 5, 5]);
    }

    #[test]
    fn rejects_overlap_and_overflow() {
        assert!(build_frame_alignment(&[span(&[A], 0, 3), span(&[B], 2, 4)], 5, S).is_err());
        assert!(build_frame_alignment(&[span(&[A], 3, 6)], 5, S).is_err());
        assert!(matches!(
            build_frame_alignment(&[span(&[A, B], 0, 1)], 5, S),
            Err(Error::DegenerateUtterance { .. })
        ));
    }

    #[test]
    fn short_pauses() {
        let fa = |l: &[usize]| FrameAlignment { labels: l.to_vec() };
        assert_eq!(short_pause_spans(&fa(&[A, S, S, A]), S, SHORT_PAUSE_MAX), vec![1..3]);
        assert!(short_pause_spans(&fa(&[A, S, S, S, A]), S, SHORT_PAUSE_MAX).is_empty());
        assert_eq!(short_pause_spans(&fa(&[S, S]), S, SHORT_PAUSE_MAX), vec![0..2]);
        assert_eq!(
            short_pause_spans(&fa(&[S, A, S, S, S, B, S]), S, SHORT_PAUSE_MAX),
            vec![0..1, 6..7]
        );
    }

    #[test]
    fn token_check() {
        let fa = build_frame_alignment(&example(), 8, S).unwrap();
        assert!(fa.check_tokens(&[A, B, S, C]).is_ok());
        assert!(matches!(fa.check_tokens(&[A, B, C]), Err(Error::AlignmentMismatch(_))));
    }
}
