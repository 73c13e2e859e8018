//! Label tensors for whole-network cross-entropy pre-training.
//!
//! A label tensor spans the same `T×(U+1)` grid as the joint output. Each
//! masked cell carries one target class; unmasked cells take no part in the
//! loss.
//!
//! With `u(t)` the index of the token covering frame `t`:
//!
//! * `y1` fills every row `u < U` with the frame's own label and the last
//!   row with blank. Every cell is masked.
//! * `y2` masks `(t, u(t))` with the token and `(t, u(t)+1)` with blank.
//!   Reading it as a decoder's scores walks the lattice diagonally: emit the
//!   token at the first frame of its span, then take blank on every frame
//!   until the next token begins. For `A A A B B s C C` this yields
//!   `A Φ Φ Φ B Φ Φ s Φ C Φ Φ`, and the blank row under the last token is
//!   what ends decoding.
//! * `y3` keeps only the token cells of `y2`, with frames inside short pauses
//!   relabelled blank.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::alignment::{short_pause_spans, FrameAlignment, SHORT_PAUSE_MAX};
use crate::error::{Error, Result};
use crate::numerics::Tensor;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelTensor {
    shape: [usize; 3],
    targets: Vec<usize>,
    mask: Vec<bool>,
}

impl LabelTensor {
    /// A `frames × rows` grid over `classes` with nothing masked.
    pub fn empty(frames: usize, rows: usize, classes: usize) -> Result<Self> {
        if frames == 0 || rows == 0 || classes == 0 {
            return Err(Error::invalid("label tensor extents must be positive"));
        }
        Ok(Self {
            shape: [frames, rows, classes],
            targets: vec![0; frames * rows],
            mask: vec![false; frames * rows],
        })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn frames(&self) -> usize {
        self.shape[0]
    }

    pub fn rows(&self) -> usize {
        self.shape[1]
    }

    pub fn classes(&self) -> usize {
        self.shape[2]
    }

    /// Masks cell `(t, u)` with target `class`.
    pub fn set(&mut self, t: usize, u: usize, class: usize) -> Result<()> {
        let [tn, un, k] = self.shape;
        if t >= tn || u >= un {
            return Err(Error::invalid(format!("cell ({t}, {u}) outside {tn}×{un}")));
        }
        if class >= k {
            return Err(Error::TokenOutOfRange { id: class, limit: k });
        }
        self.targets[t * un + u] = class;
        self.mask[t * un + u] = true;
        Ok(())
    }

    /// Target at `(t, u)`, if masked.
    pub fn get(&self, t: usize, u: usize) -> Option<usize> {
        let i = t * self.shape[1] + u;
        self.mask[i].then(|| self.targets[i])
    }

    /// Row-major `T×R` mask.
    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn masked_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    /// `(flat cell index, target class)` for every masked cell.
    pub fn masked_cells(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.mask
            .iter()
            .zip(&self.targets)
            .enumerate()
            .filter(|(_, (&m, _))| m)
            .map(|(i, (_, &c))| (i, c))
    }

    /// Dense one-hot targets; unmasked cells are all zero.
    pub fn one_hot(&self) -> Tensor {
        let k = self.shape[2];
        let mut data = vec![0.0; self.mask.len() * k];
        for (cell, class) in self.masked_cells() {
            data[cell * k + class] = 1.0;
        }
        Tensor::new(self.shape.to_vec(), data).expect("label shape")
    }
}

/// Which whole-network target layout to build.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LabelVariant {
    Y1,
    Y2,
    Y3,
}

impl LabelVariant {
    pub const ALL: [LabelVariant; 3] = [LabelVariant::Y1, LabelVariant::Y2, LabelVariant::Y3];
}

impl fmt::Display for LabelVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LabelVariant::Y1 => "y1",
            LabelVariant::Y2 => "y2",
            LabelVariant::Y3 => "y3",
        })
    }
}

impl std::str::FromStr for LabelVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "y1" => Ok(LabelVariant::Y1),
            "y2" => Ok(LabelVariant::Y2),
            "y3" => Ok(LabelVariant::Y3),
            other => Err(Error::invalid(format!("unknown label variant {other:?}"))),
        }
    }
}

/// Something that turns a frame alignment into a label tensor.
pub trait LabelBuilder {
    /// The layout this builder produces.
    fn variant(&self) -> LabelVariant;

    fn build(&self, fa: &FrameAlignment, tokens: &[usize], blank: usize, space_id: usize) -> Result<LabelTensor>;
}

impl LabelBuilder for LabelVariant {
    fn variant(&self) -> LabelVariant {
        *self
    }

    fn build(&self, fa: &FrameAlignment, tokens: &[usize], blank: usize, space_id: usize) -> Result<LabelTensor> {
        match self {
            LabelVariant::Y1 => build_y1(fa, tokens, blank),
            LabelVariant::Y2 => build_y2(fa, tokens, blank),
            LabelVariant::Y3 => build_y3(fa, tokens, blank, space_id),
        }
    }
}

fn check_inputs(fa: &FrameAlignment, tokens: &[usize], blank: usize) -> Result<()> {
    if fa.is_empty() {
        return Err(Error::Empty("frame alignment"));
    }
    if tokens.contains(&blank) {
        return Err(Error::invalid("blank may not appear in the token sequence"));
    }
    fa.check_tokens(tokens)
}

pub fn build_y1(fa: &FrameAlignment, tokens: &[usize], blank: usize) -> Result<LabelTensor> {
    check_inputs(fa, tokens, blank)?;
    let u = tokens.len();
    let mut label = LabelTensor::empty(fa.len(), u + 1, blank + 1)?;
    for (t, &l) in fa.labels.iter().enumerate() {
        for row in 0..u {
            label.set(t, row, l)?;
        }
        label.set(t, u, blank)?;
    }
    Ok(label)
}

pub fn build_y2(fa: &FrameAlignment, tokens: &[usize], blank: usize) -> Result<LabelTensor> {
    check_inputs(fa, tokens, blank)?;
    let mut label = LabelTensor::empty(fa.len(), tokens.len() + 1, blank + 1)?;
    for (t, u) in fa.token_index().into_iter().enumerate() {
        label.set(t, u, tokens[u])?;
        label.set(t, u + 1, blank)?;
    }
    Ok(label)
}

pub fn build_y3(fa: &FrameAlignment, tokens: &[usize], blank: usize, space_id: usize) -> Result<LabelTensor> {
    check_inputs(fa, tokens, blank)?;
    let mut label = LabelTensor::empty(fa.len(), tokens.len() + 1, blank + 1)?;
    let index = fa.token_index();
    for (t, &u) in index.iter().enumerate() {
        label.set(t, u, tokens[u])?;
    }
    for range in short_pause_spans(fa, space_id, SHORT_PAUSE_MAX) {
        for t in range {
            label.set(t, index[t], blank)?;
        }
    }
    Ok(label)
}
