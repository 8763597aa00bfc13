//! Frame sequences and cepstral mean normalization.

use ndarray::Array2;

use crate::error::{Error, Result};

/// A variable-length matrix of per-frame features with utterance, speaker
/// and domain labels. The unit of training and scoring input.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameSequence {
    /// T×D feature matrix.
    pub frames: Array2<f64>,
    pub utterance_id: String,
    pub speaker_id: usize,
    pub domain_id: usize,
}

impl FrameSequence {
    pub fn new(
        frames: Array2<f64>,
        utterance_id: impl Into<String>,
        speaker_id: usize,
        domain_id: usize,
    ) -> Result<Self> {
        if frames.nrows() == 0 {
            return Err(Error::Data("frame sequence must have T >= 1".into()));
        }
        if frames.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data("frame sequence contains non-finite entries".into()));
        }
        Ok(Self { frames, utterance_id: utterance_id.into(), speaker_id, domain_id })
    }

    pub fn n_frames(&self) -> usize {
        self.frames.nrows()
    }

    pub fn dim(&self) -> usize {
        self.frames.ncols()
    }
}

/// Subtracts the mean of a centered sliding window from each frame,
/// per feature dimension. The window is truncated at the edges.
///
/// A window covering the whole utterance (>= 2T−1) degenerates to global
/// mean subtraction.
pub fn sliding_cmn(seq: &FrameSequence, window: usize) -> Result<FrameSequence> {
    if window < 1 {
        return Err(Error::Precondition("cmn window must be >= 1".into()));
    }
    let t = seq.n_frames();
    let d = seq.dim();
    let half = (window - 1) / 2;
    // Prefix sums per dimension give O(T·D) window means.
    let mut prefix = Array2::<f64>::zeros((t + 1, d));
    for i in 0..t {
        for j in 0..d {
            prefix[(i + 1, j)] = prefix[(i, j)] + seq.frames[(i, j)];
        }
    }
    let mut out = seq.frames.clone();
    for i in 0..t {
        let lo = i.saturating_sub(half);
        let hi = (i + half + 1).min(t);
        let len = (hi - lo) as f64;
        for j in 0..d {
            let mean = (prefix[(hi, j)] - prefix[(lo, j)]) / len;
            out[(i, j)] -= mean;
        }
    }
    Ok(FrameSequence { frames: out, ..seq.clone() })
}
