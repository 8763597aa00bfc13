//! In-memory corpus representation shared by the trainers, extractors and
//! the evaluation protocol.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::nn::seq::{sliding_cmn, FrameSequence};

/// One utterance. Frames are stored single-precision (the on-disk feature
/// precision); training widens sampled segments to f64, which is exact.
#[derive(Debug, Clone, PartialEq)]
pub struct Utterance {
    pub utt_id: String,
    pub speaker_id: usize,
    pub domain_id: usize,
    pub frames: Array2<f32>,
}

impl Utterance {
    pub fn n_frames(&self) -> usize {
        self.frames.nrows()
    }

    /// The utterance as a double-precision frame sequence.
    pub fn to_sequence(&self) -> FrameSequence {
        FrameSequence {
            frames: self.frames.mapv(|v| v as f64),
            utterance_id: self.utt_id.clone(),
            speaker_id: self.speaker_id,
            domain_id: self.domain_id,
        }
    }

    /// A contiguous window of `len` frames starting at `start`, widened to
    /// f64.
    pub fn segment(&self, start: usize, len: usize) -> Array2<f64> {
        self.frames.slice(ndarray::s![start..start + len, ..]).mapv(|v| v as f64)
    }
}

/// A speaker-disjoint train/eval corpus over N acoustic domains.
#[derive(Debug, Clone, Default)]
pub struct Corpus {
    pub train: Vec<Utterance>,
    pub eval: Vec<Utterance>,
    pub n_domains: usize,
    /// Train speaker labels are compact: 0..n_train_speakers.
    pub n_train_speakers: usize,
    pub feature_dim: usize,
    pub domain_names: Vec<String>,
}

impl Corpus {
    /// Asserts the open-set protocol: train and eval speaker sets are
    /// disjoint.
    pub fn check_speaker_disjoint(&self) -> Result<()> {
        let train: std::collections::BTreeSet<_> = self.train.iter().map(|u| u.speaker_id).collect();
        let eval: std::collections::BTreeSet<_> = self.eval.iter().map(|u| u.speaker_id).collect();
        if train.intersection(&eval).next().is_some() {
            return Err(Error::Data("train and eval speaker sets overlap".into()));
        }
        Ok(())
    }

    /// Applies sliding-window cepstral mean normalization to every
    /// utterance in place.
    pub fn apply_cmn(&mut self, window: usize) -> Result<()> {
        for utt in self.train.iter_mut().chain(self.eval.iter_mut()) {
            let seq = utt.to_sequence();
            let normed = sliding_cmn(&seq, window)?;
            utt.frames = normed.frames.mapv(|v| v as f32);
        }
        Ok(())
    }

    pub fn domain_name(&self, d: usize) -> String {
        self.domain_names.get(d).cloned().unwrap_or_else(|| format!("d{d}"))
    }
}
