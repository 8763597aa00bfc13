//! Corpus specification and domain presets.

use nalgebra::DMatrix;
use ndarray::{Array1, Array2};
use rand::Rng;
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Config-facing description of one acoustic domain; realized into
/// [`DomainParams`] against the corpus seed.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct DomainSpec {
    pub name: String,
    /// Draw a random well-conditioned channel matrix instead of identity.
    pub random_channel: bool,
    /// Additive white noise level; `inf` disables noise.
    pub snr_db: f64,
    /// First-order temporal smoothing coefficient in [0, 1).
    pub smoothing: f64,
}

impl Default for DomainSpec {
    fn default() -> Self {
        Self { name: "clean".into(), random_channel: false, snr_db: f64::INFINITY, smoothing: 0.0 }
    }
}

/// The default four-domain preset: a clean reference, a channel-mismatch
/// booth domain, a reverberant far-field domain and a noisy field domain.
pub fn forensic4_domains() -> Vec<DomainSpec> {
    vec![
        DomainSpec { name: "clean".into(), random_channel: false, snr_db: f64::INFINITY, smoothing: 0.0 },
        DomainSpec { name: "booth".into(), random_channel: true, snr_db: 30.0, smoothing: 0.0 },
        DomainSpec { name: "far_field".into(), random_channel: false, snr_db: 20.0, smoothing: 0.5 },
        DomainSpec { name: "field".into(), random_channel: true, snr_db: 5.0, smoothing: 0.6 },
    ]
}

/// Realized per-domain transform: channel matrix, bias, noise level and
/// temporal smoothing.
#[derive(Debug, Clone, PartialEq)]
pub struct DomainParams {
    pub name: String,
    pub channel: Array2<f64>,
    pub bias: Array1<f64>,
    pub snr_db: f64,
    pub smoothing: f64,
}

impl DomainParams {
    pub fn identity(name: impl Into<String>, dim: usize) -> Self {
        Self {
            name: name.into(),
            channel: Array2::eye(dim),
            bias: Array1::zeros(dim),
            snr_db: f64::INFINITY,
            smoothing: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.channel.nrows();
        if self.channel.ncols() != d || self.bias.len() != d {
            return Err(Error::Config(format!("domain '{}' has mismatched dims", self.name)));
        }
        if !(0.0..1.0).contains(&self.smoothing) {
            return Err(Error::Config(format!(
                "domain '{}' smoothing must lie in [0,1), got {}",
                self.name, self.smoothing
            )));
        }
        let m = DMatrix::from_fn(d, d, |r, c| self.channel[(r, c)]);
        let svd = m.svd(false, false);
        let (max, min) = svd
            .singular_values
            .iter()
            .fold((f64::MIN, f64::MAX), |(mx, mn), &s| (mx.max(s), mn.min(s)));
        if !(min > 0.0) || max / min >= 1e6 {
            return Err(Error::Config(format!(
                "domain '{}' channel matrix is near-singular (condition {:.3e})",
                self.name,
                max / min
            )));
        }
        Ok(())
    }
}

impl DomainSpec {
    /// Realizes the domain transform. Random channels are a seeded random
    /// rotation times per-axis gains in [0.7, 1.4], so the condition
    /// number stays small.
    pub fn realize(&self, dim: usize, rng: &mut ChaCha12Rng) -> Result<DomainParams> {
        let channel = if self.random_channel {
            let g = DMatrix::from_fn(dim, dim, |_, _| rng.sample::<f64, _>(StandardNormal));
            let q = g.qr().q();
            let mut a = Array2::zeros((dim, dim));
            for c in 0..dim {
                let gain: f64 = rng.random_range(0.7..1.4);
                for r in 0..dim {
                    a[(r, c)] = q[(r, c)] * gain;
                }
            }
            a
        } else {
            Array2::eye(dim)
        };
        let params = DomainParams {
            name: self.name.clone(),
            channel,
            bias: Array1::zeros(dim),
            snr_db: self.snr_db,
            smoothing: self.smoothing,
        };
        params.validate()?;
        Ok(params)
    }
}

/// Full corpus specification.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct CorpusSpec {
    pub n_speakers: usize,
    pub utts_per_speaker_per_domain: usize,
    pub feature_dim: usize,
    pub frames_range: (usize, usize),
    pub domains: Vec<DomainSpec>,
    pub seed: u64,
    pub holdout_speakers: usize,
    /// Scale of the latent speaker identity vectors.
    pub speaker_scale: f64,
    /// Scale of the per-utterance offset.
    pub utt_scale: f64,
    /// Per-frame feature noise.
    pub frame_noise: f64,
}

impl Default for CorpusSpec {
    fn default() -> Self {
        Self {
            n_speakers: 75,
            utts_per_speaker_per_domain: 8,
            feature_dim: 20,
            frames_range: (800, 1200),
            domains: forensic4_domains(),
            seed: 42,
            holdout_speakers: 16,
            speaker_scale: 1.0,
            utt_scale: 0.3,
            frame_noise: 1.0,
        }
    }
}

impl CorpusSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_speakers < 2 {
            return Err(Error::Config("need at least 2 speakers".into()));
        }
        if self.holdout_speakers >= self.n_speakers {
            return Err(Error::Config(format!(
                "holdout_speakers {} must be smaller than n_speakers {}",
                self.holdout_speakers, self.n_speakers
            )));
        }
        if self.utts_per_speaker_per_domain < 1 || self.feature_dim < 1 {
            return Err(Error::Config("utterance count and feature dim must be >= 1".into()));
        }
        let (lo, hi) = self.frames_range;
        if lo < 1 || hi < lo {
            return Err(Error::Config("frames_range must satisfy 1 <= min <= max".into()));
        }
        if self.domains.is_empty() {
            return Err(Error::Config("at least one domain required".into()));
        }
        let mut names: Vec<&str> = self.domains.iter().map(|d| d.name.as_str()).collect();
        names.sort_unstable();
        names.dedup();
        if names.len() != self.domains.len() {
            return Err(Error::Config("domain names must be distinct".into()));
        }
        for d in &self.domains {
            if !(0.0..1.0).contains(&d.smoothing) {
                return Err(Error::Config(format!("domain '{}' smoothing out of range", d.name)));
            }
        }
        if self.speaker_scale <= 0.0 || self.utt_scale < 0.0 || self.frame_noise < 0.0 {
            return Err(Error::Config("scales must be positive (utt/frame may be zero)".into()));
        }
        Ok(())
    }

    pub fn n_domains(&self) -> usize {
        self.domains.len()
    }

    pub fn n_train_speakers(&self) -> usize {
        self.n_speakers - self.holdout_speakers
    }
}
