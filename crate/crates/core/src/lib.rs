//! Multi-source domain adaptation for speaker verification.
//!
//! A desk-scale x-vector style embedding network trained under four
//! regimes (fine-tuning, domain-adversarial training, MMD discrepancy
//! minimization, moment-matching adversarial adaptation), a two-covariance
//! PLDA scoring backend with adaptive s-norm, a forensic evaluation and
//! calibration suite, and a deterministic synthetic multi-domain corpus
//! generator, all wired together by an experiment pipeline.

pub mod corpus;
pub mod error;
pub mod eval;
pub mod losses;
pub mod nn;
pub mod rng;
pub mod train;

pub use error::{Error, ErrorClass, Result};
