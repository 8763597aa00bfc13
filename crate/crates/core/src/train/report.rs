//! Per-run training reports.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::losses::LossBreakdown;

/// Loss accounting for one epoch. Sums run over the epoch's update steps;
/// `last` is the final step's full breakdown, for which
/// `composite = mu·mmd + cls` (or `speaker − λ·domain`) holds exactly.
/// For phase-2 moment-matching epochs the documented identity is
/// `composite = cls_loss − mmd_loss` with `mmd_loss` the summed
/// classifier-pair discrepancy.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    /// 1 for the plain/discrepancy phase, 2 for the adversarial
    /// refinement phase.
    pub phase: u8,
    pub steps: usize,
    /// Σ classification (or speaker) loss over the epoch's steps.
    pub cls_sum: f64,
    /// Σ unweighted adaptation term (MMD loss or domain loss).
    pub adapt_sum: f64,
    /// Σ of the schedule-weighted adaptation term, μ_k·mmd_k or λ_k·J_d,k.
    pub weighted_adapt_sum: f64,
    /// Σ per-step composite objective.
    pub composite_sum: f64,
    pub mu_last: f64,
    pub lambda_last: f64,
    pub lr_last: f64,
    pub last: LossBreakdown,
}

/// History and outcome of one training run. Wall-clock time is runtime
/// diagnostics and stays out of the serialized document so reports stay
/// byte-reproducible.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainReport {
    pub method: String,
    pub seed: u64,
    pub epochs: Vec<EpochStats>,
    /// Total generator updates performed by the moment-matching inner
    /// loop; zero for other trainers.
    pub generator_updates: usize,
    /// Reference to the checkpoint this run produced, once saved.
    pub checkpoint: Option<String>,
    #[serde(skip)]
    pub wall_seconds: f64,
}

impl TrainReport {
    pub fn new(method: impl Into<String>, seed: u64) -> Self {
        Self {
            method: method.into(),
            seed,
            epochs: Vec::new(),
            generator_updates: 0,
            checkpoint: None,
            wall_seconds: 0.0,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Data(format!("report encode: {e}")))
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()? + "\n")?;
        Ok(())
    }
}
