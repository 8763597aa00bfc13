//! Training configuration: the `[optimizer]`, `[run]` and `[method]`
//! sections of the experiment file. Unknown keys are hard errors.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::train::optim::OptimizerConfig;

/// The adaptation method a run trains.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// Unadapted pretrained model.
    Baseline,
    Finetune,
    Dat,
    Mmd,
    M3sda,
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Baseline => "baseline",
            Method::Finetune => "finetune",
            Method::Dat => "dat",
            Method::Mmd => "mmd",
            Method::M3sda => "m3sda",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "baseline" => Method::Baseline,
            "finetune" => Method::Finetune,
            "dat" => Method::Dat,
            "mmd" => Method::Mmd,
            "m3sda" => Method::M3sda,
            other => {
                return Err(Error::Config(format!(
                    "unknown method '{other}' (expected baseline|finetune|dat|mmd|m3sda)"
                )))
            }
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct TrainRunConfig {
    /// Adaptation epochs (T1 for moment matching).
    pub epochs: usize,
    /// Adversarial refinement epochs (T2, moment matching only).
    pub epochs_t2: usize,
    pub batch_size: usize,
    pub segment_len: usize,
    /// Pretraining samples its segment length per batch from this range.
    pub segment_range: Option<(usize, usize)>,
    /// Generator updates per outer iteration in the moment-matching inner
    /// loop.
    pub inner_generator_steps: usize,
    pub seed: u64,
    /// Extractor layers unfrozen during adaptation.
    pub layer_selection: Vec<String>,
    /// Sharpness θ of the progressive schedule.
    pub theta: f64,
    /// Pins λ instead of following the schedule.
    pub lambda_override: Option<f64>,
    /// Pins μ instead of following the schedule.
    pub mu_override: Option<f64>,
    /// Cap on frame rows per domain entering the frame-level MMD.
    pub f5_subsample: usize,
}

impl Default for TrainRunConfig {
    fn default() -> Self {
        Self {
            epochs: 40,
            epochs_t2: 40,
            batch_size: 64,
            segment_len: 400,
            segment_range: None,
            inner_generator_steps: 4,
            seed: 42,
            layer_selection: vec!["F5".into(), "fc1".into()],
            theta: 10.0,
            lambda_override: None,
            mu_override: None,
            f5_subsample: 64,
        }
    }
}

impl TrainRunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size < 1 {
            return Err(Error::Config("batch_size must be >= 1".into()));
        }
        if self.inner_generator_steps < 1 {
            return Err(Error::Config("inner_generator_steps must be >= 1".into()));
        }
        if self.segment_len < 1 {
            return Err(Error::Config("segment_len must be >= 1".into()));
        }
        if let Some((lo, hi)) = self.segment_range {
            if lo < 1 || hi < lo {
                return Err(Error::Config("segment_range must satisfy 1 <= lo <= hi".into()));
            }
        }
        if self.theta <= 0.0 {
            return Err(Error::Config("theta must be > 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct MethodConfig {
    pub name: String,
}

/// A standalone training configuration document.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub optimizer: OptimizerConfig,
    pub run: TrainRunConfig,
    pub method: MethodConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            optimizer: OptimizerConfig::default(),
            run: TrainRunConfig::default(),
            method: MethodConfig { name: "baseline".into() },
        }
    }
}

impl TrainConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: TrainConfig =
            toml::from_str(text).map_err(|e| Error::Config(format!("training config: {e}")))?;
        cfg.optimizer.validate()?;
        cfg.run.validate()?;
        Method::parse(&cfg.method.name)?;
        Ok(cfg)
    }
}
