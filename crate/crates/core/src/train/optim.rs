//! Learning-rate schedule and the Adam optimizer.

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{LayerGrad, LayerParams, LayerSpec};

const ADAM_EPS: f64 = 1e-8;

/// Adam-style adaptive moments with the decaying learning-rate schedule
/// η_p = η₀ / (1 + α·p)^β and optional warm-up.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerConfig {
    /// η₀
    pub base_lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    /// α in the decay formula.
    pub lr_decay: f64,
    /// β in the decay formula.
    pub lr_exponent: f64,
    /// Steps of linear ramp from 0 to η₀ before the decay applies.
    pub warmup_steps: usize,
    /// Separate base learning rate for classifier heads/subnets, when set.
    pub head_lr: Option<f64>,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            base_lr: 1e-4,
            beta1: 0.9,
            beta2: 0.98,
            lr_decay: 10.0,
            lr_exponent: 0.75,
            warmup_steps: 0,
            head_lr: None,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.base_lr > 0.0) {
            return Err(Error::Config("base_lr must be > 0".into()));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0 < b && b < 1.0) {
                return Err(Error::Config(format!("{name} must lie in (0,1)")));
            }
        }
        if self.lr_decay < 0.0 || self.lr_exponent < 0.0 {
            return Err(Error::Config("lr_decay and lr_exponent must be >= 0".into()));
        }
        Ok(())
    }

    /// Head base rate, falling back to the extractor rate.
    pub fn head_base_lr(&self) -> f64 {
        self.head_lr.unwrap_or(self.base_lr)
    }
}

/// η₀ / (1 + α·p)^β at progress p ∈ [0, 1].
pub fn lr_schedule(cfg: &OptimizerConfig, p: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Precondition(format!("schedule progress must lie in [0,1], got {p}")));
    }
    Ok(cfg.base_lr / (1.0 + cfg.lr_decay * p).powf(cfg.lr_exponent))
}

/// Linear ramp factor for warm-up; `step` is 1-based.
pub fn warmup_factor(step: usize, warmup_steps: usize) -> f64 {
    if warmup_steps == 0 {
        1.0
    } else {
        (step as f64 / warmup_steps as f64).min(1.0)
    }
}

/// Training progress over a fixed number of update steps. A step counts
/// as completed at the moment its update applies, so the progress fed to
/// the schedules is completed_steps/total_steps and reaches exactly 1 at
/// the final step.
#[derive(Debug, Clone, Copy)]
pub struct Progress {
    total: usize,
    done: usize,
}

impl Progress {
    pub fn new(total: usize) -> Self {
        Self { total: total.max(1), done: 0 }
    }

    /// Advances one step and returns the new progress.
    pub fn tick(&mut self) -> f64 {
        self.done += 1;
        self.done as f64 / self.total as f64
    }

    pub fn done(&self) -> usize {
        self.done
    }
}

#[derive(Debug, Clone)]
struct Moments {
    m_w: Array2<f64>,
    v_w: Array2<f64>,
    m_b: Array1<f64>,
    v_b: Array1<f64>,
}

/// Adam over one parameter group (a layer stack). Frozen layers are
/// skipped entirely: their values and their moments never move.
#[derive(Debug, Clone)]
pub struct Adam {
    beta1: f64,
    beta2: f64,
    t: u64,
    states: Vec<Option<Moments>>,
}

impl Adam {
    pub fn new(cfg: &OptimizerConfig, specs: &[LayerSpec]) -> Self {
        let states = specs
            .iter()
            .map(|s| {
                s.has_params().then(|| Moments {
                    m_w: Array2::zeros((s.out_dim, s.weight_cols())),
                    v_w: Array2::zeros((s.out_dim, s.weight_cols())),
                    m_b: Array1::zeros(s.out_dim),
                    v_b: Array1::zeros(s.out_dim),
                })
            })
            .collect();
        Self { beta1: cfg.beta1, beta2: cfg.beta2, t: 0, states }
    }

    /// One update over the trainable layers of the group.
    pub fn step(
        &mut self,
        specs: &[LayerSpec],
        params: &mut [LayerParams],
        grads: &[LayerGrad],
        lr: f64,
    ) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for (l, spec) in specs.iter().enumerate() {
            if !spec.trainable || !spec.has_params() {
                continue;
            }
            let st = self.states[l].as_mut().expect("param layer has moments");
            let g = &grads[l];
            for ((theta, m), (v, grad)) in params[l]
                .weight
                .iter_mut()
                .zip(st.m_w.iter_mut())
                .zip(st.v_w.iter_mut().zip(g.weight.iter()))
            {
                *m = self.beta1 * *m + (1.0 - self.beta1) * grad;
                *v = self.beta2 * *v + (1.0 - self.beta2) * grad * grad;
                *theta -= lr * (*m / bc1) / ((*v / bc2).sqrt() + ADAM_EPS);
            }
            for ((theta, m), (v, grad)) in params[l]
                .bias
                .iter_mut()
                .zip(st.m_b.iter_mut())
                .zip(st.v_b.iter_mut().zip(g.bias.iter()))
            {
                *m = self.beta1 * *m + (1.0 - self.beta1) * grad;
                *v = self.beta2 * *v + (1.0 - self.beta2) * grad * grad;
                *theta -= lr * (*m / bc1) / ((*v / bc2).sqrt() + ADAM_EPS);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Activation;

    #[test]
    fn schedule_matches_stated_defaults() {
        let cfg = OptimizerConfig::default();
        assert_eq!(lr_schedule(&cfg, 0.0).unwrap(), 1e-4);
        let end = lr_schedule(&cfg, 1.0).unwrap();
        assert!((end - 1e-4 / 11f64.powf(0.75)).abs() < 1e-18);
        assert!((end - 1.6556e-5).abs() < 1e-9);
    }

    #[test]
    fn zero_decay_is_constant() {
        let cfg = OptimizerConfig { lr_decay: 0.0, ..Default::default() };
        for p in [0.0, 0.25, 0.5, 1.0] {
            assert_eq!(lr_schedule(&cfg, p).unwrap(), cfg.base_lr);
        }
    }

    #[test]
    fn progress_out_of_range_is_rejected() {
        let cfg = OptimizerConfig::default();
        assert!(lr_schedule(&cfg, -0.1).is_err());
        assert!(lr_schedule(&cfg, 1.1).is_err());
    }

    #[test]
    fn warmup_ramps_then_saturates() {
        assert_eq!(warmup_factor(1, 0), 1.0);
        assert_eq!(warmup_factor(1, 4), 0.25);
        assert_eq!(warmup_factor(4, 4), 1.0);
        assert_eq!(warmup_factor(9, 4), 1.0);
    }

    #[test]
    fn progress_reaches_exactly_one() {
        let mut p = Progress::new(7);
        let mut last = 0.0;
        for _ in 0..7 {
            let v = p.tick();
            assert!(v > last);
            last = v;
        }
        assert_eq!(last, 1.0);
    }

    #[test]
    fn frozen_layer_is_bit_invariant_under_steps() {
        let mut spec = LayerSpec::dense("d", 2, 2, Activation::None);
        spec.trainable = false;
        let specs = vec![spec];
        let mut params = vec![LayerParams {
            weight: ndarray::arr2(&[[1.0, 2.0], [3.0, 4.0]]),
            bias: ndarray::arr1(&[0.5, -0.5]),
        }];
        let before = params[0].clone();
        let grads = vec![LayerGrad {
            weight: ndarray::arr2(&[[1.0, 1.0], [1.0, 1.0]]),
            bias: ndarray::arr1(&[1.0, 1.0]),
        }];
        let mut adam = Adam::new(&OptimizerConfig::default(), &specs);
        for _ in 0..25 {
            adam.step(&specs, &mut params, &grads, 0.1);
        }
        for (a, b) in params[0].weight.iter().zip(before.weight.iter()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        for (a, b) in params[0].bias.iter().zip(before.bias.iter()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn adam_descends_a_quadratic() {
        let spec = LayerSpec::dense("d", 1, 1, Activation::None);
        let specs = vec![spec];
        let mut params = vec![LayerParams {
            weight: ndarray::arr2(&[[3.0]]),
            bias: ndarray::arr1(&[0.0]),
        }];
        let mut adam = Adam::new(&OptimizerConfig::default(), &specs);
        for _ in 0..3000 {
            // L = ½w² → dL/dw = w
            let g = vec![LayerGrad {
                weight: ndarray::arr2(&[[params[0].weight[(0, 0)]]]),
                bias: ndarray::arr1(&[0.0]),
            }];
            adam.step(&specs, &mut params, &g, 1e-2);
        }
        assert!(params[0].weight[(0, 0)].abs() < 1e-2);
    }
}
