//! Progressive schedule for the adaptation factor μ and the adversarial
//! trade-off λ.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Training progress p ∈ [0,1] and schedule sharpness θ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScheduleState {
    pub p: f64,
    pub theta: f64,
}

impl ScheduleState {
    pub fn new(p: f64, theta: f64) -> Self {
        Self { p, theta }
    }
}

/// 2/(1+exp(−θp)) − 1, strictly increasing in p, zero at p = 0.
pub fn mu_schedule(sched: &ScheduleState) -> Result<f64> {
    if !(0.0..=1.0).contains(&sched.p) {
        return Err(Error::Precondition(format!(
            "schedule progress must lie in [0,1], got {}",
            sched.p
        )));
    }
    Ok(2.0 / (1.0 + (-sched.theta * sched.p).exp()) - 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_progress_gives_zero() {
        assert_eq!(mu_schedule(&ScheduleState::new(0.0, 10.0)).unwrap(), 0.0);
    }

    #[test]
    fn full_progress_matches_tanh_five() {
        let mu = mu_schedule(&ScheduleState::new(1.0, 10.0)).unwrap();
        assert!((mu - 5.0f64.tanh()).abs() < 1e-12);
        assert!((mu - 0.9999092).abs() < 1e-7);
    }

    #[test]
    fn half_progress_matches_tanh_two_point_five() {
        let mu = mu_schedule(&ScheduleState::new(0.5, 10.0)).unwrap();
        assert!((mu - 2.5f64.tanh()).abs() < 1e-12);
        assert!((mu - 0.986614).abs() < 1e-6);
    }

    #[test]
    fn strictly_monotone_in_progress() {
        let mut prev = -1.0;
        for i in 0..=100 {
            let p = i as f64 / 100.0;
            let mu = mu_schedule(&ScheduleState::new(p, 10.0)).unwrap();
            assert!(mu > prev, "p={p}");
            prev = mu;
        }
    }

    #[test]
    fn rejects_out_of_range_progress() {
        assert!(mu_schedule(&ScheduleState::new(-0.01, 10.0)).is_err());
        assert!(mu_schedule(&ScheduleState::new(1.01, 10.0)).is_err());
    }
}
