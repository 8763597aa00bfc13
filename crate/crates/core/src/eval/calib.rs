//! Linear score calibration s′ = w₀ + w₁·s fitted by minimizing the Cllr
//! objective (equalized-weight logistic regression) with deterministic
//! batch gradient descent and backtracking line search.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const GRAD_TOL: f64 = 1e-8;
const MAX_ITERS: usize = 20_000;
const SCALE_CAP: f64 = 1e3;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct CalibrationModel {
    /// w₀
    pub offset: f64,
    /// w₁; orientation-preserving calibrations keep this positive.
    pub scale: f64,
    pub warnings: Vec<String>,
}

impl CalibrationModel {
    pub fn apply(&self, score: f64) -> f64 {
        self.offset + self.scale * score
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Cllr (bits) of w₀ + w₁·s and its gradient in (w₀, w₁).
fn objective(scores: &[(f64, bool)], nt: f64, nn: f64, w0: f64, w1: f64) -> (f64, f64, f64) {
    let ln2 = std::f64::consts::LN_2;
    let mut f = 0.0;
    let mut g0 = 0.0;
    let mut g1 = 0.0;
    for &(s, is_target) in scores {
        let z = w0 + w1 * s;
        if is_target {
            // log2(1 + e^{-z}) / (2 nt)
            let sp = (-z).max(0.0) + (-(-z).abs()).exp().ln_1p();
            f += sp / (2.0 * nt * ln2);
            let d = -sigmoid(-z) / (2.0 * nt * ln2);
            g0 += d;
            g1 += d * s;
        } else {
            let sp = z.max(0.0) + (-z.abs()).exp().ln_1p();
            f += sp / (2.0 * nn * ln2);
            let d = sigmoid(z) / (2.0 * nn * ln2);
            g0 += d;
            g1 += d * s;
        }
    }
    (f, g0, g1)
}

/// Fits (w₀, w₁) on labeled raw scores.
///
/// The descent runs on standardized scores (zero mean, unit variance) so
/// the two coordinates are comparably scaled; the optimum is the same and
/// the fitted parameters map back exactly.
pub fn fit_linear_calibration(scores: &[(f64, bool)]) -> Result<CalibrationModel> {
    let nt = scores.iter().filter(|&&(_, t)| t).count();
    let nn = scores.len() - nt;
    if nt == 0 || nn == 0 {
        return Err(Error::Precondition("calibration needs both trial classes".into()));
    }
    for &(s, _) in scores {
        if !s.is_finite() {
            return Err(Error::Numeric("scores must be finite".into()));
        }
    }
    let n = scores.len() as f64;
    let mean = scores.iter().map(|&(s, _)| s).sum::<f64>() / n;
    let var = scores.iter().map(|&(s, _)| (s - mean) * (s - mean)).sum::<f64>() / n;
    let sd = var.sqrt().max(1e-12);
    let normed: Vec<(f64, bool)> = scores.iter().map(|&(s, t)| ((s - mean) / sd, t)).collect();

    let (ntf, nnf) = (nt as f64, nn as f64);
    // start at the equivalent of (w0, w1) = (0, 1) in raw coordinates
    let mut w1 = sd;
    let mut w0 = mean * w1 / sd; // = mean, i.e. raw identity
    let mut warnings = Vec::new();
    let (mut f, mut g0, mut g1) = objective(&normed, ntf, nnf, w0, w1);
    let mut converged = false;
    let mut t_init = 1.0f64;
    for _ in 0..MAX_ITERS {
        if g0.abs().max(g1.abs()) < GRAD_TOL {
            converged = true;
            break;
        }
        // backtracking line search along the steepest descent direction,
        // warm-started from the previously accepted step size
        let g2 = g0 * g0 + g1 * g1;
        let mut t = (t_init * 2.0).min(1e6);
        let mut accepted = false;
        for _ in 0..80 {
            let c0 = w0 - t * g0;
            let c1 = w1 - t * g1;
            let (fc, cg0, cg1) = objective(&normed, ntf, nnf, c0, c1);
            if fc <= f - 1e-4 * t * g2 {
                w0 = c0;
                w1 = c1;
                f = fc;
                g0 = cg0;
                g1 = cg1;
                accepted = true;
                t_init = t;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            converged = true; // no descent step exists at f64 resolution
            break;
        }
        if (w1 / sd).abs() > SCALE_CAP {
            w1 = w1.clamp(-SCALE_CAP * sd, SCALE_CAP * sd);
            warnings.push("separation: scale capped at 1e3".into());
            break;
        }
    }
    if !converged && warnings.is_empty() && (g0.abs().max(g1.abs())) >= GRAD_TOL {
        warnings.push("gradient tolerance not reached within iteration budget".into());
    }
    // map back: s' = w0 + w1·(s − mean)/sd
    let scale = w1 / sd;
    let offset = w0 - w1 * mean / sd;
    if scale <= 0.0 {
        warnings.push("calibration reversal: fitted scale is not positive".into());
    }
    Ok(CalibrationModel { offset, scale, warnings })
}
