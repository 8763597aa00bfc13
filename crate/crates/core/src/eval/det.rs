//! Detection error trade-off curves and the equal error rate.

use crate::error::{Error, Result};

/// One operating point of the accept-iff-score≥threshold rule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetPoint {
    pub threshold: f64,
    pub p_miss: f64,
    pub p_fa: f64,
}

/// Operating points ordered by increasing threshold, from (−∞ → miss 0,
/// fa 1) to (+∞ → miss 1, fa 0).
#[derive(Debug, Clone)]
pub struct DetCurve {
    pub points: Vec<DetPoint>,
}

impl DetCurve {
    pub fn check_monotone(&self) -> Result<()> {
        for w in self.points.windows(2) {
            if w[1].p_miss < w[0].p_miss || w[1].p_fa > w[0].p_fa {
                return Err(Error::Numeric("det curve is not monotone".into()));
            }
        }
        for p in &self.points {
            if !(0.0..=1.0).contains(&p.p_miss) || !(0.0..=1.0).contains(&p.p_fa) {
                return Err(Error::Numeric("det probabilities out of [0,1]".into()));
            }
        }
        Ok(())
    }
}

fn split_classes(scores: &[(f64, bool)]) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut targets = Vec::new();
    let mut nontargets = Vec::new();
    for &(s, is_target) in scores {
        if !s.is_finite() {
            return Err(Error::Numeric("scores must be finite".into()));
        }
        if is_target {
            targets.push(s);
        } else {
            nontargets.push(s);
        }
    }
    if targets.is_empty() || nontargets.is_empty() {
        return Err(Error::Precondition(
            "need at least one target and one non-target score".into(),
        ));
    }
    Ok((targets, nontargets))
}

/// Sweeps the decision threshold across every distinct score.
pub fn compute_det(scores: &[(f64, bool)]) -> Result<DetCurve> {
    let (mut targets, mut nontargets) = split_classes(scores)?;
    targets.sort_by(f64::total_cmp);
    nontargets.sort_by(f64::total_cmp);
    let nt = targets.len() as f64;
    let nn = nontargets.len() as f64;

    let mut thresholds: Vec<f64> = scores.iter().map(|&(s, _)| s).collect();
    thresholds.sort_by(f64::total_cmp);
    thresholds.dedup();

    let mut points = Vec::with_capacity(thresholds.len() + 2);
    points.push(DetPoint { threshold: f64::NEG_INFINITY, p_miss: 0.0, p_fa: 1.0 });
    for &th in &thresholds {
        // misses: targets strictly below; false alarms: non-targets at or above
        let misses = targets.partition_point(|&s| s < th);
        let fa = nontargets.len() - nontargets.partition_point(|&s| s < th);
        points.push(DetPoint { threshold: th, p_miss: misses as f64 / nt, p_fa: fa as f64 / nn });
    }
    points.push(DetPoint { threshold: f64::INFINITY, p_miss: 1.0, p_fa: 0.0 });
    let curve = DetCurve { points };
    curve.check_monotone()?;
    Ok(curve)
}

/// The operating value where P_miss = P_FA, linearly interpolated between
/// adjacent DET points when no exact crossing exists.
pub fn compute_eer(scores: &[(f64, bool)]) -> Result<f64> {
    let curve = compute_det(scores)?;
    let diff = |p: &DetPoint| p.p_miss - p.p_fa;
    let mut prev = curve.points[0];
    for &p in &curve.points[1..] {
        let d = diff(&p);
        if d == 0.0 {
            return Ok(p.p_miss);
        }
        if d > 0.0 {
            let d0 = diff(&prev);
            if d0 == 0.0 {
                return Ok(prev.p_miss);
            }
            let alpha = -d0 / (d - d0);
            return Ok(prev.p_miss + alpha * (p.p_miss - prev.p_miss));
        }
        prev = p;
    }
    Ok(1.0)
}
