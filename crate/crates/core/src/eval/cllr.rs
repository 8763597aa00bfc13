//! The log-likelihood-ratio cost and its PAV-optimal floor.
//!
//! Cllr uses base-2 normalization so the zero-information system (all
//! LLRs zero) scores exactly one bit.

use crate::error::{Error, Result};

/// log(1 + e^x) without overflow.
fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// (1/2)·[ (1/N_tar)·Σ_tar log₂(1+e^{−L}) + (1/N_non)·Σ_non log₂(1+e^{L}) ].
pub fn compute_cllr(llrs: &[(f64, bool)]) -> Result<f64> {
    let mut tar_sum = 0.0;
    let mut non_sum = 0.0;
    let mut nt = 0usize;
    let mut nn = 0usize;
    for &(l, is_target) in llrs {
        if is_target {
            tar_sum += softplus(-l);
            nt += 1;
        } else {
            non_sum += softplus(l);
            nn += 1;
        }
    }
    if nt == 0 || nn == 0 {
        return Err(Error::Precondition("cllr needs both trial classes".into()));
    }
    let ln2 = std::f64::consts::LN_2;
    Ok(0.5 * (tar_sum / nt as f64 / ln2 + non_sum / nn as f64 / ln2))
}

/// Weighted block of the isotonic fit.
#[derive(Debug, Clone, Copy)]
struct Block {
    sum: f64,
    weight: f64,
    len: usize,
}

impl Block {
    fn mean(&self) -> f64 {
        self.sum / self.weight
    }
}

/// Pool-adjacent-violators isotonic regression of `y` against position,
/// with weights. Returns the fitted value at every position.
fn pav_fit(y: &[f64], w: &[f64]) -> Vec<f64> {
    let mut blocks: Vec<Block> = Vec::with_capacity(y.len());
    for (&yi, &wi) in y.iter().zip(w.iter()) {
        let mut b = Block { sum: yi * wi, weight: wi, len: 1 };
        while let Some(top) = blocks.last() {
            if top.mean() > b.mean() {
                let top = blocks.pop().unwrap();
                b = Block { sum: top.sum + b.sum, weight: top.weight + b.weight, len: top.len + b.len };
            } else {
                break;
            }
        }
        blocks.push(b);
    }
    let mut out = Vec::with_capacity(y.len());
    for b in blocks {
        for _ in 0..b.len {
            out.push(b.mean());
        }
    }
    out
}

/// The optimal monotone warping of the scores and the cost it attains.
///
/// Ties are merged so the warping stays a function of the score; one
/// virtual target below all scores and one virtual non-target above them
/// keep the warped ratios finite; pooled posteriors convert to LLRs with
/// the trial-set target proportion as the prior. Returns (cllr_min,
/// warped llrs in the input's trial order).
pub fn pav_cllr_min(llrs: &[(f64, bool)]) -> Result<(f64, Vec<f64>)> {
    let nt = llrs.iter().filter(|&&(_, t)| t).count();
    let nn = llrs.len() - nt;
    if nt < 2 || nn < 2 {
        return Err(Error::Precondition("pav needs at least two of each class".into()));
    }
    for &(l, _) in llrs {
        if !l.is_finite() {
            return Err(Error::Numeric("scores must be finite".into()));
        }
    }

    // merge trials sharing a score value
    let mut order: Vec<usize> = (0..llrs.len()).collect();
    order.sort_by(|&a, &b| llrs[a].0.total_cmp(&llrs[b].0));
    let mut groups: Vec<(f64, f64, f64)> = Vec::new(); // (score, target count, total)
    for &i in &order {
        let (s, t) = llrs[i];
        match groups.last_mut() {
            Some(g) if g.0 == s => {
                g.1 += t as u8 as f64;
                g.2 += 1.0;
            }
            _ => groups.push((s, t as u8 as f64, 1.0)),
        }
    }

    // virtual endpoints: target below, non-target above
    let mut y = Vec::with_capacity(groups.len() + 2);
    let mut w = Vec::with_capacity(groups.len() + 2);
    y.push(1.0);
    w.push(1.0);
    for &(_, tar, total) in &groups {
        y.push(tar / total);
        w.push(total);
    }
    y.push(0.0);
    w.push(1.0);
    let fitted = pav_fit(&y, &w);

    let prior = nt as f64 / llrs.len() as f64;
    let prior_logit = (prior / (1.0 - prior)).ln();
    let posterior_of_score: std::collections::BTreeMap<u64, f64> = groups
        .iter()
        .enumerate()
        .map(|(g, &(s, _, _))| (s.to_bits(), fitted[g + 1]))
        .collect();

    let warped: Vec<f64> = llrs
        .iter()
        .map(|&(s, _)| {
            let p = posterior_of_score[&s.to_bits()];
            (p / (1.0 - p)).ln() - prior_logit
        })
        .collect();
    let labeled: Vec<(f64, bool)> =
        warped.iter().zip(llrs.iter()).map(|(&l, &(_, t))| (l, t)).collect();
    let cllr_min = compute_cllr(&labeled)?;
    Ok((cllr_min, warped))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use rand::Rng;

    #[test]
    fn zero_information_reference_is_exactly_one() {
        let llrs = vec![(0.0, true), (0.0, false), (0.0, true), (0.0, false)];
        assert_eq!(compute_cllr(&llrs).unwrap(), 1.0);
    }

    #[test]
    fn hand_case_ln3() {
        let llrs = vec![(3f64.ln(), true), (-(3f64.ln()), false)];
        let got = compute_cllr(&llrs).unwrap();
        let expected = (4.0f64 / 3.0).log2();
        assert!((got - expected).abs() < 1e-15);
        assert!((got - 0.415037).abs() < 1e-6);
    }

    #[test]
    fn perfect_system_limit() {
        let llrs = vec![(700.0, true), (-700.0, false)];
        assert!(compute_cllr(&llrs).unwrap() <= 1e-15);
    }

    #[test]
    fn cllr_is_not_scale_invariant() {
        let llrs = vec![(1.0, true), (0.5, true), (-1.0, false), (-0.2, false)];
        let base = compute_cllr(&llrs).unwrap();
        let scaled: Vec<(f64, bool)> = llrs.iter().map(|&(l, t)| (2.0 * l, t)).collect();
        let got = compute_cllr(&scaled).unwrap();
        assert!((base - got).abs() > 1e-3);
    }

    #[test]
    fn empty_class_is_rejected() {
        assert!(compute_cllr(&[(1.0, true)]).is_err());
    }

    #[test]
    fn perfectly_ordered_scores_reach_near_zero() {
        let mut llrs = Vec::new();
        for i in 0..2000 {
            llrs.push((10.0 + (i % 7) as f64, true));
            llrs.push((-10.0 - (i % 5) as f64, false));
        }
        let (cllr_min, _) = pav_cllr_min(&llrs).unwrap();
        assert!(cllr_min <= 1e-3, "{cllr_min}");
        assert!(cllr_min > 0.0);
    }

    #[test]
    fn identical_scores_carry_no_information() {
        let llrs = vec![(0.3, true), (0.3, false), (0.3, true), (0.3, false)];
        let (cllr_min, warped) = pav_cllr_min(&llrs).unwrap();
        assert_eq!(cllr_min, 1.0);
        assert!(warped.iter().all(|&l| l == 0.0));
    }

    /// Exhaustive isotonic regression: every split of the sequence into
    /// consecutive blocks, each block fitted to its weighted mean, keeping
    /// the best monotone fit.
    fn brute_force_isotonic(y: &[f64], w: &[f64]) -> Vec<f64> {
        let n = y.len();
        let mut best: Option<(f64, Vec<f64>)> = None;
        for mask in 0..(1u32 << (n - 1)) {
            let mut fit = Vec::with_capacity(n);
            let mut start = 0;
            let mut means = Vec::new();
            for i in 0..n {
                let boundary = i == n - 1 || (mask >> i) & 1 == 1;
                if boundary {
                    let sw: f64 = w[start..=i].iter().sum();
                    let sy: f64 = y[start..=i].iter().zip(&w[start..=i]).map(|(&a, &b)| a * b).sum();
                    let mean = sy / sw;
                    means.push(mean);
                    for _ in start..=i {
                        fit.push(mean);
                    }
                    start = i + 1;
                }
            }
            if means.windows(2).any(|p| p[1] < p[0]) {
                continue;
            }
            let sse: f64 = fit.iter().zip(y).zip(w).map(|((&f, &yy), &ww)| ww * (f - yy) * (f - yy)).sum();
            match &best {
                Some((b, _)) if *b <= sse => {}
                _ => best = Some((sse, fit)),
            }
        }
        best.unwrap().1
    }

    #[test]
    fn pav_matches_brute_force_isotonic() {
        let mut rng = stream(71, "pav");
        for _ in 0..30 {
            let n = rng.random_range(2..10);
            let y: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
            let w: Vec<f64> = (0..n).map(|_| rng.random_range(0.5..3.0)).collect();
            let fast = pav_fit(&y, &w);
            let brute = brute_force_isotonic(&y, &w);
            for (a, b) in fast.iter().zip(brute.iter()) {
                assert!((a - b).abs() < 1e-12, "{fast:?} vs {brute:?}");
            }
        }
    }

    #[test]
    fn violating_pair_is_pooled() {
        let llrs = vec![(1.0, true), (2.0, false), (3.0, true)];
        // needs >= 2 per class; pad with well-separated extras
        let llrs = [llrs, vec![(-5.0, false), (6.0, true), (-6.0, false)]].concat();
        let (_, warped) = pav_cllr_min(&llrs).unwrap();
        // scores 1,2,3 sit between the extremes; 1 (target) and 2
        // (non-target) violate and share a pooled posterior
        assert_eq!(warped[0], warped[1]);
        assert!(warped[2] >= warped[1]);
    }

    #[test]
    fn pav_is_invariant_under_monotone_transforms() {
        let mut rng = stream(72, "pav-mono");
        let llrs: Vec<(f64, bool)> = (0..40)
            .map(|i| (rng.random_range(-2.0..2.0) + if i % 2 == 0 { 0.8 } else { 0.0 }, i % 2 == 0))
            .collect();
        let (base, _) = pav_cllr_min(&llrs).unwrap();
        let mapped: Vec<(f64, bool)> = llrs.iter().map(|&(s, t)| (3.0 * s + 1.0, t)).collect();
        let (got, _) = pav_cllr_min(&mapped).unwrap();
        assert!((base - got).abs() < 1e-12);
    }
}
