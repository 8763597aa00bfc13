//! Squared maximum mean discrepancy between two sample sets, with exact
//! gradients w.r.t. both sample matrices.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::losses::kernel::KernelConfig;

/// The biased V-statistic
///
/// `(1/L²)ΣΣ k(a,a′) − (2/LM)ΣΣ k(a,b) + (1/M²)ΣΣ k(b,b′)`
///
/// over the rows of `xa` (L×D) and `xb` (M×D). The cross term is summed in
/// sorted-value order, which makes the estimator exactly symmetric in its
/// arguments.
pub fn mmd_squared(xa: &Array2<f64>, xb: &Array2<f64>, cfg: &KernelConfig) -> Result<f64> {
    let (value, _, _, _) = mmd_squared_impl(xa, xb, cfg, false)?;
    Ok(value)
}

/// As [`mmd_squared`], also returning ∂MMD²/∂xa, ∂MMD²/∂xb and the
/// resolved bandwidth. The bandwidth is treated as a constant by the
/// gradient (the median heuristic resolves first).
pub fn mmd_squared_with_grad(
    xa: &Array2<f64>,
    xb: &Array2<f64>,
    cfg: &KernelConfig,
) -> Result<(f64, Array2<f64>, Array2<f64>, f64)> {
    let (value, ga, gb, sigma) = mmd_squared_impl(xa, xb, cfg, true)?;
    Ok((value, ga.unwrap(), gb.unwrap(), sigma))
}

fn mmd_squared_impl(
    xa: &Array2<f64>,
    xb: &Array2<f64>,
    cfg: &KernelConfig,
    with_grad: bool,
) -> Result<(f64, Option<Array2<f64>>, Option<Array2<f64>>, f64)> {
    let l = xa.nrows();
    let m = xb.nrows();
    if l == 0 || m == 0 {
        return Err(Error::Precondition("mmd requires non-empty sample sets".into()));
    }
    if xa.ncols() != xb.ncols() {
        return Err(Error::Shape(format!(
            "mmd sample dims differ: {} vs {}",
            xa.ncols(),
            xb.ncols()
        )));
    }
    let sigma = cfg.resolve(&[xa.view(), xb.view()])?;
    let inv2s2 = 1.0 / (2.0 * sigma * sigma);

    let row = |x: &Array2<f64>, i: usize| -> Vec<f64> { x.row(i).to_vec() };
    let a: Vec<Vec<f64>> = (0..l).map(|i| row(xa, i)).collect();
    let b: Vec<Vec<f64>> = (0..m).map(|j| row(xb, j)).collect();

    // All three double sums run in sorted-value order; this makes the
    // estimator exactly symmetric and exactly zero on identical multisets.
    let sorted_sum = |vals: &mut Vec<f64>| -> f64 {
        vals.sort_by(f64::total_cmp);
        vals.iter().sum()
    };
    let mut buf = Vec::with_capacity(l.max(m) * l.max(m));
    for i in 0..l {
        for i2 in 0..l {
            buf.push(kval(&a[i], &a[i2], inv2s2));
        }
    }
    let s_aa = sorted_sum(&mut buf);
    buf.clear();
    for j in 0..m {
        for j2 in 0..m {
            buf.push(kval(&b[j], &b[j2], inv2s2));
        }
    }
    let s_bb = sorted_sum(&mut buf);
    buf.clear();
    for ai in &a {
        for bj in &b {
            buf.push(kval(ai, bj, inv2s2));
        }
    }
    let s_ab = sorted_sum(&mut buf);

    let lf = l as f64;
    let mf = m as f64;
    let value = s_aa / (lf * lf) - 2.0 * s_ab / (lf * mf) + s_bb / (mf * mf);

    if !with_grad {
        return Ok((value, None, None, sigma));
    }

    // ∂k(x,y)/∂x = −k(x,y)·(x−y)/σ²
    let inv_s2 = 1.0 / (sigma * sigma);
    let d = xa.ncols();
    let mut ga = Array2::zeros((l, d));
    let mut gb = Array2::zeros((m, d));
    for u in 0..l {
        for i2 in 0..l {
            let k = kval(&a[u], &a[i2], inv2s2);
            let c = 2.0 / (lf * lf) * k * (-inv_s2);
            for t in 0..d {
                ga[(u, t)] += c * (a[u][t] - a[i2][t]);
            }
        }
        for j in 0..m {
            let k = kval(&a[u], &b[j], inv2s2);
            let c = -2.0 / (lf * mf) * k * (-inv_s2);
            for t in 0..d {
                ga[(u, t)] += c * (a[u][t] - b[j][t]);
            }
        }
    }
    for v in 0..m {
        for j2 in 0..m {
            let k = kval(&b[v], &b[j2], inv2s2);
            let c = 2.0 / (mf * mf) * k * (-inv_s2);
            for t in 0..d {
                gb[(v, t)] += c * (b[v][t] - b[j2][t]);
            }
        }
        for i in 0..l {
            let k = kval(&b[v], &a[i], inv2s2);
            let c = -2.0 / (lf * mf) * k * (-inv_s2);
            for t in 0..d {
                gb[(v, t)] += c * (b[v][t] - a[i][t]);
            }
        }
    }
    Ok((value, Some(ga), Some(gb), sigma))
}

#[inline]
fn kval(x: &[f64], y: &[f64], inv2s2: f64) -> f64 {
    let mut d2 = 0.0;
    for (a, b) in x.iter().zip(y.iter()) {
        let diff = a - b;
        d2 += diff * diff;
    }
    (-d2 * inv2s2).exp()
}

/// MMD² between two classifier posterior sets, rows as samples. Rows must
/// be probability vectors (each sums to 1 within 1e−6).
pub fn classifier_discrepancy(probs_a: &Array2<f64>, probs_b: &Array2<f64>, cfg: &KernelConfig) -> Result<f64> {
    check_rows_normalized(probs_a)?;
    check_rows_normalized(probs_b)?;
    mmd_squared(probs_a, probs_b, cfg)
}

/// As [`classifier_discrepancy`], with gradients w.r.t. both posterior
/// matrices.
pub fn classifier_discrepancy_with_grad(
    probs_a: &Array2<f64>,
    probs_b: &Array2<f64>,
    cfg: &KernelConfig,
) -> Result<(f64, Array2<f64>, Array2<f64>, f64)> {
    check_rows_normalized(probs_a)?;
    check_rows_normalized(probs_b)?;
    mmd_squared_with_grad(probs_a, probs_b, cfg)
}

fn check_rows_normalized(probs: &Array2<f64>) -> Result<()> {
    for (i, row) in probs.rows().into_iter().enumerate() {
        let s: f64 = row.sum();
        if (s - 1.0).abs() > 1e-6 {
            return Err(Error::Numeric(format!(
                "posterior row {i} sums to {s}, expected 1 within 1e-6"
            )));
        }
    }
    Ok(())
}
