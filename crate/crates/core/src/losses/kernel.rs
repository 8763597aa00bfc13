//! RBF kernel and bandwidth selection.

use ndarray::ArrayView2;

use crate::error::{Error, Result};

/// Lower bound on a resolved bandwidth.
pub const SIGMA_FLOOR: f64 = 1e-6;

/// Bandwidth of the Gaussian kernel: a fixed σ, or the median heuristic
/// (median pairwise distance over the pooled mini-batch, recomputed per
/// batch, floored at [`SIGMA_FLOOR`]).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Bandwidth {
    Fixed(f64),
    Median,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelConfig {
    pub bandwidth: Bandwidth,
}

impl KernelConfig {
    pub fn fixed(sigma: f64) -> Self {
        Self { bandwidth: Bandwidth::Fixed(sigma) }
    }

    pub fn median() -> Self {
        Self { bandwidth: Bandwidth::Median }
    }

    /// Resolves the bandwidth against a pooled sample set.
    pub fn resolve(&self, pooled: &[ArrayView2<'_, f64>]) -> Result<f64> {
        match self.bandwidth {
            Bandwidth::Fixed(sigma) => {
                if !(sigma > 0.0) || !sigma.is_finite() {
                    return Err(Error::Config(format!("kernel bandwidth must be positive, got {sigma}")));
                }
                Ok(sigma)
            }
            Bandwidth::Median => Ok(median_pairwise_distance(pooled).max(SIGMA_FLOOR)),
        }
    }
}

/// exp(−‖a−b‖² / (2σ²)).
pub fn rbf(a: &[f64], b: &[f64], sigma: f64) -> f64 {
    (-squared_distance(a, b) / (2.0 * sigma * sigma)).exp()
}

/// The kernel operation on two vectors. With the median heuristic and no
/// wider batch in sight, the bandwidth degenerates to the distance of the
/// pair itself.
pub fn rbf_kernel(a: &[f64], b: &[f64], cfg: &KernelConfig) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Shape(format!("kernel inputs have dims {} and {}", a.len(), b.len())));
    }
    let sigma = match cfg.bandwidth {
        Bandwidth::Fixed(s) => {
            if !(s > 0.0) || !s.is_finite() {
                return Err(Error::Config(format!("kernel bandwidth must be positive, got {s}")));
            }
            s
        }
        Bandwidth::Median => squared_distance(a, b).sqrt().max(SIGMA_FLOOR),
    };
    Ok(rbf(a, b, sigma))
}

pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b.iter()).map(|(&x, &y)| (x - y) * (x - y)).sum()
}

/// Lower median of all pairwise Euclidean distances across the pooled
/// rows. Zero when fewer than two rows exist.
fn median_pairwise_distance(pooled: &[ArrayView2<'_, f64>]) -> f64 {
    let mut rows: Vec<&[f64]> = Vec::new();
    for m in pooled {
        for r in m.rows() {
            rows.push(r.to_slice().expect("contiguous row"));
        }
    }
    let n = rows.len();
    if n < 2 {
        return 0.0;
    }
    let mut dists = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            dists.push(squared_distance(rows[i], rows[j]).sqrt());
        }
    }
    dists.sort_by(f64::total_cmp);
    dists[(dists.len() - 1) / 2]
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::arr2;

    #[test]
    fn equal_inputs_give_one() {
        let a = [0.3, -1.2, 4.0];
        assert_eq!(rbf_kernel(&a, &a, &KernelConfig::fixed(0.7)).unwrap(), 1.0);
    }

    #[test]
    fn distance_at_two_sigma_squared_gives_inv_e() {
        // ‖a−b‖² = 2σ² with σ = 1.5
        let sigma = 1.5f64;
        let d = (2.0 * sigma * sigma).sqrt();
        let a = [0.0];
        let b = [d];
        let got = rbf_kernel(&a, &b, &KernelConfig::fixed(sigma)).unwrap();
        assert!((got - (-1.0f64).exp()).abs() < 1e-12, "{got}");
        assert!((got - 0.367879).abs() < 1e-6);
    }

    #[test]
    fn kernel_increases_with_bandwidth() {
        let a = [1.0, 0.0];
        let b = [0.0, 2.0];
        let mut prev = rbf_kernel(&a, &b, &KernelConfig::fixed(0.25)).unwrap();
        for sigma in [0.5, 1.0, 2.0, 8.0, 64.0] {
            let k = rbf_kernel(&a, &b, &KernelConfig::fixed(sigma)).unwrap();
            assert!(k > prev, "sigma {sigma}: {k} <= {prev}");
            prev = k;
        }
        assert!(prev < 1.0 && prev > 0.999);
    }

    #[test]
    fn rejects_dim_mismatch_and_bad_sigma() {
        assert!(rbf_kernel(&[1.0], &[1.0, 2.0], &KernelConfig::fixed(1.0)).is_err());
        assert!(rbf_kernel(&[1.0], &[2.0], &KernelConfig::fixed(0.0)).is_err());
        assert!(rbf_kernel(&[1.0], &[2.0], &KernelConfig::fixed(-1.0)).is_err());
    }

    #[test]
    fn median_heuristic_floors_tiny_distances() {
        let m = arr2(&[[0.0, 0.0], [0.0, 0.0], [0.0, 0.0]]);
        let cfg = KernelConfig::median();
        let sigma = cfg.resolve(&[m.view()]).unwrap();
        assert_eq!(sigma, SIGMA_FLOOR);
    }

    #[test]
    fn median_heuristic_takes_lower_median() {
        let m = arr2(&[[0.0], [1.0], [3.0]]);
        // pairwise distances: 1, 3, 2 → sorted [1, 2, 3] → lower median 2
        let sigma = KernelConfig::median().resolve(&[m.view()]).unwrap();
        assert_eq!(sigma, 2.0);
    }
}
