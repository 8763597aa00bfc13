//! Linear discriminant analysis for embedding dimensionality reduction.

use nalgebra::DMatrix;
use ndarray::{Array1, Array2};

use crate::error::{Error, Result};

/// Mean-centering plus a projection whose rows are the discriminant
/// directions (within-class whitened).
#[derive(Debug, Clone, PartialEq)]
pub struct LdaTransform {
    pub mean: Array1<f64>,
    /// out_dim × in_dim.
    pub projection: Array2<f64>,
    /// Whether the within-class scatter needed a ridge to factorize.
    pub regularized: bool,
}

impl LdaTransform {
    pub fn in_dim(&self) -> usize {
        self.projection.ncols()
    }

    pub fn out_dim(&self) -> usize {
        self.projection.nrows()
    }

    pub fn apply(&self, x: &Array1<f64>) -> Array1<f64> {
        self.projection.dot(&(x - &self.mean))
    }

    pub fn apply_rows(&self, rows: &Array2<f64>) -> Array2<f64> {
        let centered = rows - &self.mean.clone().insert_axis(ndarray::Axis(0));
        centered.dot(&self.projection.t())
    }
}

fn to_na(m: &Array2<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(m.nrows(), m.ncols(), |r, c| m[(r, c)])
}

/// Fits the transform maximizing the between/within scatter ratio. The
/// output dimension is clamped to min(requested, classes − 1, in_dim).
/// A singular within-class scatter falls back to a diagonal ridge of
/// 1e−6·trace/D, reported through `regularized`.
pub fn fit_lda(
    embeddings: &Array2<f64>,
    labels: &[usize],
    requested_dim: usize,
) -> Result<LdaTransform> {
    let n = embeddings.nrows();
    let d = embeddings.ncols();
    if labels.len() != n {
        return Err(Error::Shape(format!("{n} embeddings for {} labels", labels.len())));
    }
    let mut counts: std::collections::BTreeMap<usize, usize> = std::collections::BTreeMap::new();
    for &l in labels {
        *counts.entry(l).or_default() += 1;
    }
    if counts.len() < 2 {
        return Err(Error::Precondition("lda needs at least 2 classes".into()));
    }
    if let Some((&cls, &c)) = counts.iter().find(|&(_, &c)| c < 2) {
        return Err(Error::Precondition(format!("class {cls} has {c} samples, needs at least 2")));
    }
    let classes: Vec<usize> = counts.keys().copied().collect();
    let n_classes = classes.len();

    let mean = embeddings.sum_axis(ndarray::Axis(0)) / n as f64;
    let mut class_means: std::collections::BTreeMap<usize, Array1<f64>> = classes
        .iter()
        .map(|&c| (c, Array1::zeros(d)))
        .collect();
    for (i, &l) in labels.iter().enumerate() {
        *class_means.get_mut(&l).unwrap() += &embeddings.row(i).to_owned();
    }
    for (&c, m) in class_means.iter_mut() {
        *m /= counts[&c] as f64;
    }

    let mut sw = Array2::<f64>::zeros((d, d));
    for (i, &l) in labels.iter().enumerate() {
        let dev = &embeddings.row(i).to_owned() - &class_means[&l];
        for r in 0..d {
            for c in 0..d {
                sw[(r, c)] += dev[r] * dev[c];
            }
        }
    }
    let mut sb = Array2::<f64>::zeros((d, d));
    for &cls in &classes {
        let dev = &class_means[&cls] - &mean;
        let w = counts[&cls] as f64;
        for r in 0..d {
            for c in 0..d {
                sb[(r, c)] += w * dev[r] * dev[c];
            }
        }
    }

    let mut regularized = false;
    let chol = match to_na(&sw).cholesky() {
        Some(c) => c,
        None => {
            regularized = true;
            let ridge = 1e-6 * sw.diag().sum() / d as f64;
            let mut sw_r = sw.clone();
            for i in 0..d {
                sw_r[(i, i)] += ridge;
            }
            to_na(&sw_r)
                .cholesky()
                .ok_or_else(|| Error::Numeric("within-class scatter not factorizable".into()))?
        }
    };

    // M = L⁻¹ Sb L⁻ᵀ, symmetric; directions are L⁻ᵀ·(top eigenvectors)
    let l = chol.l();
    let linv = l
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Numeric("cholesky factor not invertible".into()))?;
    let m = &linv * to_na(&sb) * linv.transpose();
    let m = (&m + &m.transpose()) * 0.5;
    let eig = nalgebra::SymmetricEigen::new(m);
    let out_dim = requested_dim.min(n_classes - 1).min(d);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));

    let linv_t = linv.transpose();
    let mut projection = Array2::zeros((out_dim, d));
    for (row, &k) in order.iter().take(out_dim).enumerate() {
        let u = eig.eigenvectors.column(k);
        let w = &linv_t * u;
        // canonical sign: the largest-magnitude component is positive
        let mut pivot = 0;
        for i in 0..d {
            if w[i].abs() > w[pivot].abs() {
                pivot = i;
            }
        }
        let sign = if w[pivot] < 0.0 { -1.0 } else { 1.0 };
        for c in 0..d {
            projection[(row, c)] = sign * w[c];
        }
    }
    Ok(LdaTransform { mean, projection, regularized })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use ndarray::arr2;
    use rand::Rng;

    #[test]
    fn axis_separated_classes_recover_the_mean_difference_direction() {
        // two classes with exactly isotropic within-class scatter,
        // separated along the second axis
        let cloud = [[0.0, 0.0], [2.0, 0.0], [1.0, 1.0], [1.0, -1.0]];
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for p in cloud {
            rows.push([p[0], p[1]]);
            labels.push(0);
        }
        for p in cloud {
            rows.push([p[0], p[1] + 5.0]);
            labels.push(1);
        }
        let emb = arr2(&rows.iter().map(|r| [r[0], r[1]]).collect::<Vec<_>>());
        let lda = fit_lda(&emb, &labels, 1).unwrap();
        let w = lda.projection.row(0);
        let norm = (w[0] * w[0] + w[1] * w[1]).sqrt();
        let cos = w[1] / norm;
        let angle = cos.abs().min(1.0).acos();
        assert!(angle < 1e-6, "angle {angle}, direction {w:?}");
    }

    #[test]
    fn requested_dim_is_clamped() {
        let mut rng = stream(91, "lda");
        let n_classes = 5;
        let d = 3;
        let mut emb = Array2::zeros((n_classes * 4, d));
        let mut labels = Vec::new();
        for c in 0..n_classes {
            for k in 0..4 {
                for j in 0..d {
                    emb[(c * 4 + k, j)] = c as f64 + 0.1 * rng.random_range(-1.0..1.0);
                }
                labels.push(c);
            }
        }
        // plenty of classes: clamp lands on in_dim
        let lda = fit_lda(&emb, &labels, 10).unwrap();
        assert_eq!(lda.out_dim(), d);
        // two classes: clamp lands on classes − 1
        let two: Vec<usize> = labels.iter().map(|&l| l % 2).collect();
        let lda = fit_lda(&emb, &two, 10).unwrap();
        assert_eq!(lda.out_dim(), 1);
    }

    #[test]
    fn projection_reduces_within_class_share() {
        let mut rng = stream(92, "lda-share");
        let d = 6;
        let per = 30;
        let n_classes = 4;
        let mut emb = Array2::zeros((n_classes * per, d));
        let mut labels = Vec::new();
        for c in 0..n_classes {
            let center: Vec<f64> = (0..d).map(|_| rng.random_range(-2.0..2.0)).collect();
            for k in 0..per {
                for j in 0..d {
                    emb[(c * per + k, j)] = center[j] + rng.random_range(-1.0..1.0);
                }
                labels.push(c);
            }
        }
        let share = |rows: &Array2<f64>, labels: &[usize]| -> f64 {
            let n = rows.nrows() as f64;
            let mean = rows.sum_axis(ndarray::Axis(0)) / n;
            let mut per_class: std::collections::BTreeMap<usize, (Array1<f64>, f64)> =
                Default::default();
            for (i, &l) in labels.iter().enumerate() {
                let e = per_class
                    .entry(l)
                    .or_insert_with(|| (Array1::zeros(rows.ncols()), 0.0));
                e.0 += &rows.row(i).to_owned();
                e.1 += 1.0;
            }
            let mut within = 0.0;
            let mut total = 0.0;
            for (i, &l) in labels.iter().enumerate() {
                let (sum, cnt) = &per_class[&l];
                let cm = sum / *cnt;
                let dev = &rows.row(i).to_owned() - &cm;
                within += dev.dot(&dev);
                let dev_t = &rows.row(i).to_owned() - &mean;
                total += dev_t.dot(&dev_t);
            }
            within / total
        };
        let raw_share = share(&emb, &labels);
        let lda = fit_lda(&emb, &labels, 3).unwrap();
        let projected = lda.apply_rows(&emb);
        let proj_share = share(&projected, &labels);
        assert!(proj_share < raw_share, "{proj_share} vs {raw_share}");
    }

    #[test]
    fn singular_within_scatter_triggers_ridge() {
        // per-class variation only along the first axis
        let emb = arr2(&[
            [0.0, 0.0, 0.0],
            [1.0, 0.0, 0.0],
            [2.0, 0.0, 0.0],
            [0.0, 1.0, 2.0],
            [1.0, 1.0, 2.0],
            [2.0, 1.0, 2.0],
        ]);
        let labels = vec![0, 0, 0, 1, 1, 1];
        let lda = fit_lda(&emb, &labels, 1).unwrap();
        assert!(lda.regularized);
    }

    #[test]
    fn small_classes_are_rejected() {
        let emb = arr2(&[[0.0, 1.0], [1.0, 0.0], [0.5, 0.5]]);
        assert!(fit_lda(&emb, &[0, 0, 1], 1).is_err());
        assert!(fit_lda(&emb, &[0, 0, 0], 1).is_err());
    }
}
