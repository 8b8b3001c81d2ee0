use nalgebra::{DMatrix, DVector};

use crate::embeddings::EmbeddingMatrix;
use crate::error::{Error, Result};
use crate::linalg::svd;

/// Fitted principal component projection.
#[derive(Debug, Clone)]
pub struct PcaModel {
    pub mean: DVector<f64>,
    /// `d x r`, orthonormal columns.
    pub components: DMatrix<f64>,
    /// Per-component variance (denominator `n - 1`), non-increasing.
    pub explained_variance: DVector<f64>,
    /// Total variance of the centered input over all `d` dimensions.
    pub total_variance: f64,
}

impl PcaModel {
    pub fn transform(&self, emb: &EmbeddingMatrix) -> Result<EmbeddingMatrix> {
        if emb.dim() != self.mean.len() {
            return Err(Error::DimensionMismatch(format!(
                "PCA fitted on dimension {}, got {}",
                self.mean.len(),
                emb.dim()
            )));
        }
        let mut centered = emb.matrix().clone();
        for (j, mut col) in centered.column_iter_mut().enumerate() {
            col.add_scalar_mut(-self.mean[j]);
        }
        EmbeddingMatrix::new(centered * &self.components)
    }

    pub fn explained_variance_ratio(&self) -> f64 {
        if self.total_variance == 0.0 {
            1.0
        } else {
            self.explained_variance.sum() / self.total_variance
        }
    }
}

/// Projects the centered input onto its top `target_dim` principal
/// components using an exact SVD of the centered matrix.
pub fn pca_reduce(emb: &EmbeddingMatrix, target_dim: usize) -> Result<(EmbeddingMatrix, PcaModel)> {
    let (n, d) = (emb.rows(), emb.dim());
    if target_dim < 1 || target_dim > d {
        return Err(Error::InvalidArgument(format!(
            "target_dim {target_dim} outside 1..={d}"
        )));
    }
    if n <= target_dim {
        return Err(Error::InvalidArgument(format!(
            "PCA to {target_dim} dimensions needs more than {target_dim} rows, got {n}"
        )));
    }
    let mean = DVector::from_fn(d, |j, _| emb.matrix().column(j).mean());
    let mut centered = emb.matrix().clone();
    for (j, mut col) in centered.column_iter_mut().enumerate() {
        col.add_scalar_mut(-mean[j]);
    }
    let f = svd(&centered);
    let denom = (n - 1) as f64;
    let k = f.s.len().min(target_dim);
    let mut components = DMatrix::zeros(d, target_dim);
    components
        .columns_mut(0, k)
        .copy_from(&f.v.columns(0, k));
    let explained_variance = DVector::from_fn(target_dim, |i, _| {
        if i < k {
            f.s[i] * f.s[i] / denom
        } else {
            0.0
        }
    });
    let total_variance = f.s.iter().map(|s| s * s).sum::<f64>() / denom;
    let model = PcaModel {
        mean,
        components,
        explained_variance,
        total_variance,
    };
    let reduced = EmbeddingMatrix::new(&centered * &model.components)?;
    Ok((reduced, model))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::orthogonality_error;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(n: usize, d: usize, seed: u64) -> EmbeddingMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        EmbeddingMatrix::new(DMatrix::from_fn(n, d, |_, _| rng.random_range(-1.0..1.0))).unwrap()
    }

    /// Cyclic Jacobi eigenvalue iteration for symmetric matrices.
    fn jacobi_eigenvalues(mut a: DMatrix<f64>) -> Vec<f64> {
        let n = a.nrows();
        for _sweep in 0..100 {
            let off: f64 = (0..n)
                .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
                .map(|(i, j)| a[(i, j)] * a[(i, j)])
                .sum();
            if off < 1e-30 {
                break;
            }
            for p in 0..n {
                for q in (p + 1)..n {
                    if a[(p, q)].abs() < 1e-300 {
                        continue;
                    }
                    let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * a[(p, q)]);
                    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                    let t = if theta == 0.0 { 1.0 } else { t };
                    let c = 1.0 / (t * t + 1.0).sqrt();
                    let s = t * c;
                    for k in 0..n {
                        let akp = a[(k, p)];
                        let akq = a[(k, q)];
                        a[(k, p)] = c * akp - s * akq;
                        a[(k, q)] = s * akp + c * akq;
                    }
                    for k in 0..n {
                        let apk = a[(p, k)];
                        let aqk = a[(q, k)];
                        a[(p, k)] = c * apk - s * aqk;
                        a[(q, k)] = s * apk + c * aqk;
                    }
                }
            }
        }
        let mut ev: Vec<f64> = (0..n).map(|i| a[(i, i)]).collect();
        ev.sort_by(|a, b| b.total_cmp(a));
        ev
    }

    #[test]
    fn collinear_points_keep_all_variance() {
        let e = EmbeddingMatrix::from_rows(&[vec![1.0, 1.0], vec![2.0, 2.0], vec![3.0, 3.0]])
            .unwrap();
        let (out, model) = pca_reduce(&e, 1).unwrap();
        assert_eq!(out.dim(), 1);
        assert!((model.explained_variance_ratio() - 1.0).abs() < 1e-12);
        let s2 = 2f64.sqrt();
        let got: Vec<f64> = (0..3).map(|i| out.matrix()[(i, 0)].abs()).collect();
        for (g, e) in got.iter().zip([s2, 0.0, s2]) {
            assert!((g - e).abs() < 1e-12);
        }
    }

    #[test]
    fn variance_matches_covariance_eigenvalues() {
        let e = random(50, 8, 11);
        let (_, model) = pca_reduce(&e, 8).unwrap();
        let mut c = e.matrix().clone();
        for mut col in c.column_iter_mut() {
            let m = col.mean();
            col.add_scalar_mut(-m);
        }
        let cov = c.transpose() * &c / 49.0;
        let oracle = jacobi_eigenvalues(cov);
        for (got, want) in model.explained_variance.iter().zip(oracle) {
            assert!((got - want).abs() < 1e-8, "{got} vs {want}");
        }
        assert!(orthogonality_error(&model.components) < 1e-8);
    }

    #[test]
    fn full_rank_projection_preserves_distances() {
        let e = random(30, 6, 5);
        let (out, _) = pca_reduce(&e, 6).unwrap();
        for i in 0..30 {
            for j in 0..30 {
                let a = (e.matrix().row(i) - e.matrix().row(j)).norm();
                let b = (out.matrix().row(i) - out.matrix().row(j)).norm();
                assert!((a - b).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn output_variance_is_ordered() {
        let (out, model) = pca_reduce(&random(40, 10, 2), 5).unwrap();
        assert_eq!(out.dim(), 5);
        assert!(model
            .explained_variance
            .as_slice()
            .windows(2)
            .all(|w| w[0] >= w[1]));
        let transformed = model.transform(&random(40, 10, 2)).unwrap();
        assert!((transformed.matrix() - out.matrix()).abs().max() < 1e-12);
    }

    #[test]
    fn rejects_bad_target_dim() {
        let e = random(10, 4, 1);
        assert!(pca_reduce(&e, 0).is_err());
        assert!(pca_reduce(&e, 5).is_err());
        assert!(pca_reduce(&random(3, 4, 1), 3).is_err());
    }
}
