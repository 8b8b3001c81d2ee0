use nalgebra::DMatrix;

use crate::embeddings::EmbeddingMatrix;
use crate::error::{Error, Result};
use crate::linalg::svd;

const RANK_TOL: f64 = 1e-10;

/// Rotates both spaces onto their right singular bases and rescales them so
/// that their singular values coincide at `sqrt(S_X * S_Z)`:
///
/// `X' = X V_X diag(sqrt(S_Z / S_X))`, `Z' = Z V_Z diag(sqrt(S_X / S_Z))`.
pub fn fuse(x: &EmbeddingMatrix, z: &EmbeddingMatrix) -> Result<(EmbeddingMatrix, EmbeddingMatrix)> {
    let d = x.dim();
    if z.dim() != d {
        return Err(Error::DimensionMismatch(format!(
            "fusion needs equal dimensions, got {} and {}",
            d,
            z.dim()
        )));
    }
    for (name, m) in [("source", x), ("target", z)] {
        if m.rows() < d {
            return Err(Error::RankDeficient(format!(
                "{name} has {} rows for dimension {d}",
                m.rows()
            )));
        }
    }
    let fx = svd(x.matrix());
    let fz = svd(z.matrix());
    for (name, f) in [("source", &fx), ("target", &fz)] {
        if f.s[d - 1] <= RANK_TOL {
            return Err(Error::RankDeficient(format!(
                "{name} smallest singular value {:.3e}",
                f.s[d - 1]
            )));
        }
    }
    let scale_x = DMatrix::from_fn(d, d, |i, j| if i == j { (fz.s[i] / fx.s[i]).sqrt() } else { 0.0 });
    let scale_z = DMatrix::from_fn(d, d, |i, j| if i == j { (fx.s[i] / fz.s[i]).sqrt() } else { 0.0 });
    let xf = x.matrix() * &fx.v * scale_x;
    let zf = z.matrix() * &fz.v * scale_z;
    Ok((EmbeddingMatrix::new(xf)?, EmbeddingMatrix::new(zf)?))
}
