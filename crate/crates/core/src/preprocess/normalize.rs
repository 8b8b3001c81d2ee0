use crate::embeddings::EmbeddingMatrix;
use crate::error::Result;
use crate::linalg::{length_normalize, mean_center};

/// Length normalization, mean centering per dimension, then length
/// normalization again.
///
/// Fails with [`crate::Error::ZeroRow`] if a row is zero before either
/// normalization pass. A single-row matrix always fails because centering
/// maps it to zero.
pub fn normalize(emb: &EmbeddingMatrix) -> Result<EmbeddingMatrix> {
    let mut m = emb.matrix().clone();
    length_normalize(&mut m)?;
    mean_center(&mut m);
    length_normalize(&mut m)?;
    EmbeddingMatrix::new(m)
}
