use nalgebra::DMatrix;

use crate::embeddings::EmbeddingMatrix;
use crate::error::{Error, Result};
use crate::linalg::{check_finite, symmetric_eigen};

/// Eigenvalues of `X^T X` below this are raised to it before `Δ^α`.
pub const EIGEN_FLOOR: f64 = 1e-12;

/// Per-language exponents of the similarity-order transform.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearTransformSpec {
    pub alpha_src: f64,
    pub alpha_trg: f64,
}

impl Default for LinearTransformSpec {
    fn default() -> Self {
        LinearTransformSpec {
            alpha_src: 0.0,
            alpha_trg: 0.0,
        }
    }
}

impl LinearTransformSpec {
    pub fn new(alpha_src: f64, alpha_trg: f64) -> Result<Self> {
        if !alpha_src.is_finite() || !alpha_trg.is_finite() {
            return Err(Error::InvalidArgument("alpha values must be finite".into()));
        }
        Ok(LinearTransformSpec {
            alpha_src,
            alpha_trg,
        })
    }

    /// Selected exponents for the published language pairs and embedding
    /// kinds, as `(alpha_src, alpha_trg)`. `kind` is one of `w2v`,
    /// `fasttext`, `xlmr+w2v`, `xlmr+fasttext`; `pair` one of `ensi`,
    /// `enta`, `enpa`.
    pub fn preset(pair: &str, kind: &str) -> Option<Self> {
        let (s, t) = match (pair.to_ascii_lowercase().as_str(), kind.to_ascii_lowercase().as_str()) {
            ("ensi", "w2v") => (0.15, 0.25),
            ("ensi", "fasttext") => (0.0, 0.25),
            ("ensi", "xlmr+w2v") => (0.0, -0.5),
            ("ensi", "xlmr+fasttext") => (-0.15, 0.25),
            ("enta", "w2v") => (0.15, 0.0),
            ("enta", "fasttext") => (0.15, 0.15),
            ("enta", "xlmr+w2v") => (0.15, 0.0),
            ("enta", "xlmr+fasttext") => (0.15, 0.15),
            ("enpa", "w2v") => (-0.25, 0.0),
            ("enpa", "fasttext") => (-0.15, 0.25),
            ("enpa", "xlmr+w2v") => (0.25, 0.0),
            ("enpa", "xlmr+fasttext") => (0.25, 0.0),
            _ => return None,
        };
        Some(LinearTransformSpec {
            alpha_src: s,
            alpha_trg: t,
        })
    }
}

/// Exponent grid swept when selecting `alpha_src` / `alpha_trg`.
pub const ALPHA_GRID: [f64; 7] = [-0.5, -0.25, -0.15, 0.0, 0.15, 0.25, 0.5];

/// Returns `X Q Δ^α` where `X^T X = Q Δ Q^T`.
///
/// `M_1(X R_α) = X Q Δ^{2α} Q^T X^T`, so `α = (n-1)/2` turns first-order
/// similarities into `n`-th order ones and `α = 0` is a pure rotation.
pub fn linear_transform(emb: &EmbeddingMatrix, alpha: f64) -> Result<EmbeddingMatrix> {
    if !alpha.is_finite() {
        return Err(Error::InvalidArgument(format!("alpha {alpha} is not finite")));
    }
    let x = emb.matrix();
    let gram = x.transpose() * x;
    let (vals, q) = symmetric_eigen(&gram);
    let scale = DMatrix::from_diagonal(&vals.map(|v| v.max(EIGEN_FLOOR).powf(alpha)));
    let out = x * q * scale;
    check_finite(&out, &format!("linear transform with alpha {alpha}"))?;
    EmbeddingMatrix::new(out)
}
