//! Unsupervised seed dictionaries.
//!
//! Words are compared through their sorted similarity profiles: for an
//! isometric pair of spaces the rows of `XX^T` and `ZZ^T` are the same
//! multisets of values, so after sorting each row the two languages become
//! directly comparable without knowing the rotation between them.

use nalgebra::DMatrix;

use crate::dictionary::Dictionary;
use crate::embeddings::EmbeddingMatrix;
use crate::error::{Error, Result};
use crate::linalg::{length_normalize, mean_center};
use crate::preprocess::{normalize, pca_reduce};
use crate::retrieval::{Retrieval, Scorer};

#[derive(Debug, Clone, PartialEq)]
pub struct InitConfig {
    /// Number of leading (most frequent) rows used on each side.
    pub vocab_cutoff: usize,
    pub csls_neighborhood: usize,
    /// Reserved; initialization is deterministic.
    pub seed: u64,
}

impl Default for InitConfig {
    fn default() -> Self {
        InitConfig {
            vocab_cutoff: 4000,
            csls_neighborhood: 10,
            seed: 0,
        }
    }
}

/// A seed dictionary with its mean CSLS score in the sorted-profile space.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredDictionary {
    pub dictionary: Dictionary,
    pub score: f64,
}

/// `sign(v) * sqrt(|v|)`, strictly increasing on the reals.
pub fn signed_sqrt(v: f64) -> f64 {
    v.signum() * v.abs().sqrt()
}

/// Row-sorted signed square root of `X X^T`.
pub fn sorted_similarity_profile(x: &DMatrix<f64>) -> DMatrix<f64> {
    let sim = x * x.transpose();
    let n = sim.nrows();
    let mut out = DMatrix::zeros(n, n);
    let mut row = vec![0.0; n];
    for i in 0..n {
        for (j, slot) in row.iter_mut().enumerate() {
            *slot = signed_sqrt(sim[(i, j)]);
        }
        row.sort_by(f64::total_cmp);
        for (j, v) in row.iter().enumerate() {
            out[(i, j)] = *v;
        }
    }
    out
}

fn check_config(cfg: &InitConfig) -> Result<()> {
    if cfg.vocab_cutoff < 2 {
        return Err(Error::InvalidArgument("init vocab_cutoff must be >= 2".into()));
    }
    if cfg.csls_neighborhood < 1 {
        return Err(Error::InvalidArgument("csls_neighborhood must be >= 1".into()));
    }
    Ok(())
}

/// Seed dictionary from sorted similarity profiles, matched with CSLS in
/// both directions.
pub fn unsupervised_init(x: &EmbeddingMatrix, z: &EmbeddingMatrix, cfg: &InitConfig) -> Result<Dictionary> {
    scored_unsupervised_init(x, z, cfg).map(|s| s.dictionary)
}

/// [`unsupervised_init`] also reporting the mean CSLS score of the pairs.
pub fn scored_unsupervised_init(
    x: &EmbeddingMatrix,
    z: &EmbeddingMatrix,
    cfg: &InitConfig,
) -> Result<ScoredDictionary> {
    check_config(cfg)?;
    let n = cfg.vocab_cutoff.min(x.rows()).min(z.rows());
    if n < 2 {
        return Err(Error::InvalidArgument(format!(
            "initialization needs at least 2 rows per side, got {n}"
        )));
    }
    let mut px = sorted_similarity_profile(&x.matrix().rows(0, n).into_owned());
    let mut pz = sorted_similarity_profile(&z.matrix().rows(0, n).into_owned());
    for (name, p) in [("source", &mut px), ("target", &mut pz)] {
        length_normalize(p)
            .and_then(|_| {
                mean_center(p);
                length_normalize(p)
            })
            .map_err(|e| Error::InvalidArgument(format!("degenerate {name} similarity profile: {e}")))?;
    }

    let scorer = Scorer::new(&px, &pz, Retrieval::Csls, cfg.csls_neighborhood);
    let fwd = scorer.argmax_with_score(None);
    let bwd = scorer.reversed().argmax_with_score(None);

    let mut pairs = Vec::with_capacity(2 * n);
    pairs.extend(fwd.iter().enumerate().map(|(s, &(t, _))| (s, t)));
    pairs.extend(bwd.iter().enumerate().map(|(t, &(s, _))| (s, t)));
    let dictionary = Dictionary::from_pairs(pairs);

    // Every pair is a forward or backward argmax. CSLS is symmetric in its
    // two arguments, so either direction's score can be used.
    let score = dictionary
        .pairs()
        .iter()
        .map(|&(s, t)| if fwd[s].0 == t { fwd[s].1 } else { bwd[t].1 })
        .sum::<f64>()
        / dictionary.len() as f64;
    Ok(ScoredDictionary { dictionary, score })
}

/// Parameters of the dimension sweep in [`iterative_dimred_init`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DimSweep {
    pub start_dim: usize,
    pub target_dim: usize,
    pub step: usize,
    /// Only the `k_freq` most frequent rows take part in initialization.
    pub k_freq: usize,
}

impl DimSweep {
    /// Dimensions visited, largest first; `target_dim` is always included.
    pub fn dims(&self) -> Result<Vec<usize>> {
        if self.step < 1 {
            return Err(Error::InvalidArgument("dimension step must be >= 1".into()));
        }
        if self.target_dim < 1 || self.target_dim > self.start_dim {
            return Err(Error::InvalidArgument(format!(
                "need 1 <= target_dim ({}) <= start_dim ({})",
                self.target_dim, self.start_dim
            )));
        }
        let mut dims: Vec<usize> = (self.target_dim..=self.start_dim)
            .rev()
            .step_by(self.step)
            .collect();
        if dims.last() != Some(&self.target_dim) {
            dims.push(self.target_dim);
        }
        Ok(dims)
    }
}

/// One evaluated dimension of the sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub dim: usize,
    pub score: f64,
    pub pairs: usize,
}

/// Runs [`unsupervised_init`] on PCA-reduced (then re-normalized) copies of
/// both spaces for every dimension of the sweep and keeps the dictionary
/// with the highest mean CSLS score. Ties go to the larger dimension.
pub fn iterative_dimred_init(
    x: &EmbeddingMatrix,
    z: &EmbeddingMatrix,
    sweep: &DimSweep,
    cfg: &InitConfig,
) -> Result<(Dictionary, Vec<SweepPoint>)> {
    let dims = sweep.dims()?;
    let max_dim = x.dim().min(z.dim());
    if sweep.start_dim > max_dim {
        return Err(Error::InvalidArgument(format!(
            "start_dim {} exceeds embedding dimension {max_dim}",
            sweep.start_dim
        )));
    }
    let cfg = InitConfig {
        vocab_cutoff: cfg.vocab_cutoff.min(sweep.k_freq),
        ..cfg.clone()
    };
    let mut best: Option<ScoredDictionary> = None;
    let mut trace = Vec::with_capacity(dims.len());
    for dim in dims {
        let scored = init_at_dim(x, z, dim, &cfg)?;
        log::debug!("dimension {dim}: score {:.6}, {} pairs", scored.score, scored.dictionary.len());
        trace.push(SweepPoint {
            dim,
            score: scored.score,
            pairs: scored.dictionary.len(),
        });
        if best.as_ref().is_none_or(|b| scored.score > b.score) {
            best = Some(scored);
        }
    }
    Ok((best.expect("at least one dimension").dictionary, trace))
}

/// PCA to `dim`, re-normalize, and initialize.
pub fn init_at_dim(x: &EmbeddingMatrix, z: &EmbeddingMatrix, dim: usize, cfg: &InitConfig) -> Result<ScoredDictionary> {
    let (xr, _) = pca_reduce(x, dim)?;
    let (zr, _) = pca_reduce(z, dim)?;
    scored_unsupervised_init(&normalize(&xr)?, &normalize(&zr)?, cfg)
}
