//! Self-learning alignment: alternate an orthogonal Procrustes fit on the
//! current dictionary with dictionary induction in the mapped space.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::dictionary::Dictionary;
use crate::embeddings::{EmbeddingMatrix, Vocabulary};
use crate::error::{Error, Result};
use crate::linalg::svd;
use crate::matrix_io::{write_matrix, write_vector};
use crate::preprocess::normalize;
use crate::retrieval::{Retrieval, Scorer};
use crate::util::derive_seed;

/// Orthogonal maps of both languages into the shared space.
#[derive(Debug, Clone, PartialEq)]
pub struct MappingPair {
    pub w_x: DMatrix<f64>,
    pub w_z: DMatrix<f64>,
    /// Singular values of `X^T D Z`, non-increasing.
    pub s: DVector<f64>,
}

impl MappingPair {
    pub fn map_source(&self, x: &EmbeddingMatrix) -> Result<EmbeddingMatrix> {
        EmbeddingMatrix::new(x.matrix() * &self.w_x)
    }

    pub fn map_target(&self, z: &EmbeddingMatrix) -> Result<EmbeddingMatrix> {
        EmbeddingMatrix::new(z.matrix() * &self.w_z)
    }

    /// Writes `w_x`, `w_z` and `s` as consecutive text matrix blocks.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        write_matrix(&mut out, &self.w_x)?;
        write_matrix(&mut out, &self.w_z)?;
        write_vector(&mut out, &self.s)?;
        out.flush().map_err(|e| Error::io(path, e))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelfLearnConfig {
    /// Only the first `dict_vocab_cutoff` rows per side enter induction.
    pub dict_vocab_cutoff: usize,
    pub retrieval: Retrieval,
    pub csls_neighborhood: usize,
    pub keep_prob_initial: f64,
    pub keep_prob_factor: f64,
    pub stall_patience: usize,
    pub convergence_eps: f64,
    pub max_iters: usize,
    pub reweight_exponent: f64,
    pub bidirectional: bool,
    pub renormalize_each_iter: bool,
    pub seed: u64,
}

impl Default for SelfLearnConfig {
    fn default() -> Self {
        SelfLearnConfig {
            dict_vocab_cutoff: 20_000,
            retrieval: Retrieval::Csls,
            csls_neighborhood: 10,
            keep_prob_initial: 0.1,
            keep_prob_factor: 2.0,
            stall_patience: 50,
            convergence_eps: 1e-6,
            max_iters: 2000,
            reweight_exponent: 0.5,
            bidirectional: true,
            renormalize_each_iter: false,
            seed: 0,
        }
    }
}

impl SelfLearnConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.to_string()));
        if self.dict_vocab_cutoff < 1 {
            return bad("dict_vocab_cutoff must be >= 1");
        }
        if self.csls_neighborhood < 1 {
            return bad("csls_neighborhood must be >= 1");
        }
        if !(self.keep_prob_initial > 0.0 && self.keep_prob_initial <= 1.0) {
            return bad("keep_prob_initial must lie in (0, 1]");
        }
        if !(self.keep_prob_factor > 1.0) {
            return bad("keep_prob_factor must be > 1");
        }
        if self.stall_patience < 1 || self.max_iters < 1 {
            return bad("stall_patience and max_iters must be >= 1");
        }
        if !self.convergence_eps.is_finite() || !self.reweight_exponent.is_finite() {
            return bad("convergence_eps and reweight_exponent must be finite");
        }
        Ok(())
    }
}

/// One self-learning iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceEntry {
    pub iter: usize,
    pub keep_prob: f64,
    pub objective: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlignmentResult {
    pub mapping: MappingPair,
    pub dictionary: Dictionary,
    pub trace: Vec<TraceEntry>,
    pub iterations: usize,
    /// False when `max_iters` was hit; mapping and dictionary are then the
    /// best-objective iterate.
    pub converged: bool,
    pub reweight_exponent: f64,
}

impl AlignmentResult {
    /// Source and target embeddings in the shared, re-weighted space.
    pub fn mapped(&self, x: &EmbeddingMatrix, z: &EmbeddingMatrix) -> Result<(EmbeddingMatrix, EmbeddingMatrix)> {
        let xm = self.mapping.map_source(x)?;
        let zm = self.mapping.map_target(z)?;
        reweight(&xm, &zm, &self.mapping.s, self.reweight_exponent)
    }

    pub fn objective_trace(&self) -> Vec<f64> {
        self.trace.iter().map(|t| t.objective).collect()
    }

    /// `iter,keep_prob,objective` lines with a header.
    pub fn write_trace<W: Write>(&self, out: &mut W) -> Result<()> {
        writeln!(out, "iter,keep_prob,objective")?;
        for t in &self.trace {
            writeln!(out, "{},{},{}", t.iter, t.keep_prob, t.objective)?;
        }
        Ok(())
    }

    /// Writes `mapping.txt`, `dictionary.tsv` and `trace.csv` into `dir`.
    pub fn save(&self, dir: impl AsRef<Path>, src: &Vocabulary, trg: &Vocabulary) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        self.mapping.save(dir.join("mapping.txt"))?;
        self.dictionary.save_tsv(dir.join("dictionary.tsv"), src, trg)?;
        let path = dir.join("trace.csv");
        let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
        let mut out = BufWriter::new(file);
        self.write_trace(&mut out)?;
        out.flush().map_err(|e| Error::io(&path, e))
    }
}

fn check_pair(x: &EmbeddingMatrix, z: &EmbeddingMatrix) -> Result<()> {
    if x.dim() != z.dim() {
        return Err(Error::DimensionMismatch(format!(
            "source dimension {} differs from target dimension {}",
            x.dim(),
            z.dim()
        )));
    }
    Ok(())
}

/// Orthogonal maps maximizing `sum_{(i,j) in D} <X_i W_X, Z_j W_Z>`, from
/// the SVD `U S V^T = X^T D Z`: `W_X = U`, `W_Z = V`.
pub fn solve_orthogonal_mapping(x: &EmbeddingMatrix, z: &EmbeddingMatrix, d: &Dictionary) -> Result<MappingPair> {
    procrustes(x, z, d.pairs())
}

/// Procrustes over a pair list; repeated pairs carry proportional weight.
pub(crate) fn procrustes(x: &EmbeddingMatrix, z: &EmbeddingMatrix, pairs: &[(usize, usize)]) -> Result<MappingPair> {
    check_pair(x, z)?;
    if pairs.is_empty() {
        return Err(Error::Empty("dictionary has no pairs".into()));
    }
    if let Some((s, t)) = pairs.iter().find(|(s, t)| *s >= x.rows() || *t >= z.rows()) {
        return Err(Error::InvalidArgument(format!(
            "dictionary pair ({s}, {t}) outside {} x {}",
            x.rows(),
            z.rows()
        )));
    }
    let src: Vec<usize> = pairs.iter().map(|p| p.0).collect();
    let trg: Vec<usize> = pairs.iter().map(|p| p.1).collect();
    let xs = x.matrix().select_rows(src.iter());
    let zs = z.matrix().select_rows(trg.iter());
    let cross = xs.transpose() * zs;
    let f = svd(&cross);
    Ok(MappingPair {
        w_x: f.u,
        w_z: f.v,
        s: f.s,
    })
}

/// Scales the columns of both mapped spaces by `s^(exponent/2)`, so that
/// `X' Z'^T = X diag(s^exponent) Z^T`.
pub fn reweight(
    x_mapped: &EmbeddingMatrix,
    z_mapped: &EmbeddingMatrix,
    s: &DVector<f64>,
    exponent: f64,
) -> Result<(EmbeddingMatrix, EmbeddingMatrix)> {
    check_pair(x_mapped, z_mapped)?;
    if s.len() != x_mapped.dim() {
        return Err(Error::DimensionMismatch(format!(
            "{} singular values for dimension {}",
            s.len(),
            x_mapped.dim()
        )));
    }
    if exponent == 0.0 {
        return Ok((x_mapped.clone(), z_mapped.clone()));
    }
    let scale: Vec<f64> = s.iter().map(|v| v.powf(exponent / 2.0)).collect();
    let apply = |m: &EmbeddingMatrix| {
        let mut out = m.matrix().clone();
        for (j, mut col) in out.column_iter_mut().enumerate() {
            col.scale_mut(scale[j]);
        }
        EmbeddingMatrix::new(out)
    };
    Ok((apply(x_mapped)?, apply(z_mapped)?))
}

/// Dictionary induction result.
#[derive(Debug, Clone, PartialEq)]
pub struct Induced {
    pub dictionary: Dictionary,
    /// Forward then (if bidirectional) backward argmax pairs, with repeats.
    pub pairs: Vec<(usize, usize)>,
    /// Mean best score per query row, before dropout, averaged over the
    /// directions used.
    pub objective: f64,
}

/// Builds a dictionary from aligned spaces by argmax retrieval over the
/// first `dict_vocab_cutoff` rows of each side. Each score is dropped
/// (set to zero) with probability `1 - keep_prob`, using streams derived
/// from `seed`.
pub fn induce_dictionary(
    x_al: &EmbeddingMatrix,
    z_al: &EmbeddingMatrix,
    cfg: &SelfLearnConfig,
    keep_prob: f64,
    seed: u64,
) -> Result<Dictionary> {
    induce(x_al, z_al, cfg, keep_prob, seed).map(|i| i.dictionary)
}

pub fn induce(
    x_al: &EmbeddingMatrix,
    z_al: &EmbeddingMatrix,
    cfg: &SelfLearnConfig,
    keep_prob: f64,
    seed: u64,
) -> Result<Induced> {
    check_pair(x_al, z_al)?;
    if !(keep_prob > 0.0 && keep_prob <= 1.0) {
        return Err(Error::InvalidArgument(format!("keep_prob {keep_prob} outside (0, 1]")));
    }
    let ns = cfg.dict_vocab_cutoff.min(x_al.rows());
    let nt = cfg.dict_vocab_cutoff.min(z_al.rows());
    let scorer = Scorer::new(
        &x_al.matrix().rows(0, ns).into_owned(),
        &z_al.matrix().rows(0, nt).into_owned(),
        cfg.retrieval,
        cfg.csls_neighborhood,
    );

    let dropout = |stream: u64| Some((keep_prob, derive_seed(seed, &[stream])));
    let fwd = scorer.argmax(dropout(0));
    let fwd_best = scorer.argmax_with_score(None);
    let mut pairs: Vec<(usize, usize)> = fwd.iter().enumerate().map(|(s, &t)| (s, t)).collect();
    let mut objective = mean(fwd_best.iter().map(|b| b.1));

    if cfg.bidirectional {
        let rev = scorer.reversed();
        let bwd = rev.argmax(dropout(1));
        let bwd_best = rev.argmax_with_score(None);
        pairs.extend(bwd.iter().enumerate().map(|(t, &s)| (s, t)));
        objective = 0.5 * (objective + mean(bwd_best.iter().map(|b| b.1)));
    }
    Ok(Induced {
        dictionary: Dictionary::from_pairs(pairs.iter().copied()),
        pairs,
        objective,
    })
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// Iterates Procrustes, re-weighting and stochastic induction from the
/// seed dictionary `d0`.
///
/// The objective is the mean best retrieval score (no dropout). When it
/// fails to improve by `convergence_eps` for `stall_patience` consecutive
/// iterations the keep probability is multiplied by `keep_prob_factor`
/// (capped at 1); a further stall at keep probability 1 ends the loop.
pub fn self_learn(
    x: &EmbeddingMatrix,
    z: &EmbeddingMatrix,
    d0: &Dictionary,
    cfg: &SelfLearnConfig,
) -> Result<AlignmentResult> {
    cfg.validate()?;
    check_pair(x, z)?;
    if d0.is_empty() {
        return Err(Error::Empty("seed dictionary has no pairs".into()));
    }
    d0.check_bounds(x.rows(), z.rows())?;

    let mut pairs: Vec<(usize, usize)> = d0.pairs().to_vec();
    let mut dictionary = d0.clone();
    let mut keep_prob = cfg.keep_prob_initial;
    let mut best_objective = f64::NEG_INFINITY;
    let mut best: Option<(MappingPair, Dictionary)> = None;
    let mut stall = 0usize;
    let mut trace = Vec::new();

    for iter in 1..=cfg.max_iters {
        let mapping = procrustes(x, z, &pairs)?;
        let (xw, zw) = reweight(
            &mapping.map_source(x)?,
            &mapping.map_target(z)?,
            &mapping.s,
            cfg.reweight_exponent,
        )?;
        let (xw, zw) = if cfg.renormalize_each_iter {
            (normalize(&xw)?, normalize(&zw)?)
        } else {
            (xw, zw)
        };
        let induced = induce(&xw, &zw, cfg, keep_prob, derive_seed(cfg.seed, &[iter as u64]))?;
        if !induced.objective.is_finite() {
            return Err(Error::NonFinite(format!("self-learning objective at iteration {iter}")));
        }
        trace.push(TraceEntry {
            iter,
            keep_prob,
            objective: induced.objective,
        });
        log::debug!(
            "iter {iter}: keep_prob {keep_prob:.3}, objective {:.9}, {} pairs",
            induced.objective,
            induced.dictionary.len()
        );

        if induced.objective - best_objective >= cfg.convergence_eps {
            best_objective = induced.objective;
            best = Some((mapping, dictionary.clone()));
            stall = 0;
        } else {
            stall += 1;
        }
        pairs = induced.pairs;
        dictionary = induced.dictionary;

        if stall >= cfg.stall_patience {
            if keep_prob >= 1.0 {
                let mapping = procrustes(x, z, &pairs)?;
                return Ok(AlignmentResult {
                    mapping,
                    dictionary,
                    trace,
                    iterations: iter,
                    converged: true,
                    reweight_exponent: cfg.reweight_exponent,
                });
            }
            keep_prob = (keep_prob * cfg.keep_prob_factor).min(1.0);
            stall = 0;
        }
    }

    log::warn!("self-learning stopped at max_iters = {} without converging", cfg.max_iters);
    let (mapping, dictionary) = best.expect("at least one iteration ran");
    Ok(AlignmentResult {
        mapping,
        dictionary,
        iterations: trace.len(),
        trace,
        converged: false,
        reweight_exponent: cfg.reweight_exponent,
    })
}
