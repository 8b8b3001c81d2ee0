//! Static plus contextual lexicon induction.
//!
//! Each language gets a unified representation `U = E' + gamma * F(A)`,
//! where `E'` is the aligned static space, `A` holds one pooled contextual
//! vector per word and `F` is a small [spring network](SpringParams).
//! The networks are trained with a margin contrastive loss on the current
//! dictionary, which is then re-induced from the unified spaces. At
//! inference the unified cosine is interpolated with the cosine of the
//! aligned contextual spaces.

mod spring;

use std::path::Path;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::Rng;

use crate::dictionary::Dictionary;
use crate::embeddings::{load_embeddings, EmbeddingMatrix, Vocabulary};
use crate::error::{Error, Result};
use crate::preprocess::normalize;
use crate::retrieval::{Retrieval, Scorer};
use crate::selflearn::solve_orthogonal_mapping;
use crate::util::{derive_seed, rng};

pub use spring::{Affine, SpringParams};

/// One pooled contextual vector per vocabulary word.
#[derive(Debug, Clone, PartialEq)]
pub struct ContextualMatrix(EmbeddingMatrix);

impl ContextualMatrix {
    pub fn new(data: DMatrix<f64>) -> Result<Self> {
        EmbeddingMatrix::new(data).map(ContextualMatrix)
    }

    pub fn from_embedding(e: EmbeddingMatrix) -> Self {
        ContextualMatrix(e)
    }

    /// Reads a contextual file (embedding text format) and reorders its
    /// rows to follow `vocab`. Every vocabulary word must be present.
    pub fn load_aligned(path: impl AsRef<Path>, vocab: &Vocabulary) -> Result<Self> {
        let path = path.as_ref();
        let (ctx_vocab, m) = load_embeddings(path, None)?;
        let rows = vocab
            .words()
            .iter()
            .map(|w| {
                ctx_vocab.index_of(w).ok_or_else(|| {
                    Error::InvalidArgument(format!("`{w}` has no contextual vector in {}", path.display()))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(ContextualMatrix(m.select_rows(&rows)))
    }

    pub fn rows(&self) -> usize {
        self.0.rows()
    }

    pub fn dim(&self) -> usize {
        self.0.dim()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        self.0.matrix()
    }

    pub fn as_embedding(&self) -> &EmbeddingMatrix {
        &self.0
    }

    pub fn select_rows(&self, rows: &[usize]) -> Self {
        ContextualMatrix(self.0.select_rows(rows))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CscbliConfig {
    pub learning_rate: f64,
    pub margin: f64,
    pub negatives_per_pair: usize,
    pub batch_size: usize,
    pub epochs_per_round: usize,
    pub refine_rounds: usize,
    /// Weight of the contextual cosine at inference.
    pub lambda: f64,
    pub dict_vocab_cutoff: usize,
    pub csls_neighborhood: usize,
    pub seed: u64,
}

impl Default for CscbliConfig {
    fn default() -> Self {
        CscbliConfig {
            learning_rate: 0.1,
            margin: 0.5,
            negatives_per_pair: 5,
            batch_size: 64,
            epochs_per_round: 5,
            refine_rounds: 5,
            lambda: 0.2,
            dict_vocab_cutoff: 20000,
            csls_neighborhood: 10,
            seed: 0,
        }
    }
}

impl CscbliConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate must be positive, got {}", self.learning_rate));
        }
        if !(self.margin >= 0.0 && self.margin.is_finite()) {
            return bad(format!("margin must be non-negative, got {}", self.margin));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad(format!("lambda must be non-negative, got {}", self.lambda));
        }
        if self.batch_size == 0 || self.negatives_per_pair == 0 {
            return bad("batch_size and negatives_per_pair must be positive".into());
        }
        if self.dict_vocab_cutoff == 0 || self.csls_neighborhood == 0 {
            return bad("dict_vocab_cutoff and csls_neighborhood must be positive".into());
        }
        Ok(())
    }
}

/// Offsets `tanh(W1 tanh(W0 a + b0) + b1)` for every row of `a`.
pub fn spring_forward(a: &ContextualMatrix, p: &SpringParams) -> Result<DMatrix<f64>> {
    spring::forward(a.matrix().clone(), p).map(|act| act.h2)
}

/// `U = E' + gamma * F(A)` with `gamma` broadcast over rows.
pub fn build_unified(e_mapped: &EmbeddingMatrix, a: &ContextualMatrix, p: &SpringParams) -> Result<EmbeddingMatrix> {
    if e_mapped.rows() != a.rows() {
        return Err(Error::DimensionMismatch(format!(
            "{} static rows but {} contextual rows",
            e_mapped.rows(),
            a.rows()
        )));
    }
    if e_mapped.dim() != p.output_dim() {
        return Err(Error::DimensionMismatch(format!(
            "static dimension {}, spring network outputs {}",
            e_mapped.dim(),
            p.output_dim()
        )));
    }
    let offsets = spring_forward(a, p)?;
    let mut u = e_mapped.matrix().clone();
    for (j, mut col) in u.column_iter_mut().enumerate() {
        col.axpy(p.gamma[j], &offsets.column(j), 1.0);
    }
    EmbeddingMatrix::new(u)
}

/// Normalizes both contextual spaces and aligns them by Procrustes on `d`.
pub fn map_contextual(
    a_x: &ContextualMatrix,
    a_y: &ContextualMatrix,
    d: &Dictionary,
) -> Result<(ContextualMatrix, ContextualMatrix)> {
    if d.is_empty() {
        return Err(Error::Empty("contextual mapping needs a non-empty dictionary".into()));
    }
    let nx = normalize(&a_x.0)?;
    let ny = normalize(&a_y.0)?;
    let m = solve_orthogonal_mapping(&nx, &ny, d)?;
    Ok((ContextualMatrix(m.map_source(&nx)?), ContextualMatrix(m.map_target(&ny)?)))
}

/// `(source row, translation, negative)` for the contrastive loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Triple {
    pub src: usize,
    pub pos: usize,
    pub neg: usize,
}

#[derive(Debug, Clone)]
pub struct LossAndGrad {
    pub loss: f64,
    pub grad_x: SpringParams,
    pub grad_y: SpringParams,
}

/// Static and contextual views of one language.
#[derive(Debug, Clone, Copy)]
pub struct Side<'a> {
    pub static_mapped: &'a EmbeddingMatrix,
    pub contextual: &'a ContextualMatrix,
    pub params: &'a SpringParams,
}

/// Mean over `triples` of `max(0, margin - cos(Ux_i, Uy_pos) + cos(Ux_i, Uy_neg))`
/// and its gradient with respect to both networks.
pub fn contrastive_loss(x: Side<'_>, y: Side<'_>, triples: &[Triple], margin: f64) -> Result<LossAndGrad> {
    if triples.is_empty() {
        return Err(Error::Empty("no training triples".into()));
    }
    let (xs, x_local) = gather(triples.iter().map(|t| t.src));
    let (ys, y_local) = gather(triples.iter().flat_map(|t| [t.pos, t.neg]));
    let (act_x, ux) = unified_rows(x, &xs)?;
    let (act_y, uy) = unified_rows(y, &ys)?;

    let mut d_ux = DMatrix::zeros(ux.nrows(), ux.ncols());
    let mut d_uy = DMatrix::zeros(uy.nrows(), uy.ncols());
    let scale = 1.0 / triples.len() as f64;
    let mut loss = 0.0;
    for t in triples {
        let (i, p, n) = (x_local(t.src), y_local(t.pos), y_local(t.neg));
        let u = ux.row(i).transpose();
        let vp = uy.row(p).transpose();
        let vn = uy.row(n).transpose();
        let (cp, gu_p, gv_p) = cosine_grad(&u, &vp);
        let (cn, gu_n, gv_n) = cosine_grad(&u, &vn);
        let h = margin - cp + cn;
        if h <= 0.0 {
            continue;
        }
        loss += scale * h;
        let mut row = d_ux.row_mut(i);
        row += (gu_n - gu_p).transpose() * scale;
        let mut row = d_uy.row_mut(p);
        row -= gv_p.transpose() * scale;
        let mut row = d_uy.row_mut(n);
        row += gv_n.transpose() * scale;
    }
    Ok(LossAndGrad {
        loss,
        grad_x: spring::backward(&act_x, x.params, &d_ux),
        grad_y: spring::backward(&act_y, y.params, &d_uy),
    })
}

/// Sorted distinct indices and a lookup from index to local row.
fn gather(indices: impl Iterator<Item = usize>) -> (Vec<usize>, impl Fn(usize) -> usize) {
    let mut rows: Vec<usize> = indices.collect();
    rows.sort_unstable();
    rows.dedup();
    let lookup = rows.clone();
    (rows, move |i| lookup.binary_search(&i).expect("gathered index"))
}

fn unified_rows(side: Side<'_>, rows: &[usize]) -> Result<(spring::Activations, DMatrix<f64>)> {
    if let Some(&r) = rows.iter().find(|&&r| r >= side.static_mapped.rows() || r >= side.contextual.rows()) {
        return Err(Error::InvalidArgument(format!("training row {r} out of range")));
    }
    let act = spring::forward(side.contextual.matrix().select_rows(rows), side.params)?;
    let mut u = side.static_mapped.matrix().select_rows(rows);
    if u.ncols() != act.h2.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "static dimension {}, spring network outputs {}",
            u.ncols(),
            act.h2.ncols()
        )));
    }
    for (j, mut col) in u.column_iter_mut().enumerate() {
        col.axpy(side.params.gamma[j], &act.h2.column(j), 1.0);
    }
    Ok((act, u))
}

type Column = nalgebra::DVector<f64>;

/// `cos(u, v)` with its gradients in `u` and `v`. Zero vectors give zero.
fn cosine_grad(u: &Column, v: &Column) -> (f64, Column, Column) {
    let (nu, nv) = (u.norm(), v.norm());
    if nu == 0.0 || nv == 0.0 {
        return (0.0, Column::zeros(u.len()), Column::zeros(v.len()));
    }
    let c = u.dot(v) / (nu * nv);
    let gu = v / (nu * nv) - u * (c / (nu * nu));
    let gv = u / (nu * nv) - v * (c / (nv * nv));
    (c, gu, gv)
}

/// Trained networks and the final dictionary.
#[derive(Debug, Clone, PartialEq)]
pub struct CscbliModel {
    pub src: SpringParams,
    pub trg: SpringParams,
    pub dictionary: Dictionary,
    /// Mean batch loss per epoch, across all rounds.
    pub loss_trace: Vec<f64>,
    pub rounds: usize,
    /// Whether two consecutive rounds induced the same dictionary.
    pub stabilized: bool,
}

impl CscbliModel {
    pub fn unified(
        &self,
        e_x: &EmbeddingMatrix,
        e_y: &EmbeddingMatrix,
        a_x: &ContextualMatrix,
        a_y: &ContextualMatrix,
    ) -> Result<(EmbeddingMatrix, EmbeddingMatrix)> {
        Ok((build_unified(e_x, a_x, &self.src)?, build_unified(e_y, a_y, &self.trg)?))
    }
}

/// Forward CSLS dictionary over the leading `dict_vocab_cutoff` rows.
fn csls_dictionary(ux: &EmbeddingMatrix, uy: &EmbeddingMatrix, cfg: &CscbliConfig) -> Dictionary {
    let ns = cfg.dict_vocab_cutoff.min(ux.rows());
    let nt = cfg.dict_vocab_cutoff.min(uy.rows());
    let scorer = Scorer::new(
        &ux.matrix().rows(0, ns).into_owned(),
        &uy.matrix().rows(0, nt).into_owned(),
        Retrieval::Csls,
        cfg.csls_neighborhood,
    );
    Dictionary::from_pairs(scorer.argmax(None).into_iter().enumerate())
}

/// Trains both spring networks, alternating contrastive SGD epochs with
/// CSLS re-induction until the dictionary repeats or `refine_rounds` is
/// reached. The first dictionary is induced from the static spaces.
pub fn train_cscbli(
    e_x: &EmbeddingMatrix,
    e_y: &EmbeddingMatrix,
    a_x: &ContextualMatrix,
    a_y: &ContextualMatrix,
    cfg: &CscbliConfig,
) -> Result<CscbliModel> {
    cfg.validate()?;
    if e_x.rows() != a_x.rows() || e_y.rows() != a_y.rows() {
        return Err(Error::DimensionMismatch(format!(
            "static rows {}/{} vs contextual rows {}/{}",
            e_x.rows(),
            e_y.rows(),
            a_x.rows(),
            a_y.rows()
        )));
    }
    if e_x.dim() != e_y.dim() {
        return Err(Error::DimensionMismatch(format!(
            "static dimensions {} and {}",
            e_x.dim(),
            e_y.dim()
        )));
    }
    let d = e_x.dim();
    let mut px = SpringParams::init(a_x.dim(), d, derive_seed(cfg.seed, &[0]));
    let mut py = SpringParams::init(a_y.dim(), d, derive_seed(cfg.seed, &[1]));
    let mut r = rng(derive_seed(cfg.seed, &[2]));
    let n_neg = cfg.dict_vocab_cutoff.min(e_y.rows());

    let mut dict = csls_dictionary(e_x, e_y, cfg);
    let mut loss_trace = Vec::new();
    let mut rounds = 0;
    let mut stabilized = false;
    while rounds < cfg.refine_rounds {
        let mut pairs = dict.pairs().to_vec();
        for epoch in 0..cfg.epochs_per_round {
            pairs.shuffle(&mut r);
            let mut total = 0.0;
            let mut batches = 0;
            for (b, chunk) in pairs.chunks(cfg.batch_size).enumerate() {
                let triples: Vec<Triple> = chunk
                    .iter()
                    .flat_map(|&(src, pos)| {
                        (0..cfg.negatives_per_pair)
                            .map(|_| Triple {
                                src,
                                pos,
                                neg: sample_negative(&mut r, n_neg, pos),
                            })
                            .collect::<Vec<_>>()
                    })
                    .collect();
                let lg = contrastive_loss(
                    Side { static_mapped: e_x, contextual: a_x, params: &px },
                    Side { static_mapped: e_y, contextual: a_y, params: &py },
                    &triples,
                    cfg.margin,
                )?;
                px.add_scaled(&lg.grad_x, -cfg.learning_rate);
                py.add_scaled(&lg.grad_y, -cfg.learning_rate);
                if !lg.loss.is_finite() || !px.is_finite() || !py.is_finite() {
                    return Err(Error::Diverged(format!(
                        "loss {} at round {rounds}, epoch {epoch}, batch {b} (learning_rate {}, margin {})",
                        lg.loss, cfg.learning_rate, cfg.margin
                    )));
                }
                total += lg.loss;
                batches += 1;
            }
            loss_trace.push(if batches == 0 { 0.0 } else { total / batches as f64 });
        }
        rounds += 1;
        let ux = build_unified(e_x, a_x, &px)?;
        let uy = build_unified(e_y, a_y, &py)?;
        let next = csls_dictionary(&ux, &uy, cfg);
        log::debug!("cscbli round {rounds}: {} pairs, last loss {:?}", next.len(), loss_trace.last());
        if next == dict {
            stabilized = true;
            break;
        }
        dict = next;
    }
    Ok(CscbliModel {
        src: px,
        trg: py,
        dictionary: dict,
        loss_trace,
        rounds,
        stabilized,
    })
}

fn sample_negative<R: Rng>(r: &mut R, n: usize, avoid: usize) -> usize {
    if n < 2 {
        return avoid;
    }
    let v = r.random_range(0..n - 1);
    if v >= avoid {
        v + 1
    } else {
        v
    }
}

fn check_rows(u_x: &EmbeddingMatrix, u_y: &EmbeddingMatrix, a0_x: &ContextualMatrix, a0_y: &ContextualMatrix) -> Result<()> {
    if u_x.rows() != a0_x.rows() || u_y.rows() != a0_y.rows() {
        return Err(Error::DimensionMismatch(format!(
            "unified rows {}/{} vs contextual rows {}/{}",
            u_x.rows(),
            u_y.rows(),
            a0_x.rows(),
            a0_y.rows()
        )));
    }
    if u_x.dim() != u_y.dim() || a0_x.dim() != a0_y.dim() {
        return Err(Error::DimensionMismatch("source and target dimensions differ".into()));
    }
    Ok(())
}

/// Scorer over `cos(U_x, U_y) + lambda * cos(A0_x, A0_y)`, optionally with
/// CSLS applied to the interpolated score.
pub fn interpolated_scorer(
    u_x: &EmbeddingMatrix,
    u_y: &EmbeddingMatrix,
    a0_x: &ContextualMatrix,
    a0_y: &ContextualMatrix,
    lambda: f64,
    retrieval: Retrieval,
    k: usize,
) -> Result<Scorer> {
    check_rows(u_x, u_y, a0_x, a0_y)?;
    Ok(Scorer::combined(
        &[(1.0, u_x.matrix(), u_y.matrix()), (lambda, a0_x.matrix(), a0_y.matrix())],
        retrieval,
        k,
    ))
}

/// Full interpolated score matrix.
pub fn interpolated_scores(
    u_x: &EmbeddingMatrix,
    u_y: &EmbeddingMatrix,
    a0_x: &ContextualMatrix,
    a0_y: &ContextualMatrix,
    lambda: f64,
) -> Result<DMatrix<f64>> {
    interpolated_scorer(u_x, u_y, a0_x, a0_y, lambda, Retrieval::NearestNeighbor, 1).map(|s| s.matrix())
}

/// Top `top` targets per source row by interpolated score, descending.
pub fn interpolate_rank(
    u_x: &EmbeddingMatrix,
    u_y: &EmbeddingMatrix,
    a0_x: &ContextualMatrix,
    a0_y: &ContextualMatrix,
    lambda: f64,
    top: usize,
) -> Result<Vec<Vec<(usize, f64)>>> {
    interpolated_scorer(u_x, u_y, a0_x, a0_y, lambda, Retrieval::NearestNeighbor, 1).map(|s| s.top_k(top))
}

#[cfg(test)]
mod tests;
