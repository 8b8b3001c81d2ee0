//! Blockwise nearest-neighbour and CSLS retrieval over row-embedding spaces.
//!
//! All scoring works on unit-normalized rows, so dot products are cosines.
//! Large score matrices are never materialized: source rows are processed in
//! fixed-size blocks, and every per-row result depends only on that row, so
//! output is identical whether blocks run sequentially or in parallel.

use std::ops::Range;

use nalgebra::DMatrix;
use rand::Rng;

use crate::linalg::unit_rows;
use crate::util::{derive_seed, rng};

const BLOCK: usize = 512;

/// How candidate translations are scored.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Retrieval {
    /// Plain cosine similarity.
    NearestNeighbor,
    /// Cross-domain similarity local scaling: `2 cos(x, z) - r_T(x) - r_S(z)`.
    Csls,
}

impl std::str::FromStr for Retrieval {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "nn" | "nearest_neighbor" | "nearest-neighbor" => Ok(Retrieval::NearestNeighbor),
            "csls" => Ok(Retrieval::Csls),
            other => Err(format!("unknown retrieval `{other}` (expected nn or csls)")),
        }
    }
}

impl std::fmt::Display for Retrieval {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Retrieval::NearestNeighbor => "nn",
            Retrieval::Csls => "csls",
        })
    }
}

pub(crate) fn map_blocks<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(Range<usize>) -> Vec<T> + Sync + Send,
{
    let ranges: Vec<Range<usize>> = (0..n)
        .step_by(BLOCK)
        .map(|s| s..(s + BLOCK).min(n))
        .collect();
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        ranges.into_par_iter().flat_map_iter(&f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        ranges.into_iter().flat_map(f).collect()
    }
}

/// Mean cosine of each query row to its `k` most similar corpus rows.
/// Both inputs must already be unit-normalized.
pub fn knn_mean_similarity(queries: &DMatrix<f64>, corpus: &DMatrix<f64>, k: usize) -> Vec<f64> {
    let k = k.clamp(1, corpus.nrows().max(1));
    let corpus_t = corpus.transpose();
    map_blocks(queries.nrows(), |range| {
        let block = queries.rows(range.start, range.len()) * &corpus_t;
        let mut row = vec![0.0; block.ncols()];
        (0..block.nrows())
            .map(|i| {
                for (j, slot) in row.iter_mut().enumerate() {
                    *slot = block[(i, j)];
                }
                let pivot = row.len() - k;
                row.select_nth_unstable_by(pivot, |a, b| a.total_cmp(b));
                row[pivot..].iter().sum::<f64>() / k as f64
            })
            .collect()
    })
}

struct Part {
    weight: f64,
    queries: DMatrix<f64>,
    candidates_t: DMatrix<f64>,
}

/// Score table between a query space and a candidate space.
///
/// The base score is a weighted sum of cosine tables over one or more
/// aligned view pairs (a single view with weight 1 is plain cosine). CSLS,
/// when selected, is applied to that combined base score. Rows are
/// normalized on construction.
pub struct Scorer {
    parts: Vec<Part>,
    query_penalty: Option<Vec<f64>>,
    candidate_penalty: Option<Vec<f64>>,
}

impl Scorer {
    pub fn new(queries: &DMatrix<f64>, candidates: &DMatrix<f64>, retrieval: Retrieval, k: usize) -> Self {
        Self::combined(&[(1.0, queries, candidates)], retrieval, k)
    }

    /// Base score `sum_v weight_v * cos(queries_v, candidates_v)`. All views
    /// must have the same query and candidate row counts.
    ///
    /// # Panics
    /// If `views` is empty or row counts disagree.
    pub fn combined(views: &[(f64, &DMatrix<f64>, &DMatrix<f64>)], retrieval: Retrieval, k: usize) -> Self {
        assert!(!views.is_empty(), "scorer needs at least one view");
        let (nq, nc) = (views[0].1.nrows(), views[0].2.nrows());
        let parts: Vec<Part> = views
            .iter()
            .map(|&(weight, q, c)| {
                assert!(q.nrows() == nq && c.nrows() == nc, "view row counts disagree");
                Part {
                    weight,
                    queries: unit_rows(q),
                    candidates_t: unit_rows(c).transpose(),
                }
            })
            .collect();
        let mut scorer = Scorer {
            parts,
            query_penalty: None,
            candidate_penalty: None,
        };
        if retrieval == Retrieval::Csls {
            let qp = scorer.row_topk_means(k);
            let cp = scorer.reversed().row_topk_means(k);
            scorer.query_penalty = Some(qp);
            scorer.candidate_penalty = Some(cp);
        }
        scorer
    }

    fn row_topk_means(&self, k: usize) -> Vec<f64> {
        let k = k.clamp(1, self.n_candidates().max(1));
        map_blocks(self.n_queries(), |range| {
            let block = self.base_block(range);
            let mut row = vec![0.0; block.ncols()];
            (0..block.nrows())
                .map(|i| {
                    for (j, slot) in row.iter_mut().enumerate() {
                        *slot = block[(i, j)];
                    }
                    let pivot = row.len() - k;
                    row.select_nth_unstable_by(pivot, |a, b| a.total_cmp(b));
                    row[pivot..].iter().sum::<f64>() / k as f64
                })
                .collect()
        })
    }

    /// The reverse-direction scorer (candidates become queries) without
    /// recomputing neighbourhood statistics.
    pub fn reversed(&self) -> Self {
        Scorer {
            parts: self
                .parts
                .iter()
                .map(|p| Part {
                    weight: p.weight,
                    queries: p.candidates_t.transpose(),
                    candidates_t: p.queries.transpose(),
                })
                .collect(),
            query_penalty: self.candidate_penalty.clone(),
            candidate_penalty: self.query_penalty.clone(),
        }
    }

    /// Scorer restricted to the given query rows; neighbourhood statistics
    /// computed on the full query set are kept.
    pub fn select_queries(&self, rows: &[usize]) -> Self {
        Scorer {
            parts: self
                .parts
                .iter()
                .map(|p| Part {
                    weight: p.weight,
                    queries: p.queries.select_rows(rows),
                    candidates_t: p.candidates_t.clone(),
                })
                .collect(),
            query_penalty: self.query_penalty.as_ref().map(|qp| rows.iter().map(|&r| qp[r]).collect()),
            candidate_penalty: self.candidate_penalty.clone(),
        }
    }

    pub fn n_queries(&self) -> usize {
        self.parts[0].queries.nrows()
    }

    pub fn n_candidates(&self) -> usize {
        self.parts[0].candidates_t.ncols()
    }

    fn base_block(&self, range: Range<usize>) -> DMatrix<f64> {
        let mut parts = self.parts.iter();
        let first = parts.next().expect("non-empty");
        let mut acc = first.queries.rows(range.start, range.len()) * &first.candidates_t;
        if first.weight != 1.0 {
            acc *= first.weight;
        }
        for p in parts {
            let cos = p.queries.rows(range.start, range.len()) * &p.candidates_t;
            acc += cos * p.weight;
        }
        acc
    }

    /// Scores for query rows `range` against every candidate.
    pub fn block(&self, range: Range<usize>) -> DMatrix<f64> {
        let base = self.base_block(range.clone());
        match (&self.query_penalty, &self.candidate_penalty) {
            (Some(qp), Some(cp)) => DMatrix::from_fn(base.nrows(), base.ncols(), |i, j| {
                2.0 * base[(i, j)] - qp[range.start + i] - cp[j]
            }),
            _ => base,
        }
    }

    /// Full score matrix. Intended for small spaces.
    pub fn matrix(&self) -> DMatrix<f64> {
        self.block(0..self.n_queries())
    }

    /// Best candidate per query; ties go to the lower candidate index.
    ///
    /// With `dropout = Some((keep_prob, seed))`, each score is independently
    /// zeroed with probability `1 - keep_prob` before the argmax. The random
    /// stream of query row `i` is derived from `(seed, i)` only.
    pub fn argmax(&self, dropout: Option<(f64, u64)>) -> Vec<usize> {
        self.argmax_with_score(dropout).into_iter().map(|(j, _)| j).collect()
    }

    /// Like [`Scorer::argmax`], also returning the winning (post-dropout) score.
    pub fn argmax_with_score(&self, dropout: Option<(f64, u64)>) -> Vec<(usize, f64)> {
        map_blocks(self.n_queries(), |range| {
            let block = self.block(range.clone());
            (0..block.nrows())
                .map(|i| {
                    let mut stream = dropout
                        .filter(|(p, _)| *p < 1.0)
                        .map(|(p, seed)| (p, rng(derive_seed(seed, &[(range.start + i) as u64]))));
                    let mut best = (0usize, f64::NEG_INFINITY);
                    for j in 0..block.ncols() {
                        let mut s = block[(i, j)];
                        if let Some((p, r)) = stream.as_mut() {
                            if r.random::<f64>() >= *p {
                                s = 0.0;
                            }
                        }
                        if s > best.1 {
                            best = (j, s);
                        }
                    }
                    best
                })
                .collect()
        })
    }

    /// The `k` best candidates per query, best first; ties by lower index.
    pub fn top_k(&self, k: usize) -> Vec<Vec<(usize, f64)>> {
        let k = k.min(self.n_candidates());
        map_blocks(self.n_queries(), |range| {
            let block = self.block(range);
            (0..block.nrows())
                .map(|i| {
                    let mut row: Vec<(usize, f64)> =
                        (0..block.ncols()).map(|j| (j, block[(i, j)])).collect();
                    let cmp = |a: &(usize, f64), b: &(usize, f64)| {
                        b.1.total_cmp(&a.1).then(a.0.cmp(&b.0))
                    };
                    if k < row.len() && k > 0 {
                        row.select_nth_unstable_by(k - 1, cmp);
                        row.truncate(k);
                    }
                    row.truncate(k);
                    row.sort_by(cmp);
                    row
                })
                .collect()
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn space(rows: &[&[f64]]) -> DMatrix<f64> {
        DMatrix::from_fn(rows.len(), rows[0].len(), |i, j| rows[i][j])
    }

    #[test]
    fn identical_spaces_match_themselves() {
        let x = space(&[&[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0], &[0.0, 0.0, 1.0]]);
        for r in [Retrieval::NearestNeighbor, Retrieval::Csls] {
            assert_eq!(Scorer::new(&x, &x, r, 2).argmax(None), vec![0, 1, 2]);
        }
    }

    #[test]
    fn knn_mean_uses_top_k() {
        let q = space(&[&[1.0, 0.0]]);
        let c = unit_rows(&space(&[&[1.0, 0.0], &[0.0, 1.0], &[1.0, 1.0]]));
        let r = knn_mean_similarity(&q, &c, 2);
        assert!((r[0] - (1.0 + 0.5f64.sqrt()) / 2.0).abs() < 1e-12);
        // k larger than the corpus clamps to the corpus size.
        let all = knn_mean_similarity(&q, &c, 10);
        assert!((all[0] - (1.0 + 0.5f64.sqrt()) / 3.0).abs() < 1e-12);
    }

    #[test]
    fn query_subset_keeps_full_statistics() {
        let q = space(&[&[1.0, 0.2], &[0.1, 1.0], &[0.7, 0.7], &[-1.0, 0.3]]);
        let c = space(&[&[0.0, 1.0], &[1.0, 0.0], &[0.6, 0.8]]);
        let full = Scorer::new(&q, &c, Retrieval::Csls, 2);
        let sub = full.select_queries(&[3, 1]);
        let (a, b) = (full.matrix(), sub.matrix());
        assert_eq!(b.row(0), a.row(3));
        assert_eq!(b.row(1), a.row(1));
    }

    #[test]
    fn top_k_orders_and_breaks_ties_low() {
        let q = space(&[&[1.0, 0.0]]);
        let c = space(&[&[0.0, 1.0], &[1.0, 0.0], &[1.0, 0.0], &[1.0, 1.0]]);
        let top = Scorer::new(&q, &c, Retrieval::NearestNeighbor, 1).top_k(3);
        let idx: Vec<usize> = top[0].iter().map(|p| p.0).collect();
        assert_eq!(idx, vec![1, 2, 3]);
    }

    #[test]
    fn dropout_is_seeded() {
        let q = space(&[&[1.0, 0.2], &[0.3, 1.0], &[0.5, 0.5]]);
        let s = Scorer::new(&q, &q, Retrieval::Csls, 2);
        assert_eq!(s.argmax(Some((0.3, 7))), s.argmax(Some((0.3, 7))));
        assert_eq!(s.argmax(Some((1.0, 7))), s.argmax(None));
    }

    #[test]
    fn parses_retrieval_names() {
        assert_eq!("csls".parse::<Retrieval>().unwrap(), Retrieval::Csls);
        assert_eq!("NN".parse::<Retrieval>().unwrap(), Retrieval::NearestNeighbor);
        assert!("knn".parse::<Retrieval>().is_err());
    }
}
