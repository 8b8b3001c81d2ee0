//! Synthetic embedding pairs with a known (planted) alignment.
//!
//! The target space is a row permutation of a rotated copy of the source
//! space, optionally perturbed by uniform noise. The gold dictionary is the
//! permutation itself, so alignment quality can be measured exactly.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use crate::dictionary::Dictionary;
use crate::embeddings::{save_embeddings, EmbeddingMatrix, FrequencyTable, Vocabulary};
use crate::error::{Error, Result};
use crate::util::rng;

/// `z = P x O + noise` with the permutation recorded as `gold`.
#[derive(Debug, Clone)]
pub struct PlantedPair {
    pub x: EmbeddingMatrix,
    pub z: EmbeddingMatrix,
    pub rotation: DMatrix<f64>,
    /// `target_of[i]` is the target row holding source row `i`.
    pub target_of: Vec<usize>,
}

impl PlantedPair {
    /// Gold `(source, target)` pairs.
    pub fn gold_pairs(&self) -> Vec<(usize, usize)> {
        self.target_of.iter().enumerate().map(|(s, &t)| (s, t)).collect()
    }

    pub fn gold(&self) -> Dictionary {
        Dictionary::from_pairs(self.gold_pairs())
    }

    /// Fraction of source rows whose predicted target is the planted one.
    pub fn accuracy(&self, predicted_target: &[usize]) -> f64 {
        let hits = predicted_target
            .iter()
            .zip(&self.target_of)
            .filter(|(p, g)| p == g)
            .count();
        hits as f64 / self.target_of.len() as f64
    }

    /// Word lists `s0..` and `t0..` matching the rows of `x` and `z`.
    pub fn vocabularies(&self) -> (Vocabulary, Vocabulary) {
        let n = self.target_of.len();
        let src = (0..n).map(|i| format!("s{i}")).collect();
        let trg = (0..n).map(|i| format!("t{i}")).collect();
        (
            Vocabulary::new(src).expect("unique names"),
            Vocabulary::new(trg).expect("unique names"),
        )
    }
}

/// Haar-distributed random orthogonal matrix.
pub fn random_orthogonal(d: usize, seed: u64) -> DMatrix<f64> {
    let mut r = rng(seed);
    let g = DMatrix::from_fn(d, d, |_, _| r.sample::<f64, _>(StandardNormal));
    let qr = g.qr();
    let mut q = qr.q();
    let rm = qr.r();
    for j in 0..d {
        if rm[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

/// Source rows drawn from an anisotropic Gaussian whose per-dimension
/// scale decays as `1 / sqrt(1 + j/4)`, which gives each word a more
/// distinctive similarity profile than an isotropic cloud.
pub fn source_space(n: usize, d: usize, seed: u64) -> DMatrix<f64> {
    let mut r = rng(seed);
    DMatrix::from_fn(n, d, |_, j| {
        let scale = 1.0 / (1.0 + j as f64 / 4.0).sqrt();
        scale * r.sample::<f64, _>(StandardNormal)
    })
}

/// Planted pair with `n` words in `d` dimensions; `noise` is the amplitude
/// of uniform `(-noise, noise)` perturbations added to the target rows
/// after the source has been length-normalized.
pub fn planted_pair(n: usize, d: usize, noise: f64, seed: u64) -> PlantedPair {
    let mut x = source_space(n, d, seed);
    for mut row in x.row_iter_mut() {
        let norm = row.norm();
        row.unscale_mut(norm);
    }
    let rotation = random_orthogonal(d, seed ^ 0x5eed_0001);
    let mut r = rng(seed ^ 0x5eed_0002);
    let mut target_of: Vec<usize> = (0..n).collect();
    target_of.shuffle(&mut r);

    let rotated = &x * &rotation;
    let mut z = DMatrix::zeros(n, d);
    for (s, &t) in target_of.iter().enumerate() {
        z.set_row(t, &rotated.row(s));
    }
    if noise > 0.0 {
        z.iter_mut().for_each(|v| *v += r.random_range(-noise..noise));
    }
    PlantedPair {
        x: EmbeddingMatrix::new(x).expect("finite"),
        z: EmbeddingMatrix::new(z).expect("finite"),
        rotation,
        target_of,
    }
}

/// Static spaces already aligned by the planted rotation, with a fraction
/// of source rows replaced by random unit vectors, plus contextual spaces
/// that are exact row-permuted copies of each other.
#[derive(Debug, Clone)]
pub struct CorruptedPair {
    pub static_x: EmbeddingMatrix,
    pub static_z: EmbeddingMatrix,
    pub context_x: DMatrix<f64>,
    pub context_z: DMatrix<f64>,
    pub corrupted: Vec<usize>,
    pub target_of: Vec<usize>,
}

pub fn corrupted_pair(n: usize, d: usize, d0: usize, fraction: f64, seed: u64) -> CorruptedPair {
    let planted = planted_pair(n, d, 0.0, seed);
    let mut x = planted.x.matrix().clone();
    let z = planted.z.matrix() * planted.rotation.transpose();
    let mut r = rng(seed ^ 0x5eed_0003);
    let mut rows: Vec<usize> = (0..n).collect();
    rows.shuffle(&mut r);
    let mut corrupted: Vec<usize> = rows[..((n as f64) * fraction).round() as usize].to_vec();
    corrupted.sort_unstable();
    for &i in &corrupted {
        let v: Vec<f64> = (0..d).map(|_| r.sample(StandardNormal)).collect();
        let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        for (j, a) in v.iter().enumerate() {
            x[(i, j)] = a / norm;
        }
    }
    let context_x = source_space(n, d0, seed ^ 0x5eed_0004);
    let mut context_z = DMatrix::zeros(n, d0);
    for (s, &t) in planted.target_of.iter().enumerate() {
        context_z.set_row(t, &context_x.row(s));
    }
    CorruptedPair {
        static_x: EmbeddingMatrix::new(x).expect("finite"),
        static_z: EmbeddingMatrix::new(z).expect("finite"),
        context_x,
        context_z,
        corrupted,
        target_of: planted.target_of,
    }
}

/// Writes a planted pair as a runnable experiment directory: embeddings,
/// Zipf-like frequency sidecars, contextual vectors that are row-permuted
/// copies across languages, the gold dictionary and `experiment.ini`.
pub fn write_planted_fixture(dir: &Path, n: usize, d: usize, d0: usize, noise: f64, seed: u64) -> Result<PlantedPair> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let pair = planted_pair(n, d, noise, seed);
    let (src, trg) = pair.vocabularies();
    save_embeddings(dir.join("src.vec"), &src, &pair.x)?;
    save_embeddings(dir.join("trg.vec"), &trg, &pair.z)?;

    let zipf = |vocab: &Vocabulary| {
        let counts: HashMap<String, u64> = vocab
            .words()
            .iter()
            .enumerate()
            .map(|(i, w)| (w.clone(), (100_000 / (i as u64 + 1)).max(1)))
            .collect();
        FrequencyTable::from_counts(counts)
    };
    zipf(&src).save(dir.join("src.freq"))?;
    // target rows are permuted, so each target inherits its source's count
    let mut trg_counts = HashMap::new();
    for (s, &t) in pair.target_of.iter().enumerate() {
        trg_counts.insert(trg.word(t).to_string(), (100_000 / (s as u64 + 1)).max(1));
    }
    FrequencyTable::from_counts(trg_counts).save(dir.join("trg.freq"))?;

    let ctx_x = source_space(n, d0, seed ^ 0x5eed_0005);
    let mut ctx_z = DMatrix::zeros(n, d0);
    for (s, &t) in pair.target_of.iter().enumerate() {
        ctx_z.set_row(t, &ctx_x.row(s));
    }
    save_embeddings(dir.join("src_ctx.vec"), &src, &EmbeddingMatrix::new(ctx_x).expect("finite"))?;
    save_embeddings(dir.join("trg_ctx.vec"), &trg, &EmbeddingMatrix::new(ctx_z).expect("finite"))?;

    let gold_path = dir.join("gold.tsv");
    let mut gold = String::new();
    for (s, &t) in pair.target_of.iter().enumerate() {
        gold.push_str(&format!("{}\t{}\n", src.word(s), trg.word(t)));
    }
    fs::write(&gold_path, gold).map_err(|e| Error::io(&gold_path, e))?;

    let ini = format!(
        "# Planted pair: {n} words, {d} dimensions, noise {noise}, seed {seed}.
seed = {seed}
language_pair = planted
embedding_kind = synthetic
src_embeddings = src.vec
trg_embeddings = trg.vec
src_freq = src.freq
trg_freq = trg.freq
src_contextual = src_ctx.vec
trg_contextual = trg_ctx.vec
gold = gold.tsv
plans = M1, M2, M3, M4, M5, M6, M7, M8, M15, M17

[M3]
alpha_src = 0.15
alpha_trg = 0.15

[M4]
alpha_src = 0.15
alpha_trg = 0.15

[M5]
alpha_src = 0.15
alpha_trg = 0.15

[M7]
alpha_src = 0.15
alpha_trg = 0.15

[M17]
alpha_src = 0.15
alpha_trg = 0.15
"
    );
    let ini_path = dir.join("experiment.ini");
    fs::write(&ini_path, ini).map_err(|e| Error::io(&ini_path, e))?;
    Ok(pair)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::orthogonality_error;

    #[test]
    fn planted_structure() {
        let p = planted_pair(30, 5, 0.0, 4);
        assert!(orthogonality_error(&p.rotation) < 1e-12);
        for (s, &t) in p.target_of.iter().enumerate() {
            let want = p.x.matrix().row(s) * &p.rotation;
            assert!((p.z.matrix().row(t) - want).norm() < 1e-12);
        }
        assert_eq!(p.accuracy(&p.target_of), 1.0);
        let again = planted_pair(30, 5, 0.0, 4);
        assert_eq!(again.z, p.z);
    }

    #[test]
    fn written_fixture_loads_back() {
        let dir = tempfile::tempdir().unwrap();
        let pair = write_planted_fixture(dir.path(), 40, 6, 5, 0.0, 3).unwrap();
        let (vocab, x) = crate::embeddings::load_embeddings(dir.path().join("src.vec"), Some(6)).unwrap();
        assert_eq!(vocab.len(), 40);
        assert!((x.matrix() - pair.x.matrix()).amax() < 1e-8);
        let freq = FrequencyTable::load(dir.path().join("trg.freq")).unwrap();
        let (_, trg) = pair.vocabularies();
        assert_eq!(freq.count(trg.word(pair.target_of[0])), 100_000);
        let gold = crate::eval::GoldDictionary::load(dir.path().join("gold.tsv")).unwrap();
        assert_eq!(gold.len(), 40);
        let cfg = crate::experiment::ExperimentConfig::load(dir.path().join("experiment.ini"), None).unwrap();
        assert_eq!(cfg.plans[0].code, "M1");
    }
}
