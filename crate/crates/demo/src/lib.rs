//! Browser bindings for a few small, self-contained experiments.

use std::collections::HashMap;

use wasm_bindgen::prelude::*;

use bli_core::fixtures::{planted_pair, source_space};
use bli_core::init::{unsupervised_init, InitConfig};
use bli_core::preprocess::{linear_transform, normalize};
use bli_core::retrieval::Scorer;
use bli_core::selflearn::{self_learn, SelfLearnConfig};
use bli_core::{EmbeddingMatrix, Retrieval};

fn js_err(e: impl std::fmt::Display) -> JsError {
    JsError::new(&e.to_string())
}

#[wasm_bindgen]
pub struct Recovery {
    accuracy: f64,
    init_accuracy: f64,
    iterations: usize,
    objective: Vec<f64>,
    keep_prob: Vec<f64>,
}

#[wasm_bindgen]
impl Recovery {
    /// Share of source words whose top CSLS match is the planted partner.
    #[wasm_bindgen(getter)]
    pub fn accuracy(&self) -> f64 {
        self.accuracy
    }

    /// Share of planted pairs already present in the initial dictionary.
    #[wasm_bindgen(getter)]
    pub fn init_accuracy(&self) -> f64 {
        self.init_accuracy
    }

    #[wasm_bindgen(getter)]
    pub fn iterations(&self) -> usize {
        self.iterations
    }

    #[wasm_bindgen(getter)]
    pub fn objective(&self) -> Vec<f64> {
        self.objective.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn keep_prob(&self) -> Vec<f64> {
        self.keep_prob.clone()
    }
}

/// Hides a random rotation and permutation between two noisy copies of a
/// space and recovers it without supervision.
#[wasm_bindgen]
pub fn recover_planted(words: usize, dim: usize, noise: f64, seed: u32) -> Result<Recovery, JsError> {
    let seed = u64::from(seed);
    let p = planted_pair(words, dim, noise, seed);
    let x = normalize(&p.x).map_err(js_err)?;
    let z = normalize(&p.z).map_err(js_err)?;
    let init = unsupervised_init(&x, &z, &InitConfig::default()).map_err(js_err)?;
    let planted: std::collections::HashSet<(usize, usize)> = p.gold_pairs().into_iter().collect();
    let init_hits = init.pairs().iter().filter(|pair| planted.contains(pair)).count();
    let cfg = SelfLearnConfig { seed, ..Default::default() };
    let result = self_learn(&x, &z, &init, &cfg).map_err(js_err)?;
    let (xm, zm) = result.mapped(&x, &z).map_err(js_err)?;
    let pred = Scorer::new(xm.matrix(), zm.matrix(), Retrieval::Csls, 10).argmax(None);
    Ok(Recovery {
        accuracy: p.accuracy(&pred),
        init_accuracy: init_hits as f64 / words as f64,
        iterations: result.iterations,
        objective: result.trace.iter().map(|t| t.objective).collect(),
        keep_prob: result.trace.iter().map(|t| t.keep_prob).collect(),
    })
}

/// Singular values of a random space after the similarity-order
/// transform, scaled so the largest is 1.
#[wasm_bindgen]
pub fn transformed_spectrum(words: usize, dim: usize, alpha: f64, seed: u32) -> Result<Vec<f64>, JsError> {
    let seed = u64::from(seed);
    let x = EmbeddingMatrix::new(source_space(words, dim, seed)).map_err(js_err)?;
    let x = normalize(&x).map_err(js_err)?;
    let y = linear_transform(&x, alpha).map_err(js_err)?;
    let mut s: Vec<f64> = y.matrix().clone().svd(false, false).singular_values.iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    let top = s.first().copied().unwrap_or(1.0);
    Ok(s.into_iter().map(|v| v / top).collect())
}

/// Retrieves a target for every query in two unrelated random spaces.
/// Returns `[nn_distinct, nn_largest_hub, csls_distinct, csls_largest_hub]`.
#[wasm_bindgen]
pub fn hubness(words: usize, dim: usize, k: usize, seed: u32) -> Result<Vec<f64>, JsError> {
    let seed = u64::from(seed);
    let x = EmbeddingMatrix::new(source_space(words, dim, seed)).map_err(js_err)?;
    let z = EmbeddingMatrix::new(source_space(words, dim, seed.wrapping_add(1))).map_err(js_err)?;
    let stats = |retrieval| {
        let picks = Scorer::new(x.matrix(), z.matrix(), retrieval, k).argmax(None);
        let mut counts: HashMap<usize, usize> = HashMap::new();
        for j in picks {
            *counts.entry(j).or_default() += 1;
        }
        [counts.len() as f64, counts.values().copied().max().unwrap_or(0) as f64]
    };
    let [nd, nh] = stats(Retrieval::NearestNeighbor);
    let [cd, ch] = stats(Retrieval::Csls);
    Ok(vec![nd, nh, cd, ch])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exports_run_natively() {
        let r = recover_planted(120, 10, 0.0, 1).ok().unwrap();
        assert!(r.accuracy() > 0.95);
        assert_eq!(r.objective().len(), r.keep_prob().len());
        let s = transformed_spectrum(80, 8, 0.5, 2).ok().unwrap();
        assert_eq!(s.len(), 8);
        assert!((s[0] - 1.0).abs() < 1e-12);
        let h = hubness(200, 6, 10, 3).ok().unwrap();
        assert!(h[2] >= h[0]);
    }
}
