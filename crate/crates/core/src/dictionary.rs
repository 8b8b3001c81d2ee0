//! Bilingual dictionaries as sets of `(source row, target row)` pairs.

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use log::warn;

use crate::embeddings::Vocabulary;
use crate::error::{Error, Result};

/// Deduplicated translation pairs, kept sorted by `(source, target)`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct Dictionary {
    pairs: Vec<(usize, usize)>,
}

impl Dictionary {
    pub fn from_pairs<I: IntoIterator<Item = (usize, usize)>>(pairs: I) -> Self {
        let set: BTreeSet<(usize, usize)> = pairs.into_iter().collect();
        Dictionary {
            pairs: set.into_iter().collect(),
        }
    }

    /// `(i, i)` for `i < n`.
    pub fn identity(n: usize) -> Self {
        Dictionary {
            pairs: (0..n).map(|i| (i, i)).collect(),
        }
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn contains(&self, pair: (usize, usize)) -> bool {
        self.pairs.binary_search(&pair).is_ok()
    }

    pub fn check_bounds(&self, n_src: usize, n_trg: usize) -> Result<()> {
        match self.pairs.iter().find(|(s, t)| *s >= n_src || *t >= n_trg) {
            Some((s, t)) => Err(Error::InvalidArgument(format!(
                "dictionary pair ({s}, {t}) outside {n_src} x {n_trg}"
            ))),
            None => Ok(()),
        }
    }

    /// Fraction of `gold` pairs present in this dictionary.
    pub fn recall(&self, gold: &[(usize, usize)]) -> f64 {
        if gold.is_empty() {
            return 0.0;
        }
        gold.iter().filter(|p| self.contains(**p)).count() as f64 / gold.len() as f64
    }

    /// Maps every pair through row permutations `src_map[i]`, `trg_map[j]`.
    pub fn remap(&self, src_map: &[usize], trg_map: &[usize]) -> Self {
        Dictionary::from_pairs(self.pairs.iter().map(|&(s, t)| (src_map[s], trg_map[t])))
    }

    /// Writes `<src_word>\t<trg_word>` lines.
    pub fn save_tsv(&self, path: impl AsRef<Path>, src: &Vocabulary, trg: &Vocabulary) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        for &(s, t) in &self.pairs {
            writeln!(out, "{}\t{}", src.word(s), trg.word(t)).map_err(|e| Error::io(path, e))?;
        }
        out.flush().map_err(|e| Error::io(path, e))
    }

    /// Reads a TSV dictionary, skipping (with a warning) pairs whose words
    /// are missing from either vocabulary.
    pub fn load_tsv(path: impl AsRef<Path>, src: &Vocabulary, trg: &Vocabulary) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut pairs = Vec::new();
        let mut skipped = 0usize;
        for (lineno, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let (s, t) = line.split_once('\t').ok_or_else(|| {
                Error::parse(format!("{}:{}", path.display(), lineno + 1), "expected `<src>\\t<trg>`")
            })?;
            match (src.index_of(s), trg.index_of(t)) {
                (Some(i), Some(j)) => pairs.push((i, j)),
                _ => skipped += 1,
            }
        }
        if skipped > 0 {
            warn!("{}: skipped {skipped} out-of-vocabulary pairs", path.display());
        }
        Ok(Dictionary::from_pairs(pairs))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dedups_and_sorts() {
        let d = Dictionary::from_pairs([(2, 1), (0, 0), (2, 1), (1, 3)]);
        assert_eq!(d.pairs(), &[(0, 0), (1, 3), (2, 1)]);
        assert!(d.contains((1, 3)));
        assert!(!d.contains((3, 1)));
        assert!(d.check_bounds(3, 4).is_ok());
        assert!(d.check_bounds(2, 4).is_err());
        assert_eq!(d.recall(&[(0, 0), (5, 5)]), 0.5);
    }

    #[test]
    fn tsv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let src = Vocabulary::new(vec!["dog".into(), "cat".into()]).unwrap();
        let trg = Vocabulary::new(vec!["balla".into(), "poosa".into()]).unwrap();
        let d = Dictionary::from_pairs([(0, 0), (1, 1), (1, 0)]);
        let path = dir.path().join("d.tsv");
        d.save_tsv(&path, &src, &trg).unwrap();
        assert_eq!(Dictionary::load_tsv(&path, &src, &trg).unwrap(), d);
    }
}
