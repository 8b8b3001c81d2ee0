//! Precision@k scoring against gold dictionaries, and the filters used to
//! curate gold dictionaries from machine-translated candidate pairs.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use crate::embeddings::Vocabulary;
use crate::error::{Error, Result};

/// Source word to its set of acceptable translations.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GoldDictionary {
    entries: BTreeMap<String, BTreeSet<String>>,
}

impl GoldDictionary {
    pub fn from_pairs<I, S, T>(pairs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (S, T)>,
        S: Into<String>,
        T: Into<String>,
    {
        let mut entries: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
        for (s, t) in pairs {
            let (s, t) = (s.into(), t.into());
            if s.is_empty() || t.is_empty() {
                return Err(Error::InvalidArgument("gold dictionary words must be non-empty".into()));
            }
            entries.entry(s).or_default().insert(t);
        }
        if entries.is_empty() {
            return Err(Error::Empty("gold dictionary has no entries".into()));
        }
        Ok(GoldDictionary { entries })
    }

    /// Reads `<src>\t<trg>` lines; repeated sources accumulate targets.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut pairs = Vec::new();
        for (lineno, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let (s, t) = line.split_once('\t').ok_or_else(|| {
                Error::parse(format!("{}:{}", path.display(), lineno + 1), "expected `<src>\\t<trg>`")
            })?;
            pairs.push((s.trim().to_string(), t.trim().to_string()));
        }
        Self::from_pairs(pairs)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> impl Iterator<Item = (&str, &BTreeSet<String>)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn targets(&self, source: &str) -> Option<&BTreeSet<String>> {
        self.entries.get(source)
    }

    /// Gold `(source row, target row)` pairs for entries whose words are in
    /// the vocabularies.
    pub fn index_pairs(&self, src: &Vocabulary, trg: &Vocabulary) -> Vec<(usize, usize)> {
        self.entries
            .iter()
            .filter_map(|(s, ts)| src.index_of(s).map(|i| (i, ts)))
            .flat_map(|(i, ts)| ts.iter().filter_map(move |t| trg.index_of(t).map(|j| (i, j))))
            .collect()
    }
}

/// Ranked candidate translations per source word, best first.
pub type Rankings = HashMap<String, Vec<String>>;

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    /// `(k, precision)` in increasing `k`.
    pub precision_at: Vec<(usize, f64)>,
    pub evaluated: usize,
    pub hits_at: Vec<(usize, usize)>,
    /// Gold entries that could not be evaluated: the source has no ranking,
    /// or none of its acceptable targets is in the target vocabulary.
    pub skipped_oov: usize,
    /// `evaluated / |gold|`.
    pub coverage: f64,
}

impl EvalReport {
    pub fn precision(&self, k: usize) -> Option<f64> {
        self.precision_at.iter().find(|(kk, _)| *kk == k).map(|p| p.1)
    }
}

/// Precision@k for every `k` in `ks`.
///
/// A gold source is evaluable when it has a ranking and, if `trg_vocab` is
/// given, at least one acceptable target in it. Other entries are counted
/// in `skipped_oov` and excluded from the denominator.
pub fn precision_at_ks(
    ranked: &Rankings,
    gold: &GoldDictionary,
    ks: &[usize],
    trg_vocab: Option<&Vocabulary>,
) -> Result<EvalReport> {
    if ks.is_empty() || ks.contains(&0) {
        return Err(Error::InvalidArgument("k values must be >= 1".into()));
    }
    let mut ks = ks.to_vec();
    ks.sort_unstable();
    ks.dedup();

    let mut hits = vec![0usize; ks.len()];
    let mut evaluated = 0usize;
    let mut skipped = 0usize;
    for (src, targets) in gold.entries() {
        let in_vocab = trg_vocab.is_none_or(|v| targets.iter().any(|t| v.contains(t)));
        let Some(list) = ranked.get(src).filter(|_| in_vocab) else {
            skipped += 1;
            continue;
        };
        evaluated += 1;
        if let Some(rank) = list.iter().position(|c| targets.contains(c)) {
            for (h, &k) in hits.iter_mut().zip(&ks) {
                if rank < k {
                    *h += 1;
                }
            }
        }
    }
    if evaluated == 0 {
        return Err(Error::Empty("no gold entry is evaluable".into()));
    }
    Ok(EvalReport {
        precision_at: ks.iter().zip(&hits).map(|(&k, &h)| (k, h as f64 / evaluated as f64)).collect(),
        hits_at: ks.iter().copied().zip(hits.iter().copied()).collect(),
        evaluated,
        skipped_oov: skipped,
        coverage: evaluated as f64 / gold.len() as f64,
    })
}

pub fn precision_at_k(ranked: &Rankings, gold: &GoldDictionary, k: usize) -> Result<EvalReport> {
    precision_at_ks(ranked, gold, &[k], None)
}

/// Optional inputs of [`curate_pairs`].
#[derive(Debug, Clone, Default)]
pub struct CurationFilters {
    /// Source word to its back-translation; pairs whose source does not
    /// survive the round trip are dropped.
    pub roundtrip: Option<HashMap<String, String>>,
    pub proper_nouns: Option<HashSet<String>>,
}

/// Drops candidate pairs that fail the round-trip check, are out of either
/// vocabulary, translate to a multi-word phrase, or have a proper-noun
/// source. Output preserves input order.
pub fn curate_pairs(
    raw_pairs: &[(String, String)],
    src_vocab: &Vocabulary,
    trg_vocab: &Vocabulary,
    filters: &CurationFilters,
) -> Vec<(String, String)> {
    raw_pairs
        .iter()
        .filter(|(s, t)| {
            let roundtrip_ok = filters
                .roundtrip
                .as_ref()
                .is_none_or(|rt| rt.get(s).is_some_and(|back| back == s));
            let single_word = !t.trim().chars().any(char::is_whitespace);
            let proper = filters.proper_nouns.as_ref().is_some_and(|p| p.contains(s));
            roundtrip_ok && single_word && !proper && src_vocab.contains(s) && trg_vocab.contains(t.trim())
        })
        .cloned()
        .collect()
}

/// Reads `<a>\t<b>` lines as string pairs.
pub fn load_pairs(path: impl AsRef<Path>) -> Result<Vec<(String, String)>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let (a, b) = line.split_once('\t').ok_or_else(|| {
            Error::parse(format!("{}:{}", path.display(), lineno + 1), "expected two tab-separated fields")
        })?;
        out.push((a.to_string(), b.to_string()));
    }
    Ok(out)
}

/// Reads one word per line.
pub fn load_word_list(path: impl AsRef<Path>) -> Result<Vec<String>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text.lines().map(str::trim).filter(|l| !l.is_empty()).map(String::from).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rankings(items: &[(&str, &[&str])]) -> Rankings {
        items
            .iter()
            .map(|(s, ts)| (s.to_string(), ts.iter().map(|t| t.to_string()).collect()))
            .collect()
    }

    #[test]
    fn exact_hit() {
        let gold = GoldDictionary::from_pairs([("a", "x")]).unwrap();
        let r = precision_at_k(&rankings(&[("a", &["x", "y"])]), &gold, 1).unwrap();
        assert_eq!(r.precision(1), Some(1.0));
        assert_eq!(r.evaluated, 1);
    }

    #[test]
    fn two_entries_at_k1_and_k2() {
        let gold = GoldDictionary::from_pairs([("a", "x"), ("b", "y")]).unwrap();
        let ranked = rankings(&[("a", &["z", "x"]), ("b", &["y"])]);
        let r = precision_at_ks(&ranked, &gold, &[2, 1], None).unwrap();
        assert_eq!(r.precision(1), Some(0.5));
        assert_eq!(r.precision(2), Some(1.0));
    }

    #[test]
    fn oov_sources_are_skipped() {
        let gold = GoldDictionary::from_pairs([("a", "x"), ("q", "y")]).unwrap();
        let r = precision_at_k(&rankings(&[("a", &["x"])]), &gold, 1).unwrap();
        assert_eq!((r.evaluated, r.skipped_oov), (1, 1));
        assert_eq!(r.coverage, 0.5);
        assert_eq!(r.precision(1), Some(1.0));
    }

    #[test]
    fn oov_targets_are_skipped_when_vocab_given() {
        let gold = GoldDictionary::from_pairs([("a", "x"), ("b", "w")]).unwrap();
        let trg = Vocabulary::new(vec!["x".into(), "y".into()]).unwrap();
        let ranked = rankings(&[("a", &["x"]), ("b", &["y"])]);
        let r = precision_at_ks(&ranked, &gold, &[1], Some(&trg)).unwrap();
        assert_eq!((r.evaluated, r.skipped_oov), (1, 1));
    }

    #[test]
    fn nothing_evaluable_is_an_error() {
        let gold = GoldDictionary::from_pairs([("a", "x")]).unwrap();
        assert!(precision_at_k(&Rankings::new(), &gold, 1).is_err());
        assert!(precision_at_k(&Rankings::new(), &gold, 0).is_err());
    }

    #[test]
    fn multiple_acceptable_targets() {
        let gold = GoldDictionary::from_pairs([("a", "x"), ("a", "x2")]).unwrap();
        assert_eq!(gold.len(), 1);
        let r = precision_at_k(&rankings(&[("a", &["x2"])]), &gold, 1).unwrap();
        assert_eq!(r.precision(1), Some(1.0));
    }

    fn vocab(words: &[&str]) -> Vocabulary {
        Vocabulary::new(words.iter().map(|w| w.to_string()).collect()).unwrap()
    }

    #[test]
    fn curation_rules() {
        let src = vocab(&["dog", "house", "john", "cat"]);
        let trg = vocab(&["balla", "gedara", "jon", "poosa"]);
        let raw: Vec<(String, String)> = [
            ("dog", "balla"),
            ("house", "great house"),
            ("john", "jon"),
            ("cat", "poosa"),
            ("bird", "kurulla"),
        ]
        .iter()
        .map(|(a, b)| (a.to_string(), b.to_string()))
        .collect();
        let filters = CurationFilters {
            roundtrip: Some(
                [("dog", "dog"), ("house", "house"), ("john", "john"), ("cat", "kitten")]
                    .iter()
                    .map(|(a, b)| (a.to_string(), b.to_string()))
                    .collect(),
            ),
            proper_nouns: Some(["john".to_string()].into_iter().collect()),
        };
        let kept = curate_pairs(&raw, &src, &trg, &filters);
        assert_eq!(kept, vec![("dog".to_string(), "balla".to_string())]);
        assert_eq!(curate_pairs(&kept, &src, &trg, &filters), kept);

        let no_filters = curate_pairs(&raw, &src, &trg, &CurationFilters::default());
        assert_eq!(no_filters.len(), 3);
    }

    proptest! {
        #[test]
        fn precision_monotone_in_k(
            lists in proptest::collection::vec(proptest::collection::vec(0u8..12, 0..8), 1..30),
            gold_targets in proptest::collection::vec(0u8..12, 1..30),
        ) {
            let gold = GoldDictionary::from_pairs(
                gold_targets.iter().enumerate().map(|(i, t)| (format!("s{i}"), format!("t{t}")))
            ).unwrap();
            let ranked: Rankings = lists.iter().enumerate()
                .map(|(i, l)| (format!("s{i}"), l.iter().map(|t| format!("t{t}")).collect()))
                .collect();
            let ks: Vec<usize> = (1..=10).collect();
            let r = precision_at_ks(&ranked, &gold, &ks, None).unwrap();
            for w in r.precision_at.windows(2) {
                prop_assert!(w[0].1 <= w[1].1);
            }
            prop_assert_eq!(r.evaluated + r.skipped_oov, gold.len());
        }
    }
}
