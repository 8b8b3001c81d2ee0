//! Monolingual embedding data model and its text formats.
//!
//! Embedding files use the word2vec text layout: a `<count> <dim>` header
//! followed by one `<word> <f1> ... <fdim>` line per word. Frequency data
//! comes from an optional `<word>\t<count>` sidecar or from a token stream.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use log::warn;
use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Ordered word list with its inverse index and optional corpus counts.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    words: Vec<String>,
    index: HashMap<String, usize>,
    freq: Option<Vec<u64>>,
}

impl Vocabulary {
    /// Builds a vocabulary from unique, non-empty, whitespace-free words.
    pub fn new(words: Vec<String>) -> Result<Self> {
        if words.is_empty() {
            return Err(Error::Empty("vocabulary has no words".into()));
        }
        let mut index = HashMap::with_capacity(words.len());
        for (i, w) in words.iter().enumerate() {
            validate_word(w).map_err(|m| Error::InvalidArgument(format!("word {i}: {m}")))?;
            if index.insert(w.clone(), i).is_some() {
                return Err(Error::InvalidArgument(format!("duplicate word `{w}`")));
            }
        }
        Ok(Vocabulary {
            words,
            index,
            freq: None,
        })
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn word(&self, i: usize) -> &str {
        &self.words[i]
    }

    pub fn index_of(&self, word: &str) -> Option<usize> {
        self.index.get(word).copied()
    }

    pub fn contains(&self, word: &str) -> bool {
        self.index.contains_key(word)
    }

    pub fn has_frequencies(&self) -> bool {
        self.freq.is_some()
    }

    /// Corpus count of word `i`, if frequency data is attached.
    pub fn frequency(&self, i: usize) -> Option<u64> {
        self.freq.as_ref().map(|f| f[i])
    }

    /// Attaches counts from `table`; words absent from the table get count 0.
    pub fn with_frequencies(mut self, table: &FrequencyTable) -> Self {
        let freq = self
            .words
            .iter()
            .map(|w| table.count(w))
            .collect::<Vec<_>>();
        self.freq = Some(freq);
        self
    }

    /// Keeps the words at `rows` in the given order.
    pub fn select(&self, rows: &[usize]) -> Result<Self> {
        let words = rows.iter().map(|&r| self.words[r].clone()).collect();
        let mut vocab = Vocabulary::new(words)?;
        vocab.freq = self
            .freq
            .as_ref()
            .map(|f| rows.iter().map(|&r| f[r]).collect());
        Ok(vocab)
    }
}

fn validate_word(w: &str) -> std::result::Result<(), &'static str> {
    if w.is_empty() {
        Err("empty word")
    } else if w.chars().any(char::is_whitespace) {
        Err("word contains whitespace")
    } else {
        Ok(())
    }
}

/// Dense `|V| x d` matrix of finite reals, one row per vocabulary word.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix(DMatrix<f64>);

impl EmbeddingMatrix {
    pub fn new(data: DMatrix<f64>) -> Result<Self> {
        if data.ncols() == 0 {
            return Err(Error::InvalidArgument("embedding dimension must be >= 1".into()));
        }
        if data.nrows() == 0 {
            return Err(Error::Empty("embedding matrix has no rows".into()));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            let (row, col) = (pos % data.nrows(), pos / data.nrows());
            return Err(Error::NonFinite(format!(
                "embedding input at row {row}, column {col}"
            )));
        }
        Ok(EmbeddingMatrix(data))
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().position(|r| r.len() != dim) {
            return Err(Error::DimensionMismatch(format!(
                "row {bad} has {} values, expected {dim}",
                rows[bad].len()
            )));
        }
        Self::new(DMatrix::from_fn(rows.len(), dim, |i, j| rows[i][j]))
    }

    pub fn rows(&self) -> usize {
        self.0.nrows()
    }

    pub fn dim(&self) -> usize {
        self.0.ncols()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.0.row(i).iter().copied().collect()
    }

    pub fn select_rows(&self, rows: &[usize]) -> Self {
        EmbeddingMatrix(self.0.select_rows(rows.iter()))
    }

    /// First `n` rows (or all of them when `n` exceeds the row count).
    pub fn head(&self, n: usize) -> Self {
        let n = n.min(self.rows());
        EmbeddingMatrix(self.0.rows(0, n).into_owned())
    }
}

/// Token counts collected from a corpus.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FrequencyTable {
    counts: HashMap<String, u64>,
    total_tokens: u64,
}

impl FrequencyTable {
    pub fn from_counts(counts: HashMap<String, u64>) -> Self {
        let total_tokens = counts.values().sum();
        FrequencyTable { counts, total_tokens }
    }

    pub fn count(&self, token: &str) -> u64 {
        self.counts.get(token).copied().unwrap_or(0)
    }

    pub fn total_tokens(&self) -> u64 {
        self.total_tokens
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn counts(&self) -> &HashMap<String, u64> {
        &self.counts
    }

    /// Reads a `<word>\t<count>` sidecar file.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut table = FrequencyTable::default();
        for (lineno, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.is_empty() {
                continue;
            }
            let loc = || format!("{}:{}", path.display(), lineno + 1);
            let (word, count) = line
                .split_once('\t')
                .ok_or_else(|| Error::parse(loc(), "expected `<word>\\t<count>`"))?;
            let count: u64 = count
                .trim()
                .parse()
                .map_err(|_| Error::parse(loc(), format!("bad count `{count}`")))?;
            if count == 0 {
                continue;
            }
            *table.counts.entry(word.to_string()).or_insert(0) += count;
            table.total_tokens += count;
        }
        Ok(table)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        let mut entries: Vec<_> = self.counts.iter().collect();
        entries.sort_by(|a, b| b.1.cmp(a.1).then_with(|| a.0.cmp(b.0)));
        for (w, c) in entries {
            writeln!(out, "{w}\t{c}").map_err(|e| Error::io(path, e))?;
        }
        out.flush().map_err(|e| Error::io(path, e))
    }
}

/// Counts occurrences of each token. Empty tokens are ignored.
pub fn build_frequency_table<I, S>(tokens: I) -> FrequencyTable
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    let mut table = FrequencyTable::default();
    for tok in tokens {
        let tok = tok.as_ref();
        if tok.is_empty() {
            continue;
        }
        match table.counts.get_mut(tok) {
            Some(c) => *c += 1,
            None => {
                table.counts.insert(tok.to_string(), 1);
            }
        }
        table.total_tokens += 1;
    }
    table
}

/// Whitespace tokenizer used for raw corpora.
pub fn tokenize(text: &str) -> impl Iterator<Item = &str> {
    text.split_whitespace()
}

/// Keeps the words whose corpus frequency is at least `min_freq`.
pub fn filter_by_frequency(
    vocab: &Vocabulary,
    emb: &EmbeddingMatrix,
    min_freq: u64,
) -> Result<(Vocabulary, EmbeddingMatrix)> {
    if min_freq < 1 {
        return Err(Error::InvalidArgument("min_freq must be >= 1".into()));
    }
    if vocab.len() != emb.rows() {
        return Err(Error::DimensionMismatch(format!(
            "vocabulary has {} words but matrix has {} rows",
            vocab.len(),
            emb.rows()
        )));
    }
    let freq = vocab
        .freq
        .as_ref()
        .ok_or_else(|| Error::InvalidArgument("vocabulary has no frequency data".into()))?;
    let keep: Vec<usize> = (0..vocab.len()).filter(|&i| freq[i] >= min_freq).collect();
    if keep.is_empty() {
        return Err(Error::Empty(format!(
            "no word has frequency >= {min_freq}"
        )));
    }
    Ok((vocab.select(&keep)?, emb.select_rows(&keep)))
}

/// Reads embeddings in `<count> <dim>` + `<word> <floats...>` text format.
pub fn load_embeddings(
    path: impl AsRef<Path>,
    expect_dim: Option<usize>,
) -> Result<(Vocabulary, EmbeddingMatrix)> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_embeddings(BufReader::new(file), &path.display().to_string(), expect_dim)
}

/// Parses the embedding text format from any buffered reader. `origin` is
/// used in error messages.
pub fn read_embeddings<R: BufRead>(
    reader: R,
    origin: &str,
    expect_dim: Option<usize>,
) -> Result<(Vocabulary, EmbeddingMatrix)> {
    let mut lines = reader.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::parse(format!("{origin}:1"), "missing header"))??;
    let fields: Vec<&str> = header.split_whitespace().collect();
    let (count, dim) = match fields.as_slice() {
        [c, d] => match (c.parse::<usize>(), d.parse::<usize>()) {
            (Ok(c), Ok(d)) if d >= 1 => (c, d),
            _ => {
                return Err(Error::parse(
                    format!("{origin}:1"),
                    format!("malformed header `{header}`"),
                ))
            }
        },
        _ => {
            return Err(Error::parse(
                format!("{origin}:1"),
                format!("malformed header `{header}`, expected `<count> <dim>`"),
            ))
        }
    };
    if let Some(expected) = expect_dim {
        if expected != dim {
            return Err(Error::DimensionMismatch(format!(
                "{origin}: file has dimension {dim}, expected {expected}"
            )));
        }
    }

    let mut words = Vec::with_capacity(count);
    let mut index: HashMap<String, usize> = HashMap::with_capacity(count);
    let mut data = Vec::with_capacity(count * dim);
    let mut seen = 0usize;
    for (lineno, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let loc = || format!("{origin}:{}", lineno + 2);
        seen += 1;
        let mut parts = line.split_whitespace();
        let word = parts.next().expect("non-empty line has a token");
        let values: Vec<&str> = parts.collect();
        if values.len() != dim {
            return Err(Error::parse(
                loc(),
                format!(
                    "row arity mismatch: expected {dim} values after the word, found {}",
                    values.len()
                ),
            ));
        }
        let start = data.len();
        for v in values {
            let x: f64 = v
                .parse()
                .map_err(|_| Error::parse(loc(), format!("bad number `{v}`")))?;
            if !x.is_finite() {
                return Err(Error::parse(loc(), format!("non-finite value `{v}`")));
            }
            data.push(x);
        }
        if index.contains_key(word) {
            warn!("{}: duplicate word `{word}`, keeping first occurrence", loc());
            data.truncate(start);
            continue;
        }
        index.insert(word.to_string(), words.len());
        words.push(word.to_string());
    }
    if seen != count {
        return Err(Error::parse(
            format!("{origin}:1"),
            format!("header declares {count} rows but file has {seen}"),
        ));
    }
    let vocab = Vocabulary::new(words)?;
    let emb = EmbeddingMatrix::new(DMatrix::from_row_slice(vocab.len(), dim, &data))?;
    Ok((vocab, emb))
}

/// Writes embeddings in the text format with 9 significant digits.
pub fn save_embeddings(
    path: impl AsRef<Path>,
    vocab: &Vocabulary,
    emb: &EmbeddingMatrix,
) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    write_embeddings(&mut out, vocab, emb).map_err(|e| match e {
        Error::Stream(io) => Error::io(path, io),
        other => other,
    })?;
    out.flush().map_err(|e| Error::io(path, e))
}

pub fn write_embeddings<W: Write>(
    out: &mut W,
    vocab: &Vocabulary,
    emb: &EmbeddingMatrix,
) -> Result<()> {
    if vocab.len() != emb.rows() {
        return Err(Error::DimensionMismatch(format!(
            "vocabulary has {} words but matrix has {} rows",
            vocab.len(),
            emb.rows()
        )));
    }
    writeln!(out, "{} {}", emb.rows(), emb.dim())?;
    let m = emb.matrix();
    let mut line = String::new();
    for (i, w) in vocab.words().iter().enumerate() {
        line.clear();
        line.push_str(w);
        for j in 0..m.ncols() {
            line.push(' ');
            line.push_str(&format_sig9(m[(i, j)]));
        }
        writeln!(out, "{line}")?;
    }
    Ok(())
}

/// Formats a float with 9 significant digits, positional for moderate
/// exponents and scientific otherwise, with trailing zeros removed.
pub fn format_sig9(v: f64) -> String {
    if v == 0.0 {
        return "0".to_string();
    }
    let sci = format!("{v:.8e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent marker");
    let exp: i32 = exp.parse().expect("integer exponent");
    let (sign, mantissa) = match mantissa.strip_prefix('-') {
        Some(m) => ("-", m),
        None => ("", mantissa),
    };
    let digits: String = mantissa.chars().filter(|c| *c != '.').collect();
    if !(-5..9).contains(&exp) {
        let m = trim_fraction(mantissa);
        return format!("{sign}{m}e{exp}");
    }
    let body = if exp >= 0 {
        let split = (exp + 1) as usize;
        format!("{}.{}", &digits[..split], &digits[split..])
    } else {
        format!("0.{}{}", "0".repeat((-exp - 1) as usize), digits)
    };
    format!("{sign}{}", trim_fraction(&body))
}

fn trim_fraction(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}
