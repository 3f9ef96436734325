//! Bag-of-embeddings sentence encoder shared by clauses and rationales.

use std::collections::HashMap;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::numeric::{Mat64, Vec64};

pub const UNK: &str = "<unk>";
pub const UNK_INDEX: usize = 0;

fn is_punct(c: char) -> bool {
    c.is_ascii_punctuation()
        || matches!(
            c,
            '\u{2018}'
                | '\u{2019}'
                | '\u{201C}'
                | '\u{201D}'
                | '\u{2013}'
                | '\u{2014}'
                | '\u{2026}'
                | '\u{00AB}'
                | '\u{00BB}'
                | '\u{00A7}'
        )
}

/// Lowercase, split on whitespace, trim punctuation from both ends of each token.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace()
        .map(|w| w.trim_matches(is_punct).to_lowercase())
        .filter(|w| !w.is_empty())
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    /// Builds a vocabulary from an explicit token list; `tokens[0]` must be [`UNK`].
    pub fn from_tokens(tokens: Vec<String>) -> Result<Self> {
        if tokens.first().map(String::as_str) != Some(UNK) {
            return Err(Error::InvalidArgument(format!(
                "vocabulary must start with {UNK}"
            )));
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), i).is_some() {
                return Err(Error::InvalidArgument(format!(
                    "duplicate vocabulary token `{t}`"
                )));
            }
        }
        Ok(Vocabulary { tokens, index })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Index of `token`, or [`UNK_INDEX`] when it is out of vocabulary.
    pub fn lookup(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(UNK_INDEX)
    }

    pub fn token(&self, index: usize) -> Option<&str> {
        self.tokens.get(index).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn indices<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<usize> {
        tokens.iter().map(|t| self.lookup(t.as_ref())).collect()
    }
}

/// Counts tokens over `texts` and keeps those seen at least `min_count` times.
///
/// Kept tokens are numbered from 1 in descending frequency, ties broken by
/// lexicographic order.
pub fn build_vocab<S: AsRef<str>>(texts: &[S], min_count: usize) -> Result<Vocabulary> {
    if min_count < 1 {
        return Err(Error::InvalidArgument("min_count must be >= 1".into()));
    }
    let mut counts: HashMap<String, usize> = HashMap::new();
    for text in texts {
        for tok in tokenize(text.as_ref()) {
            *counts.entry(tok).or_insert(0) += 1;
        }
    }
    let mut kept: Vec<(String, usize)> = counts
        .into_iter()
        .filter(|(_, c)| *c >= min_count)
        .collect();
    kept.sort_by(|(ta, ca), (tb, cb)| cb.cmp(ca).then_with(|| ta.cmp(tb)));
    let tokens = std::iter::once(UNK.to_string())
        .chain(kept.into_iter().map(|(t, _)| t))
        .collect();
    Vocabulary::from_tokens(tokens)
}

/// One embedding row per vocabulary entry.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    matrix: Mat64,
}

impl EmbeddingTable {
    pub fn new(matrix: Mat64) -> Self {
        EmbeddingTable { matrix }
    }

    /// Gaussian init with standard deviation `std`.
    pub fn random<R: Rng>(vocab_size: usize, dim: usize, std: f64, rng: &mut R) -> Result<Self> {
        let normal = Normal::new(0.0, std)
            .map_err(|e| Error::InvalidArgument(format!("embedding init: {e}")))?;
        let values = (0..vocab_size * dim).map(|_| normal.sample(rng)).collect();
        Ok(EmbeddingTable {
            matrix: Mat64::new(vocab_size, dim, values)?,
        })
    }

    pub fn dim(&self) -> usize {
        self.matrix.cols()
    }

    pub fn rows(&self) -> usize {
        self.matrix.rows()
    }

    pub fn matrix(&self) -> &Mat64 {
        &self.matrix
    }

    pub fn into_matrix(self) -> Mat64 {
        self.matrix
    }

    /// Mean of the rows at `indices`; the zero vector when `indices` is empty.
    pub fn mean_rows(&self, indices: &[usize]) -> Result<Vec64> {
        mean_rows(&self.matrix, indices)
    }
}

pub(crate) fn mean_rows(matrix: &Mat64, indices: &[usize]) -> Result<Vec64> {
    let mut out = vec![0.0; matrix.cols()];
    if indices.is_empty() {
        return Vec64::new(out);
    }
    for &i in indices {
        if i >= matrix.rows() {
            return Err(Error::DimensionMismatch {
                op: "embedding lookup",
                left: matrix.rows(),
                right: i,
            });
        }
        for (o, v) in out.iter_mut().zip(matrix.row(i)) {
            *o += v;
        }
    }
    let n = indices.len() as f64;
    out.iter_mut().for_each(|o| *o /= n);
    Vec64::new(out)
}

/// Mean-pooled embedding of `tokens`; out-of-vocabulary tokens map to UNK.
pub fn encode<S: AsRef<str>>(
    tokens: &[S],
    vocab: &Vocabulary,
    emb: &EmbeddingTable,
) -> Result<Vec64> {
    if emb.rows() != vocab.len() {
        return Err(Error::DimensionMismatch {
            op: "encode (embedding rows vs vocabulary)",
            left: emb.rows(),
            right: vocab.len(),
        });
    }
    emb.mean_rows(&vocab.indices(tokens))
}
