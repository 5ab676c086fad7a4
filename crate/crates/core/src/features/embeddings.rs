//! File-backed static word vectors and unigram frequency tables.

use std::collections::HashMap;
use std::io::{BufRead, BufReader};
use std::path::Path;

use thiserror::Error;

use crate::text;

#[derive(Debug, Error)]
pub enum ResourceError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}

fn parse_err(line: usize, message: impl Into<String>) -> ResourceError {
    ResourceError::Parse { line, message: message.into() }
}

/// Static word embeddings, one fixed dimensionality.
#[derive(Debug, Clone, Default)]
pub struct Embeddings {
    dim: usize,
    vectors: HashMap<String, Vec<f32>>,
}

impl Embeddings {
    pub fn new(dim: usize) -> Self {
        Self { dim, vectors: HashMap::new() }
    }

    pub fn insert(&mut self, word: &str, vector: Vec<f32>) {
        assert_eq!(vector.len(), self.dim, "embedding dimensionality mismatch");
        self.vectors.insert(word.to_string(), vector);
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    /// Reads the text format: a `V D` header, then `word v1 .. vD` per line.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ResourceError> {
        Self::parse(BufReader::new(std::fs::File::open(path)?))
    }

    pub fn parse(reader: impl BufRead) -> Result<Self, ResourceError> {
        let mut lines = reader.lines();
        let header = lines.next().ok_or_else(|| parse_err(1, "missing `V D` header"))??;
        let mut h = header.split_whitespace();
        let (Some(count), Some(dim), None) = (h.next(), h.next(), h.next()) else {
            return Err(parse_err(1, "header must be `V D`"));
        };
        let count: usize = count.parse().map_err(|_| parse_err(1, "bad vocabulary size"))?;
        let dim: usize = dim.parse().map_err(|_| parse_err(1, "bad dimensionality"))?;
        let mut emb = Self { dim, vectors: HashMap::with_capacity(count) };
        for (idx, line) in lines.enumerate() {
            let line = line?;
            let lineno = idx + 2;
            if line.trim().is_empty() {
                continue;
            }
            let mut parts = line.split_whitespace();
            let word = parts.next().unwrap_or_default().to_string();
            let values: Result<Vec<f32>, _> = parts.map(str::parse::<f32>).collect();
            let values = values.map_err(|_| parse_err(lineno, "non-numeric component"))?;
            if values.len() != dim {
                return Err(parse_err(lineno, format!("expected {dim} components, got {}", values.len())));
            }
            emb.vectors.insert(word, values);
        }
        if emb.vectors.len() != count {
            log::warn!("embedding header announces {count} words, file holds {}", emb.vectors.len());
        }
        Ok(emb)
    }

    /// Exact lookup, then lowercase.
    pub fn get(&self, word: &str) -> Option<&[f32]> {
        self.vectors
            .get(word)
            .or_else(|| self.vectors.get(&word.to_lowercase()))
            .map(Vec::as_slice)
    }

    /// Average of the member-token vectors, OOV tokens skipped. `None` when
    /// every token is out of vocabulary.
    pub fn phrase_vector(&self, phrase: &str) -> Option<Vec<f64>> {
        let mut acc = vec![0.0f64; self.dim];
        let mut n = 0usize;
        for tok in text::content_tokens(phrase) {
            if let Some(v) = self.get(&tok) {
                for (a, x) in acc.iter_mut().zip(v) {
                    *a += f64::from(*x);
                }
                n += 1;
            }
        }
        (n > 0).then(|| acc.into_iter().map(|a| a / n as f64).collect())
    }

    /// Cosine similarity of averaged phrase vectors; 0 when either side is all-OOV.
    pub fn similarity(&self, a: &str, b: &str) -> f64 {
        match (self.phrase_vector(a), self.phrase_vector(b)) {
            (Some(x), Some(y)) => text::cosine(&x, &y),
            _ => 0.0,
        }
    }
}

/// Unigram counts (`token<TAB>count`), keyed by lowercase token.
#[derive(Debug, Clone, Default)]
pub struct FrequencyTable {
    counts: HashMap<String, u64>,
    max: u64,
}

impl FrequencyTable {
    pub fn from_counts(counts: impl IntoIterator<Item = (String, u64)>) -> Self {
        let mut t = Self::default();
        for (w, c) in counts {
            *t.counts.entry(w.to_lowercase()).or_insert(0) += c;
        }
        t.max = t.counts.values().copied().max().unwrap_or(0);
        t
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ResourceError> {
        Self::parse(BufReader::new(std::fs::File::open(path)?))
    }

    pub fn parse(reader: impl BufRead) -> Result<Self, ResourceError> {
        let mut counts = Vec::new();
        for (idx, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let (tok, count) = line
                .rsplit_once('\t')
                .ok_or_else(|| parse_err(idx + 1, "expected token<TAB>count"))?;
            let count: u64 = count.trim().parse().map_err(|_| parse_err(idx + 1, "bad count"))?;
            counts.push((tok.to_string(), count));
        }
        Ok(Self::from_counts(counts))
    }

    pub fn count(&self, token: &str) -> u64 {
        self.counts.get(&token.to_lowercase()).copied().unwrap_or(0)
    }

    /// `log(1 + mean token count) / log(1 + max count)`, in [0, 1].
    pub fn scaled_log_frequency(&self, phrase: &str) -> f64 {
        let toks = text::content_tokens(phrase);
        if toks.is_empty() || self.max == 0 {
            return 0.0;
        }
        let mean = toks.iter().map(|t| self.count(t) as f64).sum::<f64>() / toks.len() as f64;
        ((1.0 + mean).ln() / (1.0 + self.max as f64).ln()).clamp(0.0, 1.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_text_embeddings() {
        let e = Embeddings::parse("2 3\ncat 1 0 0\ndog 0.5 0.5 0\n".as_bytes()).unwrap();
        assert_eq!(e.dim(), 3);
        assert_eq!(e.get("Cat").unwrap(), &[1.0, 0.0, 0.0]);
        assert_eq!(e.phrase_vector("cat dog").unwrap(), vec![0.75, 0.25, 0.0]);
        assert!(e.phrase_vector("zebra").is_none());
        assert_eq!(e.similarity("zebra", "cat"), 0.0);
        assert!((e.similarity("cat", "cat") - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_wrong_width() {
        let err = Embeddings::parse("1 3\ncat 1 0\n".as_bytes()).unwrap_err();
        assert!(matches!(err, ResourceError::Parse { line: 2, .. }));
    }

    #[test]
    fn frequency_scaling() {
        let f = FrequencyTable::parse("the\t99\ncell\t9\n".as_bytes()).unwrap();
        assert_eq!(f.scaled_log_frequency("the"), 1.0);
        assert!((f.scaled_log_frequency("cell") - 10f64.ln() / 100f64.ln()).abs() < 1e-12);
        assert_eq!(f.scaled_log_frequency("unseen"), 0.0);
    }
}
