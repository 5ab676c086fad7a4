//! Contextual embedding port: `(sentence, span) -> vector`.
//!
//! No neural runtime ships with the crate. Vectors are read from a JSONL
//! cache file (`{"sentence", "span", "vector"}` per line); a wrapped
//! provider may fill misses, which are then appended to the cache.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use serde::{Deserialize, Serialize};

use super::embeddings::{Embeddings, ResourceError};
use crate::text;

pub trait ContextualEmbedder: Send + Sync {
    /// Deterministic vector for `span` as it occurs in `sentence`.
    fn embed(&self, sentence: &str, span: &str) -> Option<Vec<f32>>;
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CacheRecord {
    sentence: String,
    span: String,
    vector: Vec<f32>,
}

type CacheKey = (String, String);

pub struct CachedContextualEmbedder {
    cache: RwLock<HashMap<CacheKey, Vec<f32>>>,
    path: Option<PathBuf>,
    writer: Mutex<Option<File>>,
    inner: Option<Arc<dyn ContextualEmbedder>>,
}

impl std::fmt::Debug for CachedContextualEmbedder {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CachedContextualEmbedder")
            .field("entries", &self.len())
            .field("path", &self.path)
            .field("has_inner", &self.inner.is_some())
            .finish()
    }
}

impl CachedContextualEmbedder {
    pub fn in_memory() -> Self {
        Self { cache: RwLock::default(), path: None, writer: Mutex::new(None), inner: None }
    }

    /// Opens (or creates) a cache file.
    pub fn open(path: impl AsRef<Path>) -> Result<Self, ResourceError> {
        let path = path.as_ref().to_path_buf();
        let mut cache = HashMap::new();
        if path.exists() {
            for (idx, line) in BufReader::new(File::open(&path)?).lines().enumerate() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                let rec: CacheRecord = serde_json::from_str(&line)
                    .map_err(|e| ResourceError::Parse { line: idx + 1, message: e.to_string() })?;
                cache.insert((rec.sentence, rec.span), rec.vector);
            }
        }
        Ok(Self { cache: RwLock::new(cache), path: Some(path), writer: Mutex::new(None), inner: None })
    }

    pub fn with_provider(mut self, inner: Arc<dyn ContextualEmbedder>) -> Self {
        self.inner = Some(inner);
        self
    }

    pub fn insert(&self, sentence: &str, span: &str, vector: Vec<f32>) -> std::io::Result<()> {
        let key = (sentence.to_string(), span.to_string());
        self.cache.write().expect("cache lock").insert(key, vector.clone());
        let Some(path) = &self.path else { return Ok(()) };
        let mut guard = self.writer.lock().expect("writer lock");
        if guard.is_none() {
            *guard = Some(OpenOptions::new().create(true).append(true).open(path)?);
        }
        let rec = CacheRecord { sentence: sentence.into(), span: span.into(), vector };
        let mut line = serde_json::to_vec(&rec).map_err(std::io::Error::other)?;
        line.push(b'\n');
        guard.as_mut().expect("opened above").write_all(&line)
    }

    pub fn len(&self) -> usize {
        self.cache.read().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl ContextualEmbedder for CachedContextualEmbedder {
    fn embed(&self, sentence: &str, span: &str) -> Option<Vec<f32>> {
        let key = (sentence.to_string(), span.to_string());
        if let Some(v) = self.cache.read().expect("cache lock").get(&key) {
            return Some(v.clone());
        }
        let v = self.inner.as_ref()?.embed(sentence, span)?;
        if let Err(e) = self.insert(sentence, span, v.clone()) {
            log::warn!("could not persist contextual embedding: {e}");
        }
        Some(v)
    }
}

/// Lightweight contextual vectors from static embeddings: the span vector
/// concatenated with the mean vector of up to `window` tokens on each side.
#[derive(Debug, Clone)]
pub struct ContextWindowEmbedder {
    embeddings: Arc<Embeddings>,
    window: usize,
}

impl ContextWindowEmbedder {
    pub fn new(embeddings: Arc<Embeddings>, window: usize) -> Self {
        Self { embeddings, window }
    }
}

impl ContextualEmbedder for ContextWindowEmbedder {
    fn embed(&self, sentence: &str, span: &str) -> Option<Vec<f32>> {
        let span_vec = self.embeddings.phrase_vector(span)?;
        let toks = text::content_tokens(sentence);
        let span_toks = text::content_tokens(span);
        let folded: Vec<String> = toks.iter().map(|t| t.to_lowercase()).collect();
        let target: Vec<String> = span_toks.iter().map(|t| t.to_lowercase()).collect();
        let start = (0..folded.len().saturating_sub(target.len().saturating_sub(1)))
            .find(|&i| !target.is_empty() && folded[i..].starts_with(&target));
        let context: Vec<&String> = match start {
            Some(s) => {
                let end = s + target.len();
                toks[s.saturating_sub(self.window)..s].iter().chain(&toks[end..(end + self.window).min(toks.len())]).collect()
            }
            None => Vec::new(),
        };
        let ctx_text = context.iter().map(|s| s.as_str()).collect::<Vec<_>>().join(" ");
        let ctx_vec = self.embeddings.phrase_vector(&ctx_text).unwrap_or_else(|| vec![0.0; self.embeddings.dim()]);
        Some(span_vec.into_iter().chain(ctx_vec).map(|x| x as f32).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Constant;
    impl ContextualEmbedder for Constant {
        fn embed(&self, _: &str, span: &str) -> Option<Vec<f32>> {
            Some(vec![span.len() as f32, 1.0])
        }
    }

    #[test]
    fn cache_persists_misses() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ctx.jsonl");
        let c = CachedContextualEmbedder::open(&path).unwrap().with_provider(Arc::new(Constant));
        assert_eq!(c.embed("a cat sat", "cat"), Some(vec![3.0, 1.0]));
        drop(c);
        let reopened = CachedContextualEmbedder::open(&path).unwrap();
        assert_eq!(reopened.len(), 1);
        assert_eq!(reopened.embed("a cat sat", "cat"), Some(vec![3.0, 1.0]));
        assert_eq!(reopened.embed("a dog sat", "dog"), None);
    }

    #[test]
    fn window_embedder_uses_context() {
        let mut e = Embeddings::new(2);
        e.insert("cat", vec![1.0, 0.0]);
        e.insert("sat", vec![0.0, 1.0]);
        let w = ContextWindowEmbedder::new(Arc::new(e), 1);
        assert_eq!(w.embed("the cat sat", "cat"), Some(vec![1.0, 0.0, 0.0, 1.0]));
        assert_eq!(w.embed("the cat sat", "zebra"), None);
    }
}
