//! Web-search reliability score.
//!
//! The completed sentence is sent to a search backend; triplets extracted
//! from the sentence and from the returned titles and snippets are compared
//! by embedding cosine, and the maximum pairwise similarity is kept. A low
//! score means the completed sentence is poorly supported, which is what a
//! reliable distractor should produce.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Mutex;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::embeddings::Embeddings;
use super::tagger::PosTagger;
use super::triplets::{extract_from_text, Triplet};
use crate::text;

/// Score used whenever the search signal is unavailable.
pub const NEUTRAL_WEB_SCORE: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchHit {
    pub title: String,
    pub snippet: String,
}

#[derive(Debug, Error)]
pub enum SearchError {
    #[error("search backend failed: {0}")]
    Backend(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("fixture file: {0}")]
    Json(#[from] serde_json::Error),
}

/// Must be safe to call concurrently.
pub trait SearchBackend: Send + Sync {
    fn search(&self, query: &str) -> Result<Vec<SearchHit>, SearchError>;
}

/// Canned responses keyed by exact query string; unknown queries return no hits.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FixtureBackend {
    responses: BTreeMap<String, Vec<SearchHit>>,
}

impl FixtureBackend {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, query: &str, hits: Vec<SearchHit>) -> Self {
        self.responses.insert(query.to_string(), hits);
        self
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, SearchError> {
        Ok(serde_json::from_slice(&std::fs::read(path)?)?)
    }
}

impl SearchBackend for FixtureBackend {
    fn search(&self, query: &str) -> Result<Vec<SearchHit>, SearchError> {
        Ok(self.responses.get(query).cloned().unwrap_or_default())
    }
}

/// Enforces a minimum interval between outbound calls.
pub struct RateLimited<B> {
    inner: B,
    min_interval: Duration,
    last: Mutex<Option<Instant>>,
}

impl<B: SearchBackend> RateLimited<B> {
    /// `max_per_second` of zero disables the ceiling.
    pub fn new(inner: B, max_per_second: f64) -> Self {
        let min_interval = if max_per_second > 0.0 {
            Duration::from_secs_f64(1.0 / max_per_second)
        } else {
            Duration::ZERO
        };
        Self { inner, min_interval, last: Mutex::new(None) }
    }
}

impl<B: SearchBackend> SearchBackend for RateLimited<B> {
    fn search(&self, query: &str) -> Result<Vec<SearchHit>, SearchError> {
        {
            let mut last = self.last.lock().expect("rate limiter lock");
            if let Some(prev) = *last {
                let wait = self.min_interval.saturating_sub(prev.elapsed());
                if !wait.is_zero() {
                    std::thread::sleep(wait);
                }
            }
            *last = Some(Instant::now());
        }
        self.inner.search(query)
    }
}

/// Maximum cosine between averaged embeddings of the two triplet sets'
/// texts, clamped to [0, 1]. `None` when either set is empty.
pub fn max_triplet_similarity(left: &[Triplet], right: &[Triplet], embeddings: &Embeddings) -> Option<f64> {
    if left.is_empty() || right.is_empty() {
        return None;
    }
    let vec_of = |t: &Triplet| embeddings.phrase_vector(&t.text());
    let rv: Vec<Option<Vec<f64>>> = right.iter().map(vec_of).collect();
    let mut best = 0.0f64;
    for l in left {
        let Some(lv) = vec_of(l) else { continue };
        for r in rv.iter().flatten() {
            best = best.max(text::cosine(&lv, r));
        }
    }
    Some(best.clamp(0.0, 1.0))
}

/// Reliability score for filling `candidate` into `stem`. Falls back to
/// [`NEUTRAL_WEB_SCORE`] when search or embeddings are unavailable, the
/// backend fails, or either triplet set is empty.
pub fn web_search_score(
    stem: &str,
    candidate: &str,
    backend: Option<&dyn SearchBackend>,
    embeddings: Option<&Embeddings>,
    tagger: &dyn PosTagger,
) -> f64 {
    let (Some(backend), Some(embeddings)) = (backend, embeddings) else {
        return NEUTRAL_WEB_SCORE;
    };
    let sentence = text::complete(stem, candidate);
    let hits = match backend.search(&sentence) {
        Ok(h) => h,
        Err(e) => {
            log::warn!("web search failed for {sentence:?}: {e}");
            return NEUTRAL_WEB_SCORE;
        }
    };
    let own = extract_from_text(&sentence, tagger);
    let mut found = Vec::new();
    for h in &hits {
        found.extend(extract_from_text(&h.title, tagger));
        found.extend(extract_from_text(&h.snippet, tagger));
    }
    max_triplet_similarity(&own, &found, embeddings).unwrap_or(NEUTRAL_WEB_SCORE)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::tagger::LexiconTagger;

    struct Failing;
    impl SearchBackend for Failing {
        fn search(&self, _: &str) -> Result<Vec<SearchHit>, SearchError> {
            Err(SearchError::Backend("offline".into()))
        }
    }

    fn emb() -> Embeddings {
        let mut e = Embeddings::new(3);
        e.insert("cells", vec![1.0, 0.0, 0.0]);
        e.insert("contain", vec![0.0, 1.0, 0.0]);
        e.insert("dna", vec![0.0, 0.0, 1.0]);
        e.insert("rna", vec![0.0, 1.0, 1.0]);
        e
    }

    #[test]
    fn neutral_without_backend_or_on_failure() {
        let tagger = LexiconTagger::default();
        assert_eq!(web_search_score("Cells contain ____.", "DNA", None, Some(&emb()), &tagger), 0.5);
        assert_eq!(web_search_score("Cells contain ____.", "DNA", Some(&Failing), Some(&emb()), &tagger), 0.5);
        let empty = FixtureBackend::new();
        assert_eq!(web_search_score("Cells contain ____.", "DNA", Some(&empty), Some(&emb()), &tagger), 0.5);
    }

    #[test]
    fn verbatim_hit_scores_one() {
        let tagger = LexiconTagger::default();
        let f = FixtureBackend::new().with(
            "Cells contain DNA.",
            vec![SearchHit { title: "Biology".into(), snippet: "Cells contain DNA.".into() }],
        );
        let s = web_search_score("Cells contain ____.", "DNA", Some(&f), Some(&emb()), &tagger);
        assert!((s - 1.0).abs() < 1e-12, "{s}");
    }

    #[test]
    fn rate_limiter_spaces_calls() {
        let r = RateLimited::new(FixtureBackend::new(), 50.0);
        let t0 = Instant::now();
        for _ in 0..3 {
            r.search("q").unwrap();
        }
        assert!(t0.elapsed() >= Duration::from_millis(38));
    }

    #[test]
    fn fixture_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("f.json");
        std::fs::write(&p, r#"{"q": [{"title": "t", "snippet": "s"}]}"#).unwrap();
        let f = FixtureBackend::load(&p).unwrap();
        assert_eq!(f.search("q").unwrap().len(), 1);
        assert!(f.search("other").unwrap().is_empty());
    }
}
