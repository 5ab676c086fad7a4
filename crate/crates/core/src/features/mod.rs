//! The fixed 33-slot feature vector f(q, a, d) and the resources it draws on.

pub mod contextual;
pub mod embeddings;
pub mod search;
pub mod strings;
pub mod tagger;
pub mod triplets;

use std::collections::BTreeSet;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use contextual::{CachedContextualEmbedder, ContextWindowEmbedder, ContextualEmbedder};
pub use embeddings::{Embeddings, FrequencyTable, ResourceError};
pub use search::{web_search_score, FixtureBackend, RateLimited, SearchBackend, SearchError, SearchHit, NEUTRAL_WEB_SCORE};
pub use tagger::{LexiconTagger, PosTagger};
pub use triplets::{extract_from_text, extract_triplets, TaggedToken, Triplet};

use crate::text;

pub const FEATURE_COUNT: usize = 33;

/// Bumped whenever slot meaning or order changes; stored in model files.
pub const SCHEMA_VERSION: u32 = 1;

pub const FEATURE_NAMES: [&str; FEATURE_COUNT] = [
    "emb_sim_qd",
    "emb_sim_ad",
    "ctx_emb_sim_ad",
    "edit_distance_abs",
    "edit_distance_rel_a",
    "edit_distance_rel_d",
    "token_len_a",
    "token_len_d",
    "token_len_diff_abs",
    "token_len_ratio",
    "char_len_a",
    "char_len_d",
    "char_len_diff_abs",
    "char_len_ratio",
    "singular_plural_consistency",
    "lcp_abs",
    "lcp_rel_a",
    "lcp_rel_d",
    "lcsuffix_abs",
    "lcsuffix_rel_a",
    "lcsuffix_rel_d",
    "lcsubseq_abs",
    "lcsubseq_rel_a",
    "lcsubseq_rel_d",
    "pos_jaccard",
    "log_freq_a",
    "log_freq_d",
    "log_freq_diff_abs",
    "unigram_jaccard_ad",
    "bigram_jaccard_ad",
    "token_overlap_qd_jaccard",
    "char_bigram_jaccard_ad",
    "web_search_score",
];

/// Slots whose value is a similarity or ratio, bounded to [-1, 1] or [0, 1].
pub const BOUNDED_SLOTS: [usize; 18] = [0, 1, 2, 9, 13, 14, 16, 17, 19, 20, 22, 23, 24, 28, 29, 30, 31, 32];

/// Slots that only use their two string arguments symmetrically.
pub const SYMMETRIC_AD_SLOTS: [usize; 14] = [1, 3, 8, 9, 12, 13, 14, 15, 18, 21, 24, 28, 29, 31];

pub fn feature_index(name: &str) -> Option<usize> {
    FEATURE_NAMES.iter().position(|n| *n == name)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FeatureVector(#[serde(with = "slots")] pub [f64; FEATURE_COUNT]);

mod slots {
    use super::FEATURE_COUNT;
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &[f64; FEATURE_COUNT], s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(v.iter())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<[f64; FEATURE_COUNT], D::Error> {
        let v = Vec::<f64>::deserialize(d)?;
        let n = v.len();
        v.try_into()
            .map_err(|_| D::Error::custom(format!("expected {FEATURE_COUNT} feature values, got {n}")))
    }
}

impl FeatureVector {
    pub fn values(&self) -> &[f64; FEATURE_COUNT] {
        &self.0
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        feature_index(name).map(|i| self.0[i])
    }
}

impl std::ops::Index<usize> for FeatureVector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// Pluggable resources. Only the tagger is mandatory.
#[derive(Clone)]
pub struct FeatureResources {
    pub embeddings: Option<Arc<Embeddings>>,
    pub contextual: Option<Arc<dyn ContextualEmbedder>>,
    pub frequencies: Option<Arc<FrequencyTable>>,
    pub tagger: Arc<dyn PosTagger>,
    pub search: Option<Arc<dyn SearchBackend>>,
}

impl std::fmt::Debug for FeatureResources {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FeatureResources")
            .field("embeddings", &self.embeddings.as_ref().map(|e| e.len()))
            .field("contextual", &self.contextual.is_some())
            .field("frequencies", &self.frequencies.is_some())
            .field("search", &self.search.is_some())
            .finish()
    }
}

impl Default for FeatureResources {
    fn default() -> Self {
        Self {
            embeddings: None,
            contextual: None,
            frequencies: None,
            tagger: Arc::new(LexiconTagger::default()),
            search: None,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeatureOptions {
    /// Query the search backend for slot 32; otherwise it is neutral.
    pub use_web_score: bool,
}

/// Degraded slots raised during extraction.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct FeatureWarnings {
    pub missing_embeddings: bool,
    pub missing_contextual: bool,
    pub web_score_neutral: bool,
}

impl FeatureWarnings {
    pub fn any(&self) -> bool {
        self.missing_embeddings || self.missing_contextual || self.web_score_neutral
    }
}

fn rel(x: usize, len: usize) -> f64 {
    x as f64 / len.max(1) as f64
}

fn ratio(a: usize, b: usize) -> f64 {
    let (lo, hi) = (a.min(b), a.max(b));
    if hi == 0 {
        1.0
    } else {
        lo as f64 / hi as f64
    }
}

fn folded_tokens(s: &str) -> Vec<String> {
    text::content_tokens(s).iter().map(|t| t.to_lowercase()).collect()
}

fn token_bigrams(toks: &[String]) -> BTreeSet<(String, String)> {
    toks.windows(2).map(|w| (w[0].clone(), w[1].clone())).collect()
}

/// Plural iff the head (last) tag is NNS/NNPS; suffix heuristic without tags.
fn phrase_is_plural(phrase: &str, tags: &[String]) -> bool {
    match tags.iter().rev().find(|t| t.chars().next().is_some_and(char::is_alphabetic)) {
        Some(t) => tagger::is_plural(t),
        None => {
            let w = phrase.trim().to_lowercase();
            w.ends_with('s') && !w.ends_with("ss") && !w.ends_with("us") && !w.ends_with("is")
        }
    }
}

/// Jaccard similarity of the POS tag sets of `a` and `d`.
pub fn pos_jaccard(a: &str, d: &str, tagger: &dyn PosTagger) -> f64 {
    let ta: BTreeSet<String> = tagger.tag(&text::content_tokens(a)).into_iter().collect();
    let td: BTreeSet<String> = tagger.tag(&text::content_tokens(d)).into_iter().collect();
    text::jaccard(&ta, &td)
}

fn finite_or_zero(x: f64) -> f64 {
    if x.is_finite() {
        x
    } else {
        0.0
    }
}

pub fn extract_features(stem: &str, key: &str, candidate: &str, res: &FeatureResources, opts: &FeatureOptions) -> FeatureVector {
    extract_features_with_warnings(stem, key, candidate, res, opts).0
}

pub fn extract_features_with_warnings(
    stem: &str,
    key: &str,
    candidate: &str,
    res: &FeatureResources,
    opts: &FeatureOptions,
) -> (FeatureVector, FeatureWarnings) {
    let mut f = [0.0f64; FEATURE_COUNT];
    let mut warn = FeatureWarnings::default();
    let (a, d) = (key, candidate);
    let stem_text = stem.replace(text::BLANK, " ");

    match &res.embeddings {
        Some(e) => {
            f[0] = e.similarity(&stem_text, d);
            f[1] = e.similarity(a, d);
        }
        None => warn.missing_embeddings = true,
    }

    match &res.contextual {
        Some(ctx) => {
            let va = ctx.embed(&text::complete(stem, a), a);
            let vd = ctx.embed(&text::complete(stem, d), d);
            if let (Some(va), Some(vd)) = (va, vd) {
                let va: Vec<f64> = va.into_iter().map(f64::from).collect();
                let vd: Vec<f64> = vd.into_iter().map(f64::from).collect();
                f[2] = text::cosine(&va, &vd);
            }
        }
        None => warn.missing_contextual = true,
    }

    let ca: Vec<char> = a.to_lowercase().chars().collect();
    let cd: Vec<char> = d.to_lowercase().chars().collect();
    let ed = strings::edit_distance_chars(&ca, &cd);
    f[3] = ed as f64;
    f[4] = rel(ed, ca.len());
    f[5] = rel(ed, cd.len());

    let ta = folded_tokens(a);
    let td = folded_tokens(d);
    f[6] = ta.len() as f64;
    f[7] = td.len() as f64;
    f[8] = ta.len().abs_diff(td.len()) as f64;
    f[9] = ratio(ta.len(), td.len());
    f[10] = ca.len() as f64;
    f[11] = cd.len() as f64;
    f[12] = ca.len().abs_diff(cd.len()) as f64;
    f[13] = ratio(ca.len(), cd.len());

    let tags_a = res.tagger.tag(&text::content_tokens(a));
    let tags_d = res.tagger.tag(&text::content_tokens(d));
    f[14] = f64::from(u8::from(phrase_is_plural(a, &tags_a) == phrase_is_plural(d, &tags_d)));

    let lcp = strings::lcp_chars(&ca, &cd);
    let lcsuf = strings::lcsuffix_chars(&ca, &cd);
    let lcs = strings::lcs_chars(&ca, &cd);
    for (base, v) in [(15, lcp), (18, lcsuf), (21, lcs)] {
        f[base] = v as f64;
        f[base + 1] = rel(v, ca.len());
        f[base + 2] = rel(v, cd.len());
    }

    let sa: BTreeSet<String> = tags_a.into_iter().collect();
    let sd: BTreeSet<String> = tags_d.into_iter().collect();
    f[24] = text::jaccard(&sa, &sd);

    if let Some(freq) = &res.frequencies {
        f[25] = freq.scaled_log_frequency(a);
        f[26] = freq.scaled_log_frequency(d);
        f[27] = (f[25] - f[26]).abs();
    }

    let ua: BTreeSet<String> = ta.iter().cloned().collect();
    let ud: BTreeSet<String> = td.iter().cloned().collect();
    f[28] = text::jaccard(&ua, &ud);
    f[29] = text::jaccard(&token_bigrams(&ta), &token_bigrams(&td));
    let uq: BTreeSet<String> = text::stem_tokens(stem).iter().map(|t| t.to_lowercase()).collect();
    f[30] = text::jaccard(&uq, &ud);
    f[31] = text::jaccard(&strings::char_bigrams(a), &strings::char_bigrams(d));

    f[32] = if opts.use_web_score && res.search.is_some() && res.embeddings.is_some() {
        web_search_score(stem, d, res.search.as_deref(), res.embeddings.as_deref(), res.tagger.as_ref())
    } else {
        warn.web_score_neutral = true;
        NEUTRAL_WEB_SCORE
    };

    for x in &mut f {
        *x = finite_or_zero(*x);
    }
    (FeatureVector(f), warn)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn res_with_emb() -> FeatureResources {
        let mut e = Embeddings::new(2);
        e.insert("cat", vec![1.0, 0.0]);
        e.insert("dog", vec![0.6, 0.8]);
        FeatureResources { embeddings: Some(Arc::new(e)), ..Default::default() }
    }

    #[test]
    fn names_are_unique_and_indexed() {
        let set: BTreeSet<_> = FEATURE_NAMES.iter().collect();
        assert_eq!(set.len(), FEATURE_COUNT);
        assert_eq!(feature_index("web_search_score"), Some(32));
        assert_eq!(feature_index("lcp_abs"), Some(15));
    }

    #[test]
    fn identity_candidate() {
        let r = res_with_emb();
        let f = extract_features("The ____ sat.", "cat", "cat", &r, &FeatureOptions::default());
        assert_eq!(f.get("edit_distance_abs"), Some(0.0));
        for s in ["lcp_rel_a", "lcp_rel_d", "lcsuffix_rel_a", "lcsuffix_rel_d", "lcsubseq_rel_a", "lcsubseq_rel_d"] {
            assert_eq!(f.get(s), Some(1.0), "{s}");
        }
        assert_eq!(f.get("unigram_jaccard_ad"), Some(1.0));
        assert!((f.get("emb_sim_ad").unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn disjoint_strings() {
        let f = extract_features("The ____ sat.", "cat", "dog", &res_with_emb(), &FeatureOptions::default());
        assert_eq!(f.get("lcp_abs"), Some(0.0));
        assert_eq!(f.get("lcsubseq_abs"), Some(0.0));
        assert_eq!(f.get("char_bigram_jaccard_ad"), Some(0.0));
        assert!((f.get("emb_sim_ad").unwrap() - 0.6).abs() < 1e-6);
    }

    #[test]
    fn protein_proteins() {
        let f = extract_features("Enzymes are ____.", "protein", "proteins", &FeatureResources::default(), &FeatureOptions::default());
        assert_eq!(f.get("lcp_abs"), Some(7.0));
        assert_eq!(f.get("lcp_rel_a"), Some(1.0));
        assert_eq!(f.get("lcp_rel_d"), Some(7.0 / 8.0));
        assert_eq!(f.get("singular_plural_consistency"), Some(0.0));
    }

    #[test]
    fn degraded_slots() {
        let (f, w) = extract_features_with_warnings(
            "Cells contain ____.",
            "DNA",
            "RNA",
            &FeatureResources::default(),
            &FeatureOptions { use_web_score: true },
        );
        assert_eq!(f[0], 0.0);
        assert_eq!(f[2], 0.0);
        assert_eq!(f[32], 0.5);
        assert!(w.missing_embeddings && w.missing_contextual && w.web_score_neutral);
    }

    #[test]
    fn pos_jaccard_sets() {
        let t = LexiconTagger::default();
        assert_eq!(pos_jaccard("cell", "water", &t), 1.0);
        assert_eq!(pos_jaccard("cell", "quickly", &t), 0.0);
        assert_eq!(pos_jaccard("cell", "cell cells", &t), 0.5);
    }

    #[test]
    fn vector_serde_round_trip() {
        let f = extract_features("Cells contain ____.", "DNA", "RNA", &FeatureResources::default(), &FeatureOptions::default());
        let s = serde_json::to_string(&f).unwrap();
        let back: FeatureVector = serde_json::from_str(&s).unwrap();
        assert_eq!(f, back);
        assert!(serde_json::from_str::<FeatureVector>("[1.0, 2.0]").is_err());
    }
}
