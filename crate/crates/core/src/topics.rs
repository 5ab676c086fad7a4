//! LDA topic model trained by collapsed Gibbs sampling, with fold-in
//! inference for sentences and concept pseudo-documents.

use std::collections::{BTreeSet, HashMap};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kb::Taxonomy;
use crate::text;

pub const TOPIC_MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum TopicError {
    #[error("need at least 2 documents, got {0}")]
    TooFewDocuments(usize),
    #[error("number of topics must be at least 1")]
    ZeroTopics,
    #[error("iterations must be at least 1")]
    ZeroIterations,
    #[error("training corpus has an empty vocabulary")]
    EmptyVocabulary,
    #[error("hyperparameters must be positive and finite (alpha={alpha}, beta={beta})")]
    BadHyperparameters { alpha: f64, beta: f64 },
    #[error("unknown concept {0:?}")]
    UnknownConcept(String),
    #[error("invalid topic model: {0}")]
    InvalidModel(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("model file: {0}")]
    Json(#[from] serde_json::Error),
}

/// A length-K probability vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicDistribution(pub Vec<f64>);

impl TopicDistribution {
    pub fn uniform(k: usize) -> Self {
        Self(vec![1.0 / k as f64; k])
    }

    pub fn weights(&self) -> &[f64] {
        &self.0
    }

    pub fn dot(&self, other: &TopicDistribution) -> f64 {
        self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum()
    }

    /// Index of the largest weight (first on ties).
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, w) in self.0.iter().enumerate() {
            if *w > self.0[best] {
                best = i;
            }
        }
        best
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct TopicModelFile {
    format_version: u32,
    k: usize,
    alpha: f64,
    beta: f64,
    vocabulary: Vec<String>,
    /// Row-major K x V.
    topic_word: Vec<f64>,
}

/// Trained K-topic model. Immutable after construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TopicModelFile", into = "TopicModelFile")]
pub struct TopicModel {
    k: usize,
    alpha: f64,
    beta: f64,
    vocabulary: Vec<String>,
    topic_word: Vec<f64>,
    index: HashMap<String, usize>,
}

impl TryFrom<TopicModelFile> for TopicModel {
    type Error = TopicError;

    fn try_from(f: TopicModelFile) -> Result<Self, Self::Error> {
        if f.format_version != TOPIC_MODEL_FORMAT_VERSION {
            return Err(TopicError::InvalidModel(format!("unsupported format_version {}", f.format_version)));
        }
        TopicModel::new(f.k, f.alpha, f.beta, f.vocabulary, f.topic_word)
    }
}

impl From<TopicModel> for TopicModelFile {
    fn from(m: TopicModel) -> Self {
        TopicModelFile {
            format_version: TOPIC_MODEL_FORMAT_VERSION,
            k: m.k,
            alpha: m.alpha,
            beta: m.beta,
            vocabulary: m.vocabulary,
            topic_word: m.topic_word,
        }
    }
}

impl TopicModel {
    /// Validates shape, positivity and row normalization.
    pub fn new(k: usize, alpha: f64, beta: f64, vocabulary: Vec<String>, topic_word: Vec<f64>) -> Result<Self, TopicError> {
        if k == 0 {
            return Err(TopicError::ZeroTopics);
        }
        if vocabulary.is_empty() {
            return Err(TopicError::EmptyVocabulary);
        }
        if !(alpha > 0.0 && alpha.is_finite() && beta > 0.0 && beta.is_finite()) {
            return Err(TopicError::BadHyperparameters { alpha, beta });
        }
        let v = vocabulary.len();
        if topic_word.len() != k * v {
            return Err(TopicError::InvalidModel(format!("topic_word has {} entries, expected {}", topic_word.len(), k * v)));
        }
        for (t, row) in topic_word.chunks(v).enumerate() {
            if row.iter().any(|p| p.is_nan() || *p <= 0.0 || !p.is_finite()) {
                return Err(TopicError::InvalidModel(format!("topic {t} has a non-positive entry")));
            }
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > 1e-6 {
                return Err(TopicError::InvalidModel(format!("topic {t} sums to {s}")));
            }
        }
        let mut index = HashMap::with_capacity(v);
        for (i, w) in vocabulary.iter().enumerate() {
            if index.insert(w.clone(), i).is_some() {
                return Err(TopicError::InvalidModel(format!("duplicate vocabulary entry {w:?}")));
            }
        }
        Ok(Self { k, alpha, beta, vocabulary, topic_word, index })
    }

    /// Every topic is the uniform word distribution.
    pub fn uniform(k: usize, vocabulary: Vec<String>, alpha: f64, beta: f64) -> Result<Self, TopicError> {
        let v = vocabulary.len().max(1);
        Self::new(k, alpha, beta, vocabulary, vec![1.0 / v as f64; k * v])
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn vocabulary(&self) -> &[String] {
        &self.vocabulary
    }

    pub fn word_id(&self, w: &str) -> Option<usize> {
        self.index.get(w).copied()
    }

    pub fn topic_row(&self, topic: usize) -> &[f64] {
        let v = self.vocabulary.len();
        &self.topic_word[topic * v..(topic + 1) * v]
    }

    pub fn word_prob(&self, topic: usize, word: usize) -> f64 {
        self.topic_word[topic * self.vocabulary.len() + word]
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), TopicError> {
        std::fs::write(path, serde_json::to_vec(self)?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, TopicError> {
        Ok(serde_json::from_slice(&std::fs::read(path)?)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LdaConfig {
    pub k: usize,
    /// Doc-topic prior; `None` means 50/K.
    pub alpha: Option<f64>,
    pub beta: f64,
    pub iterations: usize,
    pub seed: u64,
}

impl Default for LdaConfig {
    fn default() -> Self {
        Self { k: 100, alpha: None, beta: 0.01, iterations: 200, seed: 0 }
    }
}

impl LdaConfig {
    pub fn alpha(&self) -> f64 {
        self.alpha.unwrap_or(50.0 / self.k.max(1) as f64)
    }
}

/// Fold-in settings: the returned proportions are averaged over the last
/// `average_last` sweeps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InferenceConfig {
    pub iterations: usize,
    pub average_last: usize,
    pub seed: u64,
}

impl Default for InferenceConfig {
    fn default() -> Self {
        Self { iterations: 20, average_last: 10, seed: 0x5eed }
    }
}

fn sample_index(rng: &mut ChaCha8Rng, weights: &[f64]) -> usize {
    let total: f64 = weights.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (i, w) in weights.iter().enumerate() {
        if u < *w {
            return i;
        }
        u -= w;
    }
    weights.len() - 1
}

/// Collapsed Gibbs sampling over token-topic assignments.
pub fn train_lda(docs: &[Vec<String>], cfg: &LdaConfig) -> Result<TopicModel, TopicError> {
    if docs.len() < 2 {
        return Err(TopicError::TooFewDocuments(docs.len()));
    }
    if cfg.k == 0 {
        return Err(TopicError::ZeroTopics);
    }
    if cfg.iterations == 0 {
        return Err(TopicError::ZeroIterations);
    }
    let (k, alpha, beta) = (cfg.k, cfg.alpha(), cfg.beta);
    if !(alpha > 0.0 && alpha.is_finite() && beta > 0.0 && beta.is_finite()) {
        return Err(TopicError::BadHyperparameters { alpha, beta });
    }
    let vocabulary: Vec<String> = docs.iter().flatten().cloned().collect::<BTreeSet<_>>().into_iter().collect();
    if vocabulary.is_empty() {
        return Err(TopicError::EmptyVocabulary);
    }
    let v = vocabulary.len();
    let index: HashMap<&str, usize> = vocabulary.iter().enumerate().map(|(i, w)| (w.as_str(), i)).collect();
    let words: Vec<Vec<usize>> = docs.iter().map(|d| d.iter().map(|w| index[w.as_str()]).collect()).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut doc_topic = vec![vec![0u32; k]; docs.len()];
    let mut topic_word = vec![0u32; k * v];
    let mut topic_total = vec![0u32; k];
    let mut assign: Vec<Vec<usize>> = Vec::with_capacity(docs.len());
    for (d, doc) in words.iter().enumerate() {
        let mut z = Vec::with_capacity(doc.len());
        for &w in doc {
            let t = rng.random_range(0..k);
            doc_topic[d][t] += 1;
            topic_word[t * v + w] += 1;
            topic_total[t] += 1;
            z.push(t);
        }
        assign.push(z);
    }

    let v_beta = v as f64 * beta;
    let mut p = vec![0.0; k];
    for _ in 0..cfg.iterations {
        for (d, doc) in words.iter().enumerate() {
            for (i, &w) in doc.iter().enumerate() {
                let old = assign[d][i];
                doc_topic[d][old] -= 1;
                topic_word[old * v + w] -= 1;
                topic_total[old] -= 1;
                for t in 0..k {
                    p[t] = (doc_topic[d][t] as f64 + alpha) * (topic_word[t * v + w] as f64 + beta)
                        / (topic_total[t] as f64 + v_beta);
                }
                let new = sample_index(&mut rng, &p);
                assign[d][i] = new;
                doc_topic[d][new] += 1;
                topic_word[new * v + w] += 1;
                topic_total[new] += 1;
            }
        }
    }

    let mut phi = vec![0.0; k * v];
    for t in 0..k {
        let denom = topic_total[t] as f64 + v_beta;
        for w in 0..v {
            phi[t * v + w] = (topic_word[t * v + w] as f64 + beta) / denom;
        }
    }
    TopicModel::new(k, alpha, beta, vocabulary, phi)
}

/// Fold-in Gibbs inference with the topic-word matrix frozen.
/// Out-of-vocabulary tokens are dropped; an all-OOV input yields the
/// uniform distribution.
pub fn infer_topics(model: &TopicModel, tokens: &[String], cfg: &InferenceConfig) -> TopicDistribution {
    let k = model.k;
    let ids: Vec<usize> = tokens.iter().filter_map(|t| model.word_id(t)).collect();
    if ids.is_empty() || cfg.iterations == 0 {
        return TopicDistribution::uniform(k);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut counts = vec![0u32; k];
    let mut z: Vec<usize> = Vec::with_capacity(ids.len());
    for _ in &ids {
        let t = rng.random_range(0..k);
        counts[t] += 1;
        z.push(t);
    }
    let n = ids.len() as f64;
    let denom = n + k as f64 * model.alpha;
    let window = cfg.average_last.clamp(1, cfg.iterations);
    let mut acc = vec![0.0; k];
    let mut p = vec![0.0; k];
    for it in 0..cfg.iterations {
        for (i, &w) in ids.iter().enumerate() {
            counts[z[i]] -= 1;
            for t in 0..k {
                p[t] = (counts[t] as f64 + model.alpha) * model.word_prob(t, w);
            }
            let new = sample_index(&mut rng, &p);
            z[i] = new;
            counts[new] += 1;
        }
        if it >= cfg.iterations - window {
            for t in 0..k {
                acc[t] += (counts[t] as f64 + model.alpha) / denom;
            }
        }
    }
    TopicDistribution(acc.into_iter().map(|a| a / window as f64).collect())
}

/// Inference on raw text using the topic tokenizer.
pub fn infer_text(model: &TopicModel, text: &str, cfg: &InferenceConfig) -> TopicDistribution {
    infer_topics(model, &text::topic_tokens(text), cfg)
}

/// Topic distribution of a concept, inferred from a pseudo-document made of
/// the concept label followed by its `top_instances` most typical instances.
pub fn concept_topic_distribution(
    model: &TopicModel,
    taxonomy: &Taxonomy,
    concept: &str,
    top_instances: usize,
    cfg: &InferenceConfig,
) -> Result<TopicDistribution, TopicError> {
    let instances = taxonomy
        .top_instances(concept, top_instances)
        .map_err(|_| TopicError::UnknownConcept(concept.to_string()))?;
    let mut tokens = text::topic_tokens(concept);
    for inst in instances {
        tokens.extend(text::topic_tokens(inst));
    }
    Ok(infer_topics(model, &tokens, cfg))
}

/// Per-token perplexity of `docs` with document proportions obtained by
/// fold-in. `None` when no token is in vocabulary.
pub fn perplexity(model: &TopicModel, docs: &[Vec<String>], cfg: &InferenceConfig) -> Option<f64> {
    let mut ll = 0.0;
    let mut n = 0usize;
    for doc in docs {
        let theta = infer_topics(model, doc, cfg);
        for w in doc.iter().filter_map(|t| model.word_id(t)) {
            let p: f64 = (0..model.k).map(|t| theta.0[t] * model.word_prob(t, w)).sum();
            ll += p.ln();
            n += 1;
        }
    }
    (n > 0).then(|| (-ll / n as f64).exp())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(str::to_string).collect()
    }

    pub(crate) fn disjoint_corpus() -> Vec<Vec<String>> {
        vec![
            toks("apple banana apple banana apple banana apple banana apple banana apple banana"),
            toks("xray yak xray yak xray yak xray yak xray yak xray yak"),
        ]
    }

    #[test]
    fn single_topic_is_smoothed_unigram() {
        let docs = vec![toks("a a b"), toks("b c")];
        let cfg = LdaConfig { k: 1, alpha: Some(0.5), beta: 0.1, iterations: 5, seed: 3 };
        let m = train_lda(&docs, &cfg).unwrap();
        // counts a=2 b=2 c=1, N=5, V=3
        let expected = [2.1 / 5.3, 2.1 / 5.3, 1.1 / 5.3];
        for (got, want) in m.topic_row(0).iter().zip(expected) {
            assert!((got - want).abs() < 1e-12);
        }
    }

    #[test]
    fn separates_disjoint_vocabularies() {
        let mut ok = 0;
        for seed in 0..5 {
            let cfg = LdaConfig { k: 2, alpha: Some(0.1), beta: 0.01, iterations: 200, seed };
            let m = train_lda(&disjoint_corpus(), &cfg).unwrap();
            let mass = |t: usize, words: &[&str]| -> f64 { words.iter().map(|w| m.word_prob(t, m.word_id(w).unwrap())).sum() };
            let concentrated = (0..2).all(|t| {
                mass(t, &["apple", "banana"]) >= 0.9 || mass(t, &["xray", "yak"]) >= 0.9
            });
            let distinct = (mass(0, &["apple", "banana"]) >= 0.9) != (mass(1, &["apple", "banana"]) >= 0.9);
            if concentrated && distinct {
                ok += 1;
            }
        }
        assert!(ok >= 4, "only {ok}/5 seeds separated the topics");
    }

    #[test]
    fn training_is_deterministic() {
        let cfg = LdaConfig { k: 3, alpha: None, beta: 0.01, iterations: 30, seed: 11 };
        let a = train_lda(&disjoint_corpus(), &cfg).unwrap();
        let b = train_lda(&disjoint_corpus(), &cfg).unwrap();
        assert_eq!(a.topic_word, b.topic_word);
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    }

    #[test]
    fn training_errors() {
        let cfg = LdaConfig { k: 2, ..LdaConfig::default() };
        assert!(matches!(train_lda(&[toks("a")], &cfg), Err(TopicError::TooFewDocuments(1))));
        assert!(matches!(train_lda(&[vec![], vec![]], &cfg), Err(TopicError::EmptyVocabulary)));
        let zero = LdaConfig { k: 0, ..LdaConfig::default() };
        assert!(matches!(train_lda(&disjoint_corpus(), &zero), Err(TopicError::ZeroTopics)));
        let no_iter = LdaConfig { iterations: 0, ..cfg };
        assert!(matches!(train_lda(&disjoint_corpus(), &no_iter), Err(TopicError::ZeroIterations)));
    }

    fn toy_model() -> TopicModel {
        let cfg = LdaConfig { k: 2, alpha: Some(0.1), beta: 0.01, iterations: 200, seed: 0 };
        train_lda(&disjoint_corpus(), &cfg).unwrap()
    }

    #[test]
    fn inference_contracts() {
        let one = train_lda(&disjoint_corpus(), &LdaConfig { k: 1, iterations: 3, ..LdaConfig::default() }).unwrap();
        assert_eq!(infer_topics(&one, &toks("apple yak"), &InferenceConfig::default()).0, vec![1.0]);

        let m = toy_model();
        assert_eq!(infer_topics(&m, &toks("zebra quokka"), &InferenceConfig::default()).0, vec![0.5, 0.5]);

        let fruit_topic = (0..2).max_by(|a, b| m.word_prob(*a, 0).total_cmp(&m.word_prob(*b, 0))).unwrap();
        let d = infer_topics(&m, &toks("apple banana apple"), &InferenceConfig::default());
        assert_eq!(d.argmax(), fruit_topic);
        assert!((d.0.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        let again = infer_topics(&m, &toks("apple banana apple"), &InferenceConfig::default());
        assert_eq!(d, again);
    }

    #[test]
    fn concept_distributions() {
        let m = toy_model();
        let tax = Taxonomy::builder()
            .edge("fruit", "apple", 5)
            .edge("fruit", "banana", 4)
            .edge("letters", "xray", 3)
            .edge("letters", "yak", 2)
            .build()
            .unwrap();
        let cfg = InferenceConfig::default();
        let f = concept_topic_distribution(&m, &tax, "fruit", 2, &cfg).unwrap();
        let l = concept_topic_distribution(&m, &tax, "letters", 2, &cfg).unwrap();
        assert_ne!(f.argmax(), l.argmax());
        // bare label is out of vocabulary -> uniform
        assert_eq!(concept_topic_distribution(&m, &tax, "fruit", 0, &cfg).unwrap().0, vec![0.5, 0.5]);
        assert!(matches!(concept_topic_distribution(&m, &tax, "rocks", 2, &cfg), Err(TopicError::UnknownConcept(_))));

        let single = Taxonomy::builder().edge("pet", "dog", 1).build().unwrap();
        let k1 = train_lda(&[toks("dog dog"), toks("dog pet")], &LdaConfig { k: 1, iterations: 2, ..LdaConfig::default() }).unwrap();
        assert_eq!(concept_topic_distribution(&k1, &single, "pet", 5, &cfg).unwrap().0, vec![1.0]);
    }

    #[test]
    fn trained_perplexity_beats_uniform() {
        let m = toy_model();
        let uniform = TopicModel::uniform(2, m.vocabulary().to_vec(), 0.1, 0.01).unwrap();
        let cfg = InferenceConfig::default();
        let trained = perplexity(&m, &disjoint_corpus(), &cfg).unwrap();
        let base = perplexity(&uniform, &disjoint_corpus(), &cfg).unwrap();
        assert!(trained <= base, "{trained} > {base}");
        assert!((base - 4.0).abs() < 1e-9);
    }

    #[test]
    fn model_file_round_trip_and_validation() {
        let m = toy_model();
        let json = serde_json::to_string(&m).unwrap();
        assert!(json.contains("\"format_version\":1"));
        let back: TopicModel = serde_json::from_str(&json).unwrap();
        assert_eq!(back, m);

        let bad = json.replace("\"format_version\":1", "\"format_version\":9");
        assert!(serde_json::from_str::<TopicModel>(&bad).is_err());
        assert!(TopicModel::new(1, 0.1, 0.1, vec!["a".into(), "b".into()], vec![0.7, 0.7]).is_err());
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(32))]
        #[test]
        fn inferred_distributions_sum_to_one(words in proptest::collection::vec("[a-z]{2,4}", 0..12), seed in 0u64..1000) {
            let m = toy_model();
            let cfg = InferenceConfig { seed, ..InferenceConfig::default() };
            let d = infer_topics(&m, &words, &cfg);
            proptest::prop_assert!((d.0.iter().sum::<f64>() - 1.0).abs() < 1e-6);
            proptest::prop_assert!(d.0.iter().all(|w| *w >= 0.0));
        }
    }
}
