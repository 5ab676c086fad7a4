//! Candidate set generation: context-dependent conceptualization of the key
//! followed by typicality-weighted expansion to sibling instances.
//!
//! For a stem `q` and key `a`, each concept `c` of `a` gets the weight
//! `p(c|a) * <pi_{a,q}, gamma_c>` where `pi` is the topic distribution of the
//! completed sentence and `gamma_c` that of the concept. Candidates then get
//! `p(d) = sum_c p(d|c) * w(c)`.

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::kb::Taxonomy;
use crate::text;
use crate::topics::{self, InferenceConfig, TopicDistribution, TopicModel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CsgConfig {
    /// Number of key concepts kept before re-weighting.
    pub concept_set_size: usize,
    /// Number of candidates returned.
    pub m: usize,
    pub prior_smoothing: f64,
    pub typicality_smoothing: f64,
    /// Instances appended to a concept's pseudo-document when inferring its topics.
    pub top_instances: usize,
    pub inference: InferenceConfig,
}

impl Default for CsgConfig {
    fn default() -> Self {
        Self {
            concept_set_size: 20,
            m: 100,
            prior_smoothing: 0.0,
            typicality_smoothing: 0.0,
            top_instances: 10,
            inference: InferenceConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub surface: String,
    pub probability: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FallbackReason {
    /// The key is not an instance of the taxonomy.
    UnknownKey,
    /// The key is known but every sibling was filtered out.
    NoCandidates,
    /// Nothing was left to rank after pooling.
    EmptyPool,
}

/// Candidates sorted by descending probability, ties by surface.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CandidateSet {
    pub candidates: Vec<Candidate>,
    pub fallback: Option<FallbackReason>,
}

impl CandidateSet {
    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn surfaces(&self) -> impl Iterator<Item = &str> {
        self.candidates.iter().map(|c| c.surface.as_str())
    }
}

fn by_weight_then_name(a: &(String, f64), b: &(String, f64)) -> std::cmp::Ordering {
    b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0))
}

/// Re-weight concept priors by topic agreement and normalize. When every
/// topic factor vanishes the normalized priors are returned.
pub fn combine_posterior(
    priors: &[(String, f64)],
    sentence_topics: &TopicDistribution,
    concept_topics: &[TopicDistribution],
) -> Vec<(String, f64)> {
    let mut weights: Vec<(String, f64)> = priors
        .iter()
        .zip(concept_topics)
        .map(|((c, p), g)| (c.clone(), p * sentence_topics.dot(g)))
        .collect();
    let mut total: f64 = weights.iter().map(|w| w.1).sum();
    if total <= 0.0 {
        weights = priors.to_vec();
        total = weights.iter().map(|w| w.1).sum();
    }
    if total > 0.0 {
        for w in &mut weights {
            w.1 /= total;
        }
    }
    weights.sort_by(by_weight_then_name);
    weights
}

/// Posterior `p(c | a, q)` over the top concepts of the key. `None` when the
/// key is not in the taxonomy.
pub fn posterior_concepts(
    stem: &str,
    key: &str,
    taxonomy: &Taxonomy,
    model: &TopicModel,
    cfg: &CsgConfig,
) -> Option<Vec<(String, f64)>> {
    let priors = taxonomy.concepts_of(key, cfg.concept_set_size, cfg.prior_smoothing)?;
    let sentence = topics::infer_text(model, &text::complete(stem, key), &cfg.inference);
    let gammas: Vec<TopicDistribution> = priors
        .iter()
        .map(|(c, _)| {
            topics::concept_topic_distribution(model, taxonomy, c, cfg.top_instances, &cfg.inference)
                .expect("concept comes from the taxonomy")
        })
        .collect();
    Some(combine_posterior(&priors, &sentence, &gammas))
}

/// Unnormalized candidate mass `sum_c p(d|c) w(c)` over all instances of the
/// weighted concepts.
pub fn expand_concepts(taxonomy: &Taxonomy, weights: &[(String, f64)], typicality_smoothing: f64) -> BTreeMap<String, f64> {
    let mut mass = BTreeMap::new();
    for (concept, w) in weights {
        let Some(instances) = taxonomy.instances_of(concept) else { continue };
        for inst in instances.keys() {
            let t = taxonomy.typicality(inst, concept, typicality_smoothing).unwrap_or(0.0);
            *mass.entry(inst.clone()).or_insert(0.0) += t * w;
        }
    }
    mass
}

/// Whether a candidate surface occurs in the stem: single words against the
/// stem's tokens, multi-word candidates as a substring.
pub fn occurs_in_stem(candidate: &str, stem_tokens: &HashSet<String>, folded_stem: &str) -> bool {
    let c = text::casefold(candidate.trim());
    if c.contains(char::is_whitespace) {
        folded_stem.contains(&c)
    } else {
        stem_tokens.contains(&c)
    }
}

/// Drop the key and stem words, normalize, sort, truncate to `m` and
/// renormalize the kept mass.
pub fn filter_and_rank(mass: BTreeMap<String, f64>, stem: &str, key: &str, m: usize) -> Vec<Candidate> {
    let key = text::casefold(key.trim());
    let stem_tokens: HashSet<String> = text::stem_tokens(stem).iter().map(|t| text::casefold(t)).collect();
    let folded_stem = text::casefold(&stem.replace(text::BLANK, " "));
    let mut kept: Vec<(String, f64)> = mass
        .into_iter()
        .filter(|(d, p)| *p > 0.0 && text::casefold(d) != key && !occurs_in_stem(d, &stem_tokens, &folded_stem))
        .collect();
    kept.sort_by(by_weight_then_name);
    kept.truncate(m);
    let total: f64 = kept.iter().map(|c| c.1).sum();
    kept.into_iter()
        .map(|(surface, p)| Candidate { surface, probability: p / total })
        .collect()
}

pub fn generate_candidates(
    stem: &str,
    key: &str,
    taxonomy: &Taxonomy,
    model: &TopicModel,
    cfg: &CsgConfig,
) -> CandidateSet {
    let Some(weights) = posterior_concepts(stem, key, taxonomy, model, cfg) else {
        return CandidateSet { candidates: vec![], fallback: Some(FallbackReason::UnknownKey) };
    };
    let mass = expand_concepts(taxonomy, &weights, cfg.typicality_smoothing);
    let candidates = filter_and_rank(mass, stem, key, cfg.m);
    let fallback = candidates.is_empty().then_some(FallbackReason::NoCandidates);
    CandidateSet { candidates, fallback }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topics::{train_lda, LdaConfig};

    fn k1_model() -> TopicModel {
        let docs = vec![vec!["dog".to_string(), "cat".into()], vec!["pet".into(), "animal".into()]];
        train_lda(&docs, &LdaConfig { k: 1, iterations: 2, ..LdaConfig::default() }).unwrap()
    }

    #[test]
    fn single_topic_weights_are_priors() {
        let tax = Taxonomy::builder().edge("animal", "dog", 10).edge("pet", "dog", 5).build().unwrap();
        let w = posterior_concepts("My ____ barks.", "dog", &tax, &k1_model(), &CsgConfig::default()).unwrap();
        assert_eq!(w[0].0, "animal");
        assert!((w[0].1 - 2.0 / 3.0).abs() < 1e-12);
        assert!((w[1].1 - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn orthogonal_topics_annihilate() {
        let priors = vec![("a".to_string(), 0.6), ("b".to_string(), 0.4)];
        let pi = TopicDistribution(vec![0.0, 1.0]);
        let gammas = [TopicDistribution(vec![1.0, 0.0]), TopicDistribution(vec![0.5, 0.5])];
        let w = combine_posterior(&priors, &pi, &gammas);
        assert_eq!(w, vec![("b".to_string(), 1.0), ("a".to_string(), 0.0)]);
    }

    #[test]
    fn key_removed_and_renormalized() {
        let tax = Taxonomy::builder().edge("animal", "dog", 10).edge("animal", "cat", 8).build().unwrap();
        let set = generate_candidates("The ____ sleeps.", "dog", &tax, &k1_model(), &CsgConfig::default());
        assert_eq!(set.candidates, vec![Candidate { surface: "cat".into(), probability: 1.0 }]);
        assert_eq!(set.fallback, None);
    }

    #[test]
    fn stem_words_filtered() {
        let tax = Taxonomy::builder()
            .edge("animal", "dog", 10)
            .edge("animal", "cat", 8)
            .edge("animal", "cow", 3)
            .edge("animal", "guinea pig", 2)
            .build()
            .unwrap();
        let set = generate_candidates("A Cat chased the ____ past a guinea pig.", "dog", &tax, &k1_model(), &CsgConfig::default());
        let names: Vec<_> = set.surfaces().collect();
        assert_eq!(names, vec!["cow"]);
    }

    #[test]
    fn unknown_key_signals_fallback() {
        let tax = Taxonomy::builder().edge("animal", "dog", 1).build().unwrap();
        let set = generate_candidates("A ____.", "unicorn", &tax, &k1_model(), &CsgConfig::default());
        assert!(set.is_empty());
        assert_eq!(set.fallback, Some(FallbackReason::UnknownKey));
        let only_key = generate_candidates("A ____.", "dog", &tax, &k1_model(), &CsgConfig::default());
        assert_eq!(only_key.fallback, Some(FallbackReason::NoCandidates));
    }

    #[test]
    fn truncation_renormalizes() {
        let tax = Taxonomy::builder()
            .edge("animal", "dog", 10)
            .edge("animal", "cat", 6)
            .edge("animal", "cow", 3)
            .edge("animal", "eel", 1)
            .build()
            .unwrap();
        let cfg = CsgConfig { m: 2, ..CsgConfig::default() };
        let set = generate_candidates("A ____.", "dog", &tax, &k1_model(), &cfg);
        assert_eq!(set.surfaces().collect::<Vec<_>>(), vec!["cat", "cow"]);
        assert!((set.candidates[0].probability - 6.0 / 9.0).abs() < 1e-12);
        assert!((set.candidates[1].probability - 3.0 / 9.0).abs() < 1e-12);
    }
}
