//! Seeded semi-synthetic benchmark.
//!
//! Each concept owns several suffix families of invented instance names.
//! An item's key is one family member and its gold distractors are the other
//! members of the same family, so gold siblings share surface and embedding
//! structure with the key while the taxonomy counts are random.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{save_dataset, ClozeItem, Dataset, Domain, SplitTag};
use crate::features::{Embeddings, FeatureResources};
use crate::kb::{Taxonomy, TaxonomyBuilder};
use crate::pipeline::Pipeline;
use crate::topics::{train_lda, LdaConfig, TopicModel};

const CONSONANTS: &[u8] = b"bdfgkmnprtvz";
const VOWELS: &[u8] = b"aeiou";
/// Umbrella concept shared by a random subset of instances.
pub const UMBRELLA: &str = "material";

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub concepts: usize,
    pub families_per_concept: usize,
    pub family_size: usize,
    pub topic_words: usize,
    pub docs_per_concept: usize,
    pub dim: usize,
    /// Fraction of items held out for testing.
    pub test_fraction: f64,
    pub lda_iterations: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            concepts: 8,
            families_per_concept: 5,
            family_size: 4,
            topic_words: 8,
            docs_per_concept: 12,
            dim: 16,
            test_fraction: 0.25,
            lda_iterations: 100,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SynthBenchmark {
    /// `(concept, instance, count)` in generation order.
    pub edges: Vec<(String, String, u64)>,
    pub taxonomy: Taxonomy,
    pub topics: TopicModel,
    pub embeddings: Embeddings,
    pub vectors: BTreeMap<String, Vec<f32>>,
    pub train: Dataset,
    pub test: Dataset,
}

/// File locations written by [`SynthBenchmark::write_to_dir`].
#[derive(Debug, Clone)]
pub struct SynthPaths {
    pub taxonomy: PathBuf,
    pub topics: PathBuf,
    pub embeddings: PathBuf,
    pub train: PathBuf,
    pub test: PathBuf,
}

struct Words {
    rng: ChaCha8Rng,
    used: BTreeSet<String>,
}

impl Words {
    fn pick(&mut self, set: &[u8]) -> char {
        set[self.rng.random_range(0..set.len())] as char
    }

    fn fresh(&mut self, make: impl Fn(&mut Self) -> String) -> String {
        loop {
            let w = make(self);
            if self.used.insert(w.clone()) {
                return w;
            }
        }
    }

    /// Consonant-vowel pattern of the given length.
    fn cv(&mut self, len: usize) -> String {
        (0..len).map(|i| if i % 2 == 0 { self.pick(CONSONANTS) } else { self.pick(VOWELS) }).collect()
    }
}

fn random_vector(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f32> {
    (0..dim).map(|_| rng.random_range(-1.0f32..1.0)).collect()
}

pub fn generate(cfg: &SynthConfig) -> SynthBenchmark {
    let mut words = Words { rng: ChaCha8Rng::seed_from_u64(cfg.seed), used: BTreeSet::new() };
    let mut builder = TaxonomyBuilder::new();
    let mut edges = Vec::new();
    let mut vectors = BTreeMap::new();
    let mut docs = Vec::new();
    let mut items = Vec::new();

    for c in 0..cfg.concepts {
        let concept = words.fresh(|w| format!("{}um", w.cv(4)));
        let topic_words: Vec<String> = (0..cfg.topic_words).map(|_| words.fresh(|w| w.cv(6))).collect();
        let concept_vec = random_vector(&mut words.rng, cfg.dim);
        let mut concept_instances = Vec::new();
        for _ in 0..cfg.families_per_concept {
            let suffix = words.fresh(|w| w.cv(4));
            let family_vec = random_vector(&mut words.rng, cfg.dim);
            let members: Vec<String> = (0..cfg.family_size)
                .map(|_| words.fresh(|w| format!("{}{}{}", w.pick(CONSONANTS), w.pick(VOWELS), suffix)))
                .collect();
            for m in &members {
                let count = words.rng.random_range(1..=50u64);
                builder.add_edge(&concept, m, count);
                builder.add_pos(m, "NN");
                edges.push((concept.clone(), m.clone(), count));
                if words.rng.random_bool(0.3) {
                    let count = words.rng.random_range(1..=5u64);
                    builder.add_edge(UMBRELLA, m, count);
                    edges.push((UMBRELLA.to_string(), m.clone(), count));
                }
                let noise = random_vector(&mut words.rng, cfg.dim);
                let v: Vec<f32> = (0..cfg.dim).map(|i| concept_vec[i] + family_vec[i] + 0.5 * noise[i]).collect();
                vectors.insert(m.clone(), v);
            }
            for (i, key) in members.iter().enumerate() {
                let mut tw = topic_words.clone();
                tw.shuffle(&mut words.rng);
                items.push(ClozeItem {
                    id: String::new(),
                    domain: Domain::ALL[c % Domain::ALL.len()],
                    stem: format!("The {} {} of ____ was {} by {}.", tw[0], tw[1], tw[2], tw[3]),
                    key: key.clone(),
                    distractors: members.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, m)| m.clone()).collect(),
                });
            }
            concept_instances.extend(members);
        }
        for _ in 0..cfg.docs_per_concept {
            let mut doc: Vec<String> =
                (0..12).map(|_| topic_words[words.rng.random_range(0..topic_words.len())].clone()).collect();
            doc.extend((0..4).map(|_| concept_instances[words.rng.random_range(0..concept_instances.len())].clone()));
            doc.push(concept.clone());
            docs.push(doc);
        }
    }

    let mut taxonomy = builder.build().expect("synthetic taxonomy has edges");
    taxonomy.fill_pos_index(|_| Some("NN".into()));
    let lda = LdaConfig { k: cfg.concepts.max(1), iterations: cfg.lda_iterations.max(1), seed: cfg.seed, ..LdaConfig::default() };
    let topics = train_lda(&docs, &lda).expect("synthetic corpus is valid");

    let mut embeddings = Embeddings::new(cfg.dim);
    for (w, v) in &vectors {
        embeddings.insert(w, v.clone());
    }

    for (i, item) in items.iter_mut().enumerate() {
        item.id = format!("synth-{i:04}");
    }
    let mut order: Vec<usize> = (0..items.len()).collect();
    order.shuffle(&mut words.rng);
    let n_test = ((items.len() as f64) * cfg.test_fraction).round() as usize;
    let mut test_idx: Vec<usize> = order[..n_test].to_vec();
    let mut train_idx: Vec<usize> = order[n_test..].to_vec();
    test_idx.sort_unstable();
    train_idx.sort_unstable();
    let pick = |idx: &[usize], tag| Dataset::new(idx.iter().map(|&i| items[i].clone()).collect(), tag);

    SynthBenchmark {
        train: pick(&train_idx, SplitTag::Train),
        test: pick(&test_idx, SplitTag::Test),
        edges,
        taxonomy,
        topics,
        embeddings,
        vectors,
    }
}

impl SynthBenchmark {
    pub fn resources(&self) -> FeatureResources {
        FeatureResources { embeddings: Some(Arc::new(self.embeddings.clone())), ..FeatureResources::default() }
    }

    pub fn pipeline(&self) -> Pipeline {
        Pipeline::new(self.taxonomy.clone(), self.topics.clone(), self.resources())
    }

    /// Writes the taxonomy (hypernym export with POS), topic model,
    /// embeddings and both splits.
    pub fn write_to_dir(&self, dir: impl AsRef<Path>) -> std::io::Result<SynthPaths> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        let paths = SynthPaths {
            taxonomy: dir.join("taxonomy.tsv"),
            topics: dir.join("topics.json"),
            embeddings: dir.join("embeddings.txt"),
            train: dir.join("train.jsonl"),
            test: dir.join("test.jsonl"),
        };
        let mut tax = std::io::BufWriter::new(std::fs::File::create(&paths.taxonomy)?);
        for (c, i, n) in &self.edges {
            writeln!(tax, "{c}\t{i}\t{n}\tNN")?;
        }
        tax.flush()?;
        let mut emb = std::io::BufWriter::new(std::fs::File::create(&paths.embeddings)?);
        writeln!(emb, "{} {}", self.vectors.len(), self.embeddings.dim())?;
        for (w, v) in &self.vectors {
            let parts: Vec<String> = v.iter().map(|x| x.to_string()).collect();
            writeln!(emb, "{w} {}", parts.join(" "))?;
        }
        emb.flush()?;
        let io = |e: crate::topics::TopicError| std::io::Error::other(e.to_string());
        self.topics.save(&paths.topics).map_err(io)?;
        let io = |e: crate::corpus::CorpusError| std::io::Error::other(e.to_string());
        save_dataset(&self.train, &paths.train).map_err(io)?;
        save_dataset(&self.test, &paths.test).map_err(io)?;
        Ok(paths)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::tagger::PosTagger;

    fn small() -> SynthConfig {
        SynthConfig { concepts: 3, families_per_concept: 3, lda_iterations: 20, ..SynthConfig::default() }
    }

    #[test]
    fn seeded_and_valid() {
        let a = generate(&small());
        let b = generate(&small());
        assert_eq!(a.edges, b.edges);
        assert_eq!(a.train, b.train);
        assert_eq!(a.train.len() + a.test.len(), 3 * 3 * 4);
        for item in a.train.items.iter().chain(&a.test.items) {
            item.validate().unwrap();
            assert_eq!(item.distractors.len(), 3);
        }
        let c = generate(&SynthConfig { seed: 1, ..small() });
        assert_ne!(a.edges, c.edges);
    }

    #[test]
    fn instances_tag_as_nouns() {
        let b = generate(&small());
        let tagger = crate::features::tagger::LexiconTagger::default();
        for inst in b.taxonomy.instances() {
            assert_eq!(tagger.tag_phrase(inst), vec!["NN"], "{inst}");
        }
    }

    #[test]
    fn files_load_back() {
        let b = generate(&small());
        let dir = tempfile::tempdir().unwrap();
        let p = b.write_to_dir(dir.path()).unwrap();
        let t = crate::kb::load_taxonomy(&p.taxonomy, crate::kb::TaxonomyFormat::HypernymExport).unwrap();
        assert_eq!(t.taxonomy.edge_count(), b.taxonomy.edge_count());
        assert!(t.diagnostics.is_empty());
        assert_eq!(Embeddings::load(&p.embeddings).unwrap().len(), b.vectors.len());
        assert_eq!(crate::corpus::load_dataset(&p.test).unwrap().dataset.items, b.test.items);
        assert_eq!(TopicModel::load(&p.topics).unwrap().k(), 3);
    }
}
