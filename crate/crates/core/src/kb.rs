//! Count-based is-A taxonomy with prior `p(concept | instance)` and
//! typicality `p(instance | concept)` queries.
//!
//! Two offline formats are read: Probase-style `concept<TAB>instance<TAB>count`
//! dumps and a WordNet-derived hypernym export that adds an optional POS
//! column. Smoothing is applied at query time; stored counts are the raw
//! file counts (duplicates summed).

use std::collections::{BTreeMap, BTreeSet, HashSet, VecDeque};
use std::fmt;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::str::FromStr;

use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::text::normalize_term;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaxonomyFormat {
    CountTsv,
    HypernymExport,
}

impl FromStr for TaxonomyFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "count_tsv" | "count-tsv" => Ok(Self::CountTsv),
            "hypernym_export" | "hypernym-export" => Ok(Self::HypernymExport),
            other => Err(format!("unknown taxonomy format {other:?}")),
        }
    }
}

#[derive(Debug, Error)]
pub enum KbError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("taxonomy has no valid edges")]
    Empty,
    #[error("unknown instance {0:?}")]
    UnknownInstance(String),
    #[error("unknown concept {0:?}")]
    UnknownConcept(String),
    #[error("no POS index loaded; use a hypernym export with a POS column")]
    NoPosIndex,
    #[error("smoothing must be finite and non-negative, got {0}")]
    BadSmoothing(f64),
}

/// A rejected taxonomy line.
#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostic {
    pub line: usize,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: {}", self.line, self.message)
    }
}

#[derive(Debug, Default, Clone)]
pub struct TaxonomyBuilder {
    edges: BTreeMap<(String, String), u64>,
    pos: BTreeMap<String, BTreeSet<String>>,
}

impl TaxonomyBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds `count` to the edge; zero counts are ignored.
    pub fn add_edge(&mut self, concept: &str, instance: &str, count: u64) -> &mut Self {
        let (c, i) = (normalize_term(concept), normalize_term(instance));
        if count > 0 && !c.is_empty() && !i.is_empty() {
            *self.edges.entry((c, i)).or_insert(0) += count;
        }
        self
    }

    pub fn add_pos(&mut self, instance: &str, tag: &str) -> &mut Self {
        self.pos.entry(normalize_term(instance)).or_default().insert(tag.trim().to_string());
        self
    }

    pub fn edge(mut self, concept: &str, instance: &str, count: u64) -> Self {
        self.add_edge(concept, instance, count);
        self
    }

    pub fn build(self) -> Result<Taxonomy, KbError> {
        if self.edges.is_empty() {
            return Err(KbError::Empty);
        }
        let mut concept_instances: BTreeMap<String, BTreeMap<String, u64>> = BTreeMap::new();
        let mut instance_concepts: BTreeMap<String, BTreeMap<String, u64>> = BTreeMap::new();
        for ((c, i), n) in self.edges {
            concept_instances.entry(c.clone()).or_default().insert(i.clone(), n);
            instance_concepts.entry(i).or_default().insert(c, n);
        }
        let mut pos_index: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
        let mut instance_pos = BTreeMap::new();
        for (inst, tags) in self.pos {
            if !instance_concepts.contains_key(&inst) {
                continue;
            }
            for t in &tags {
                pos_index.entry(t.clone()).or_default().insert(inst.clone());
            }
            instance_pos.insert(inst, tags);
        }
        Ok(Taxonomy { concept_instances, instance_concepts, pos_index, instance_pos })
    }
}

/// Immutable concept/instance graph with positive edge counts.
#[derive(Debug, Clone)]
pub struct Taxonomy {
    concept_instances: BTreeMap<String, BTreeMap<String, u64>>,
    instance_concepts: BTreeMap<String, BTreeMap<String, u64>>,
    pos_index: BTreeMap<String, BTreeSet<String>>,
    instance_pos: BTreeMap<String, BTreeSet<String>>,
}

fn check_alpha(alpha: f64) -> Result<(), KbError> {
    if alpha.is_finite() && alpha >= 0.0 {
        Ok(())
    } else {
        Err(KbError::BadSmoothing(alpha))
    }
}

fn smoothed(count: u64, total: u64, support: usize, alpha: f64) -> f64 {
    (count as f64 + alpha) / (total as f64 + alpha * support as f64)
}

impl Taxonomy {
    pub fn builder() -> TaxonomyBuilder {
        TaxonomyBuilder::new()
    }

    pub fn concept_count(&self) -> usize {
        self.concept_instances.len()
    }

    pub fn instance_count(&self) -> usize {
        self.instance_concepts.len()
    }

    pub fn edge_count(&self) -> usize {
        self.concept_instances.values().map(BTreeMap::len).sum()
    }

    pub fn concepts(&self) -> impl Iterator<Item = &str> {
        self.concept_instances.keys().map(String::as_str)
    }

    pub fn instances(&self) -> impl Iterator<Item = &str> {
        self.instance_concepts.keys().map(String::as_str)
    }

    pub fn has_concept(&self, concept: &str) -> bool {
        self.concept_instances.contains_key(&normalize_term(concept))
    }

    pub fn has_instance(&self, instance: &str) -> bool {
        self.instance_concepts.contains_key(&normalize_term(instance))
    }

    pub fn count(&self, concept: &str, instance: &str) -> u64 {
        self.concept_instances
            .get(&normalize_term(concept))
            .and_then(|m| m.get(&normalize_term(instance)))
            .copied()
            .unwrap_or(0)
    }

    /// Instances of a concept with their raw counts.
    pub fn instances_of(&self, concept: &str) -> Option<&BTreeMap<String, u64>> {
        self.concept_instances.get(&normalize_term(concept))
    }

    /// Concepts of an instance with their raw counts.
    pub fn concepts_with_counts(&self, instance: &str) -> Option<&BTreeMap<String, u64>> {
        self.instance_concepts.get(&normalize_term(instance))
    }

    /// `p(concept | instance)` with Laplace smoothing over the instance's concepts.
    pub fn prior(&self, concept: &str, instance: &str, alpha: f64) -> Result<f64, KbError> {
        check_alpha(alpha)?;
        let inst = normalize_term(instance);
        let cs = self.instance_concepts.get(&inst).ok_or(KbError::UnknownInstance(inst))?;
        let total = cs.values().sum();
        let count = cs.get(&normalize_term(concept)).copied().unwrap_or(0);
        Ok(smoothed(count, total, cs.len(), alpha))
    }

    /// `p(instance | concept)`, the typicality of an instance within a concept.
    pub fn typicality(&self, instance: &str, concept: &str, alpha: f64) -> Result<f64, KbError> {
        check_alpha(alpha)?;
        let c = normalize_term(concept);
        let is = self.concept_instances.get(&c).ok_or(KbError::UnknownConcept(c))?;
        let total = is.values().sum();
        let count = is.get(&normalize_term(instance)).copied().unwrap_or(0);
        Ok(smoothed(count, total, is.len(), alpha))
    }

    /// Top concepts of an instance by prior, ties broken by concept string.
    /// `None` signals an unknown instance so the caller can fall back.
    pub fn concepts_of(&self, instance: &str, top_k: usize, alpha: f64) -> Option<Vec<(String, f64)>> {
        let cs = self.instance_concepts.get(&normalize_term(instance))?;
        let total: u64 = cs.values().sum();
        let alpha = if alpha.is_finite() && alpha >= 0.0 { alpha } else { 0.0 };
        let mut ranked: Vec<(&String, u64)> = cs.iter().map(|(c, n)| (c, *n)).collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        Some(
            ranked
                .into_iter()
                .take(top_k.max(1))
                .map(|(c, n)| (c.clone(), smoothed(n, total, cs.len(), alpha)))
                .collect(),
        )
    }

    /// Most typical instances of a concept, ties broken by instance string.
    pub fn top_instances(&self, concept: &str, k: usize) -> Result<Vec<&str>, KbError> {
        let c = normalize_term(concept);
        let is = self.concept_instances.get(&c).ok_or(KbError::UnknownConcept(c))?;
        let mut ranked: Vec<(&String, u64)> = is.iter().map(|(i, n)| (i, *n)).collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        Ok(ranked.into_iter().take(k).map(|(i, _)| i.as_str()).collect())
    }

    pub fn has_pos_index(&self) -> bool {
        !self.pos_index.is_empty()
    }

    pub fn pos_tags_of(&self, instance: &str) -> Option<&BTreeSet<String>> {
        self.instance_pos.get(&normalize_term(instance))
    }

    /// Tag every instance that has no POS entry yet with `tag_of`.
    pub fn fill_pos_index(&mut self, tag_of: impl Fn(&str) -> Option<String>) {
        let missing: Vec<String> = self
            .instance_concepts
            .keys()
            .filter(|i| !self.instance_pos.contains_key(*i))
            .cloned()
            .collect();
        for inst in missing {
            if let Some(tag) = tag_of(&inst) {
                self.pos_index.entry(tag.clone()).or_default().insert(inst.clone());
                self.instance_pos.entry(inst).or_default().insert(tag);
            }
        }
    }

    /// Up to `n` distinct instances carrying `pos`, none in `exclude`
    /// (compared after normalization), deterministic for a given seed.
    pub fn sample_pos_matched(
        &self,
        pos: &str,
        n: usize,
        seed: u64,
        exclude: &HashSet<String>,
    ) -> Result<Vec<String>, KbError> {
        if !self.has_pos_index() {
            return Err(KbError::NoPosIndex);
        }
        let excluded: HashSet<String> = exclude.iter().map(|s| normalize_term(s)).collect();
        let pool: Vec<&String> = self
            .pos_index
            .get(pos)
            .map(|s| s.iter().filter(|i| !excluded.contains(*i)).collect())
            .unwrap_or_default();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok(pool.choose_multiple(&mut rng, n).map(|s| (*s).clone()).collect())
    }

    fn neighbours<'a>(&'a self, node: &str) -> impl Iterator<Item = &'a String> + 'a {
        let up = self.instance_concepts.get(node).into_iter().flat_map(|m| m.keys());
        let down = self.concept_instances.get(node).into_iter().flat_map(|m| m.keys());
        up.chain(down)
    }

    /// Shortest path length between two nodes along is-A edges (in either
    /// direction); `None` when unreachable or unknown.
    pub fn hops(&self, from: &str, to: &str) -> Option<usize> {
        let (from, to) = (normalize_term(from), normalize_term(to));
        let known = |s: &String| self.instance_concepts.contains_key(s) || self.concept_instances.contains_key(s);
        if !known(&from) || !known(&to) {
            return None;
        }
        if from == to {
            return Some(0);
        }
        let mut seen: HashSet<&str> = HashSet::new();
        let mut queue = VecDeque::new();
        let start = self
            .instance_concepts
            .get_key_value(&from)
            .map(|(k, _)| k)
            .or_else(|| self.concept_instances.get_key_value(&from).map(|(k, _)| k))?;
        seen.insert(start);
        queue.push_back((start, 0usize));
        while let Some((node, d)) = queue.pop_front() {
            for next in self.neighbours(node) {
                if *next == to {
                    return Some(d + 1);
                }
                if seen.insert(next) {
                    queue.push_back((next, d + 1));
                }
            }
        }
        None
    }
}

/// Loaded taxonomy together with the diagnostics for rejected lines.
#[derive(Debug, Clone)]
pub struct LoadedTaxonomy {
    pub taxonomy: Taxonomy,
    pub diagnostics: Vec<Diagnostic>,
}

pub fn load_taxonomy(path: impl AsRef<Path>, format: TaxonomyFormat) -> Result<LoadedTaxonomy, KbError> {
    parse_taxonomy(BufReader::new(std::fs::File::open(path)?), format)
}

pub fn parse_taxonomy(reader: impl BufRead, format: TaxonomyFormat) -> Result<LoadedTaxonomy, KbError> {
    let mut builder = TaxonomyBuilder::new();
    let mut diagnostics = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = idx + 1;
        if line.trim().is_empty() || line.trim_start().starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        let max_cols = match format {
            TaxonomyFormat::CountTsv => 3,
            TaxonomyFormat::HypernymExport => 4,
        };
        if cols.len() < 3 || cols.len() > max_cols {
            diagnostics.push(Diagnostic { line: lineno, message: format!("expected 3..={max_cols} tab-separated columns, got {}", cols.len()) });
            continue;
        }
        let (concept, instance) = (normalize_term(cols[0]), normalize_term(cols[1]));
        if concept.is_empty() || instance.is_empty() {
            diagnostics.push(Diagnostic { line: lineno, message: "empty concept or instance".into() });
            continue;
        }
        let count = match cols[2].trim().parse::<i64>() {
            Ok(n) => n,
            Err(_) => {
                diagnostics.push(Diagnostic { line: lineno, message: format!("count {:?} is not an integer", cols[2]) });
                continue;
            }
        };
        let count = match (format, count) {
            (_, n) if n > 0 => n as u64,
            // zero-frequency lemmas in exports are floored to 1
            (TaxonomyFormat::HypernymExport, 0) => 1,
            (_, n) => {
                diagnostics.push(Diagnostic { line: lineno, message: format!("non-positive count {n}") });
                continue;
            }
        };
        builder.add_edge(&concept, &instance, count);
        if let Some(tag) = cols.get(3).map(|t| t.trim()).filter(|t| !t.is_empty()) {
            builder.add_pos(&instance, tag);
        }
    }
    Ok(LoadedTaxonomy { taxonomy: builder.build()?, diagnostics })
}
