//! Automatic evaluation of ranked distractor lists.

pub mod baselines;
pub mod ngram;

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use baselines::{baseline_rank, BaselineError, BaselineKind, BaselineResources};
pub use ngram::{train_ngram_lm, NgramError, NgramLm};

use crate::corpus::{gold_set, Dataset, Domain};
use crate::features::Embeddings;
use crate::ranker::RankedList;
use crate::text;

/// Distinct gold members among the first `k` entries.
fn hits_at_k<S: AsRef<str>>(ranked: &[S], gold: &BTreeSet<String>, k: usize) -> usize {
    let mut seen = HashSet::new();
    ranked
        .iter()
        .take(k)
        .map(|s| text::casefold(s.as_ref().trim()))
        .filter(|s| gold.contains(s) && seen.insert(s.clone()))
        .count()
}

pub fn precision_at_k<S: AsRef<str>>(ranked: &[S], gold: &BTreeSet<String>, k: usize) -> f64 {
    assert!(k >= 1, "k must be at least 1");
    hits_at_k(ranked, gold, k) as f64 / k as f64
}

pub fn recall_at_k<S: AsRef<str>>(ranked: &[S], gold: &BTreeSet<String>, k: usize) -> f64 {
    assert!(k >= 1, "k must be at least 1");
    if gold.is_empty() {
        return 0.0;
    }
    hits_at_k(ranked, gold, k) as f64 / gold.len() as f64
}

pub fn f1_at_k<S: AsRef<str>>(ranked: &[S], gold: &BTreeSet<String>, k: usize) -> f64 {
    let p = precision_at_k(ranked, gold, k);
    let r = recall_at_k(ranked, gold, k);
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

pub fn mrr<S: AsRef<str>>(ranked: &[S], gold: &BTreeSet<String>) -> f64 {
    ranked
        .iter()
        .position(|s| gold.contains(&text::casefold(s.as_ref().trim())))
        .map_or(0.0, |i| 1.0 / (i + 1) as f64)
}

/// NDCG@k for binary relevance given in ranked order, with `relevant`
/// gold items in total.
pub fn ndcg_from_relevance(rels: &[bool], relevant: usize, k: usize) -> f64 {
    let ideal: f64 = (0..relevant.min(k)).map(|i| 1.0 / ((i + 2) as f64).log2()).sum();
    if ideal == 0.0 {
        return 0.0;
    }
    let dcg: f64 = rels.iter().take(k).enumerate().filter(|(_, r)| **r).map(|(i, _)| 1.0 / ((i + 2) as f64).log2()).sum();
    dcg / ideal
}

pub fn ndcg_at_k<S: AsRef<str>>(ranked: &[S], gold: &BTreeSet<String>, k: usize) -> f64 {
    let mut seen = HashSet::new();
    let rels: Vec<bool> = ranked
        .iter()
        .map(|s| {
            let f = text::casefold(s.as_ref().trim());
            gold.contains(&f) && seen.insert(f)
        })
        .collect();
    ndcg_from_relevance(&rels, gold.len(), k)
}

/// Mean cosine over all (top-k, gold) pairs; out-of-vocabulary pairs count 0.
pub fn semantic_similarity_at_k<S: AsRef<str>, G: AsRef<str>>(ranked: &[S], gold: &[G], embeddings: &Embeddings, k: usize) -> f64 {
    let top: Vec<Option<Vec<f64>>> = ranked.iter().take(k).map(|s| embeddings.phrase_vector(s.as_ref())).collect();
    let gv: Vec<Option<Vec<f64>>> = gold.iter().map(|g| embeddings.phrase_vector(g.as_ref())).collect();
    let pairs = top.len() * gv.len();
    if pairs == 0 {
        return 0.0;
    }
    let mut sum = 0.0;
    for t in &top {
        for g in &gv {
            if let (Some(a), Some(b)) = (t, g) {
                sum += text::cosine(a, b);
            }
        }
    }
    sum / pairs as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    /// Cut-offs for P@k, R@k and F1@k.
    pub ks: Vec<usize>,
    pub ndcg_k: usize,
    pub semsim_k: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self { ks: vec![1, 3], ndcg_k: 10, semsim_k: 3 }
    }
}

impl EvalConfig {
    /// Metric names in report order.
    pub fn metric_names(&self, with_semsim: bool) -> Vec<String> {
        let mut out = Vec::new();
        for k in &self.ks {
            out.push(format!("P@{k}"));
        }
        for k in &self.ks {
            out.push(format!("R@{k}"));
        }
        for k in &self.ks {
            out.push(format!("F1@{k}"));
        }
        out.push("MRR".into());
        out.push(format!("NDCG@{}", self.ndcg_k));
        if with_semsim {
            out.push(format!("SemSim@{}", self.semsim_k));
        }
        out
    }
}

/// Per-item metric values.
pub fn item_metrics(
    ranked: &[&str],
    gold: &BTreeSet<String>,
    gold_raw: &[String],
    cfg: &EvalConfig,
    embeddings: Option<&Embeddings>,
) -> BTreeMap<String, f64> {
    let mut m = BTreeMap::new();
    for &k in &cfg.ks {
        m.insert(format!("P@{k}"), precision_at_k(ranked, gold, k));
        m.insert(format!("R@{k}"), recall_at_k(ranked, gold, k));
        m.insert(format!("F1@{k}"), f1_at_k(ranked, gold, k));
    }
    m.insert("MRR".into(), mrr(ranked, gold));
    m.insert(format!("NDCG@{}", cfg.ndcg_k), ndcg_at_k(ranked, gold, cfg.ndcg_k));
    if let Some(e) = embeddings {
        m.insert(format!("SemSim@{}", cfg.semsim_k), semantic_similarity_at_k(ranked, gold_raw, e, cfg.semsim_k));
    }
    m
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricBlock {
    pub items: usize,
    pub metrics: BTreeMap<String, f64>,
}

/// Unweighted means over items, overall and per domain. Semantic
/// similarity is a mean cosine and may be negative.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub metric_names: Vec<String>,
    pub overall: MetricBlock,
    pub per_domain: BTreeMap<Domain, MetricBlock>,
    /// Dataset items absent from the run (scored 0).
    pub missing: usize,
}

fn mean_block(rows: &[&BTreeMap<String, f64>], names: &[String]) -> MetricBlock {
    let n = rows.len();
    let metrics = names
        .iter()
        .map(|name| {
            let s: f64 = rows.iter().map(|r| r.get(name).copied().unwrap_or(0.0)).sum();
            (name.clone(), if n == 0 { 0.0 } else { s / n as f64 })
        })
        .collect();
    MetricBlock { items: n, metrics }
}

pub fn evaluate(
    run: &BTreeMap<String, RankedList>,
    dataset: &Dataset,
    cfg: &EvalConfig,
    embeddings: Option<&Embeddings>,
) -> EvalReport {
    let names = cfg.metric_names(embeddings.is_some());
    let mut per_item: Vec<(Domain, BTreeMap<String, f64>)> = Vec::with_capacity(dataset.len());
    let mut missing = 0;
    for item in &dataset.items {
        let m = match run.get(&item.id) {
            Some(list) => item_metrics(&list.surfaces(), &gold_set(item), &item.distractors, cfg, embeddings),
            None => {
                missing += 1;
                names.iter().map(|n| (n.clone(), 0.0)).collect()
            }
        };
        per_item.push((item.domain, m));
    }
    let extra = run.keys().filter(|id| dataset.get(id).is_none()).count();
    if extra > 0 {
        log::warn!("{extra} run entries have no matching dataset item");
    }
    let all: Vec<&BTreeMap<String, f64>> = per_item.iter().map(|(_, m)| m).collect();
    let mut per_domain = BTreeMap::new();
    for d in Domain::ALL {
        let rows: Vec<&BTreeMap<String, f64>> = per_item.iter().filter(|(dd, _)| *dd == d).map(|(_, m)| m).collect();
        if !rows.is_empty() {
            per_domain.insert(d, mean_block(&rows, &names));
        }
    }
    EvalReport { overall: mean_block(&all, &names), per_domain, metric_names: names, missing }
}

impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:<10} {:>9}", "metric", "overall")?;
        for d in self.per_domain.keys() {
            write!(f, " {:>13}", d.as_str())?;
        }
        writeln!(f)?;
        write!(f, "{:<10} {:>9}", "items", self.overall.items)?;
        for b in self.per_domain.values() {
            write!(f, " {:>13}", b.items)?;
        }
        for name in &self.metric_names {
            writeln!(f)?;
            write!(f, "{:<10} {:>9.4}", name, self.overall.metrics.get(name).copied().unwrap_or(0.0))?;
            for b in self.per_domain.values() {
                write!(f, " {:>13.4}", b.metrics.get(name).copied().unwrap_or(0.0))?;
            }
        }
        if self.missing > 0 {
            write!(f, "\n{} items missing from the run were scored 0", self.missing)?;
        }
        Ok(())
    }
}

/// One line of a run file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub item_id: String,
    pub ranked: Vec<crate::ranker::RankedEntry>,
}

#[derive(Debug, Error)]
pub enum RunFileError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}

pub fn write_run(run: &BTreeMap<String, RankedList>, mut out: impl Write) -> std::io::Result<()> {
    for (id, list) in run {
        let rec = RunRecord { item_id: id.clone(), ranked: list.entries.clone() };
        serde_json::to_writer(&mut out, &rec)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_run(reader: impl BufRead) -> Result<BTreeMap<String, RankedList>, RunFileError> {
    let mut run = BTreeMap::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: RunRecord = serde_json::from_str(&line).map_err(|e| RunFileError::Parse { line: i + 1, message: e.to_string() })?;
        if run.insert(rec.item_id.clone(), RankedList { entries: rec.ranked, fallback: None }).is_some() {
            return Err(RunFileError::Parse { line: i + 1, message: format!("duplicate item id {:?}", rec.item_id) });
        }
    }
    Ok(run)
}
