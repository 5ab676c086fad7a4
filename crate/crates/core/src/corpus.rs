//! Cloze MCQ datasets: line-delimited JSON records, validation, seeded
//! splitting and summary statistics.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::tagger::PosTagger;
use crate::text::{self, BLANK};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Domain {
    Science,
    Vocabulary,
    CommonSense,
    Trivia,
    Other,
}

impl Domain {
    pub const ALL: [Domain; 5] = [
        Domain::Science,
        Domain::Vocabulary,
        Domain::CommonSense,
        Domain::Trivia,
        Domain::Other,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Domain::Science => "science",
            Domain::Vocabulary => "vocabulary",
            Domain::CommonSense => "common_sense",
            Domain::Trivia => "trivia",
            Domain::Other => "other",
        }
    }
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One cloze-style multiple-choice question.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClozeItem {
    pub id: String,
    pub domain: Domain,
    pub stem: String,
    pub key: String,
    /// Gold distractor set, original casing preserved.
    pub distractors: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ItemError {
    #[error("id must not be empty")]
    EmptyId,
    #[error("stem must contain exactly one blank marker `{BLANK}`, found {0}")]
    BlankCount(usize),
    #[error("key must be a single token, got {0:?}")]
    KeyNotSingleToken(String),
    #[error("distractor list is empty")]
    NoDistractors,
    #[error("distractor {0:?} is empty")]
    EmptyDistractor(String),
    #[error("key {0:?} appears among the distractors")]
    KeyIsDistractor(String),
    #[error("duplicate distractor {0:?} (case-insensitive)")]
    DuplicateDistractor(String),
}

impl ClozeItem {
    pub fn validate(&self) -> Result<(), ItemError> {
        if self.id.trim().is_empty() {
            return Err(ItemError::EmptyId);
        }
        let blanks = text::blank_count(&self.stem);
        if blanks != 1 {
            return Err(ItemError::BlankCount(blanks));
        }
        if text::word_tokens(&self.key).len() != 1 {
            return Err(ItemError::KeyNotSingleToken(self.key.clone()));
        }
        if self.distractors.is_empty() {
            return Err(ItemError::NoDistractors);
        }
        let key = text::casefold(self.key.trim());
        let mut seen = HashSet::new();
        for d in &self.distractors {
            let folded = text::casefold(d.trim());
            if folded.is_empty() {
                return Err(ItemError::EmptyDistractor(d.clone()));
            }
            if folded == key {
                return Err(ItemError::KeyIsDistractor(d.clone()));
            }
            if !seen.insert(folded) {
                return Err(ItemError::DuplicateDistractor(d.clone()));
            }
        }
        Ok(())
    }

    /// The stem with the key filled in.
    pub fn completed(&self) -> String {
        text::complete(&self.stem, &self.key)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitTag {
    Train,
    Valid,
    Test,
    All,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub items: Vec<ClozeItem>,
    pub split: SplitTag,
}

impl Dataset {
    pub fn new(items: Vec<ClozeItem>, split: SplitTag) -> Self {
        Self { items, split }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&ClozeItem> {
        self.items.iter().find(|it| it.id == id)
    }
}

/// A rejected input line.
#[derive(Debug, Clone, PartialEq)]
pub struct RecordError {
    pub line: usize,
    pub message: String,
}

impl fmt::Display for RecordError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: {}", self.line, self.message)
    }
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("no valid items ({} rejected records{})", .rejected.len(), .rejected.first().map(|e| format!(", first: {e}")).unwrap_or_default())]
    NoValidItems { rejected: Vec<RecordError> },
    #[error("dataset has {0} items, at least 3 are needed to split")]
    TooSmallToSplit(usize),
    #[error("split ratios must be positive and sum to 1, got {0:?}")]
    BadRatios((f64, f64, f64)),
    #[error("dataset is empty")]
    Empty,
    #[error("serialization failed: {0}")]
    Json(#[from] serde_json::Error),
}

/// Result of reading a dataset file: the valid items plus every rejected line.
#[derive(Debug, Clone)]
pub struct Loaded {
    pub dataset: Dataset,
    pub rejected: Vec<RecordError>,
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<Loaded, CorpusError> {
    let file = std::fs::File::open(path)?;
    parse_dataset(BufReader::new(file))
}

pub fn parse_dataset(reader: impl BufRead) -> Result<Loaded, CorpusError> {
    let mut items = Vec::new();
    let mut rejected = Vec::new();
    let mut ids = HashSet::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let item: ClozeItem = match serde_json::from_str(&line) {
            Ok(item) => item,
            Err(e) => {
                rejected.push(RecordError { line: lineno, message: format!("malformed record: {e}") });
                continue;
            }
        };
        if let Err(e) = item.validate() {
            rejected.push(RecordError { line: lineno, message: format!("item {:?}: {e}", item.id) });
            continue;
        }
        if !ids.insert(item.id.clone()) {
            rejected.push(RecordError { line: lineno, message: format!("duplicate id {:?}", item.id) });
            continue;
        }
        items.push(item);
    }
    if items.is_empty() {
        return Err(CorpusError::NoValidItems { rejected });
    }
    Ok(Loaded { dataset: Dataset::new(items, SplitTag::All), rejected })
}

pub fn write_dataset(dataset: &Dataset, mut out: impl Write) -> Result<(), CorpusError> {
    for item in &dataset.items {
        serde_json::to_writer(&mut out, item)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn save_dataset(dataset: &Dataset, path: impl AsRef<Path>) -> Result<(), CorpusError> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_dataset(dataset, &mut w)?;
    w.flush()?;
    Ok(())
}

/// Floor-allocated split sizes; the remainder goes to train.
pub fn split_sizes(n: usize, ratios: (f64, f64, f64)) -> (usize, usize, usize) {
    // the epsilon absorbs representation error such as 0.29 * 100 = 28.999...
    let alloc = |r: f64| ((n as f64) * r + 1e-9).floor() as usize;
    let valid = alloc(ratios.1);
    let test = alloc(ratios.2);
    (n - valid - test, valid, test)
}

/// Seeded random partition into train/valid/test. Items keep their file
/// order within each split.
pub fn split_dataset(
    dataset: &Dataset,
    ratios: (f64, f64, f64),
    seed: u64,
) -> Result<(Dataset, Dataset, Dataset), CorpusError> {
    let (a, b, c) = ratios;
    if !(a > 0.0 && b > 0.0 && c > 0.0) || ((a + b + c) - 1.0).abs() > 1e-9 {
        return Err(CorpusError::BadRatios(ratios));
    }
    let n = dataset.len();
    if n < 3 {
        return Err(CorpusError::TooSmallToSplit(n));
    }
    let (n_train, n_valid, _) = split_sizes(n, ratios);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));

    let take = |idx: &[usize], tag| {
        let mut idx = idx.to_vec();
        idx.sort_unstable();
        Dataset::new(idx.into_iter().map(|i| dataset.items[i].clone()).collect(), tag)
    };
    Ok((
        take(&order[..n_train], SplitTag::Train),
        take(&order[n_train..n_train + n_valid], SplitTag::Valid),
        take(&order[n_train + n_valid..], SplitTag::Test),
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainStats {
    pub items: usize,
    pub mean_distractors: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsReport {
    pub total: usize,
    pub mean_distractors: f64,
    pub domains: BTreeMap<Domain, DomainStats>,
    /// Histogram of the POS tag assigned to each key.
    pub key_pos: BTreeMap<String, usize>,
}

impl fmt::Display for StatsReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<14} {:>8} {:>13}", "domain", "# MCQs", "# distractors")?;
        writeln!(f, "{:<14} {:>8} {:>13.2}", "total", self.total, self.mean_distractors)?;
        for (d, s) in &self.domains {
            writeln!(f, "{:<14} {:>8} {:>13.2}", d.as_str(), s.items, s.mean_distractors)?;
        }
        let pos: Vec<String> = self.key_pos.iter().map(|(t, c)| format!("{t}={c}")).collect();
        write!(f, "key POS: {}", pos.join(" "))
    }
}

pub fn dataset_stats(dataset: &Dataset, tagger: &dyn PosTagger) -> Result<StatsReport, CorpusError> {
    if dataset.is_empty() {
        return Err(CorpusError::Empty);
    }
    let mut per_domain: BTreeMap<Domain, (usize, usize)> = BTreeMap::new();
    let mut key_pos = BTreeMap::new();
    let mut total_distractors = 0usize;
    for item in &dataset.items {
        let e = per_domain.entry(item.domain).or_default();
        e.0 += 1;
        e.1 += item.distractors.len();
        total_distractors += item.distractors.len();
        let tag = tagger.tag_phrase(&item.key).pop().unwrap_or_else(|| "NN".to_string());
        *key_pos.entry(tag).or_insert(0) += 1;
    }
    let domains = per_domain
        .into_iter()
        .map(|(d, (items, ds))| (d, DomainStats { items, mean_distractors: ds as f64 / items as f64 }))
        .collect();
    Ok(StatsReport {
        total: dataset.len(),
        mean_distractors: total_distractors as f64 / dataset.len() as f64,
        domains,
        key_pos,
    })
}

/// Case-folded gold set of an item.
pub fn gold_set(item: &ClozeItem) -> BTreeSet<String> {
    item.distractors.iter().map(|d| text::casefold(d.trim())).collect()
}
