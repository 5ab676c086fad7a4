//! Append-only feedback log and its conversion to training groups.

use std::collections::{HashMap, HashSet};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use clozegen_core::features::{extract_features, FeatureOptions, FeatureResources};
use clozegen_core::ranker::{RankGroup, RankRow};
use clozegen_core::text;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Accepted,
    Rejected,
    Edited,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RequestOptions {
    #[serde(default)]
    pub use_web_score: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_id: Option<String>,
}

/// The generation request a verdict refers to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RequestEcho {
    pub stem: String,
    pub key: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub options: Option<RequestOptions>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedbackInput {
    pub request: RequestEcho,
    pub candidate: String,
    pub verdict: Verdict,
    #[serde(default)]
    pub replacement: Option<String>,
    pub session_id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedbackRecord {
    pub id: u64,
    pub request: RequestEcho,
    pub candidate: String,
    pub verdict: Verdict,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub replacement: Option<String>,
    pub timestamp: String,
    pub session_id: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FieldError {
    pub field: &'static str,
    pub message: String,
}

impl FeedbackInput {
    pub fn validate(&self) -> Result<(), FieldError> {
        let err = |field, message: &str| Err(FieldError { field, message: message.to_string() });
        let blanks = text::blank_count(&self.request.stem);
        if blanks != 1 {
            return Err(FieldError { field: "request.stem", message: format!("must contain exactly one blank `____`, found {blanks}") });
        }
        if self.request.key.trim().is_empty() {
            return err("request.key", "must not be empty");
        }
        if self.candidate.trim().is_empty() {
            return err("candidate", "must not be empty");
        }
        if self.session_id.trim().is_empty() {
            return err("session_id", "must not be empty");
        }
        match (self.verdict, self.replacement.as_deref().map(str::trim)) {
            (Verdict::Edited, None | Some("")) => err("replacement", "required when verdict is edited"),
            (Verdict::Accepted | Verdict::Rejected, Some(r)) if !r.is_empty() => {
                err("replacement", "only allowed when verdict is edited")
            }
            _ => Ok(()),
        }
    }
}

/// Stable id of a (stem, key) pair.
pub fn item_id(stem: &str, key: &str) -> String {
    let mut h = Sha256::new();
    h.update(stem.trim().as_bytes());
    h.update([0x1f]);
    h.update(text::normalize_term(key).as_bytes());
    let digest = h.finalize();
    let hex: String = digest.iter().take(8).map(|b| format!("{b:02x}")).collect();
    format!("fb-{hex}")
}

impl FeedbackRecord {
    pub fn item_id(&self) -> String {
        item_id(&self.request.stem, &self.request.key)
    }

    /// Labelled surfaces implied by the verdict.
    pub fn rows(&self) -> Vec<(String, u8)> {
        match self.verdict {
            Verdict::Accepted => vec![(self.candidate.trim().to_string(), 1)],
            Verdict::Rejected => vec![(self.candidate.trim().to_string(), 0)],
            Verdict::Edited => vec![
                (self.candidate.trim().to_string(), 0),
                (self.replacement.as_deref().unwrap_or_default().trim().to_string(), 1),
            ],
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Deserialize)]
pub struct ExportFilter {
    pub session_id: Option<String>,
    pub item_id: Option<String>,
}

/// Per (item, surface) the latest verdict wins; groups and rows keep the
/// order in which they first appear. Groups without both a positive and a
/// negative are kept; the trainer handles them.
pub fn export_groups(records: &[FeedbackRecord], filter: &ExportFilter, res: &FeatureResources) -> Vec<RankGroup> {
    struct Row {
        surface: String,
        relevance: u8,
    }
    let mut groups: Vec<(String, String, String, Vec<Row>)> = Vec::new();
    let mut group_index: HashMap<String, usize> = HashMap::new();
    let mut row_index: HashMap<(usize, String), usize> = HashMap::new();
    let mut sorted: Vec<&FeedbackRecord> = records.iter().collect();
    sorted.sort_by_key(|r| r.id);
    for r in sorted {
        if filter.session_id.as_ref().is_some_and(|s| *s != r.session_id) {
            continue;
        }
        let id = r.item_id();
        if filter.item_id.as_ref().is_some_and(|i| *i != id) {
            continue;
        }
        let key_folded = text::normalize_term(&r.request.key);
        let g = *group_index.entry(id.clone()).or_insert_with(|| {
            groups.push((id, r.request.stem.clone(), r.request.key.trim().to_string(), Vec::new()));
            groups.len() - 1
        });
        for (surface, relevance) in r.rows() {
            let folded = text::normalize_term(&surface);
            if folded.is_empty() || folded == key_folded {
                continue;
            }
            match row_index.get(&(g, folded.clone())) {
                Some(&i) => groups[g].3[i] = Row { surface, relevance },
                None => {
                    row_index.insert((g, folded), groups[g].3.len());
                    groups[g].3.push(Row { surface, relevance });
                }
            }
        }
    }
    let opts = FeatureOptions::default();
    groups
        .into_iter()
        .filter(|g| !g.3.is_empty())
        .map(|(item_id, stem, key, rows)| RankGroup {
            item_id,
            rows: rows
                .into_iter()
                .map(|r| RankRow {
                    features: extract_features(&stem, &key, &r.surface, res, &opts),
                    surface: r.surface,
                    relevance: r.relevance,
                })
                .collect(),
        })
        .collect()
}

/// Drops records none of whose rows is the latest for its
/// (session, item, surface); export results are unchanged by this.
pub fn compact_records(records: &[FeedbackRecord]) -> Vec<FeedbackRecord> {
    let mut latest: HashMap<(String, String, String), u64> = HashMap::new();
    for r in records {
        for (surface, _) in r.rows() {
            let k = (r.session_id.clone(), r.item_id(), text::normalize_term(&surface));
            let e = latest.entry(k).or_insert(r.id);
            *e = (*e).max(r.id);
        }
    }
    let keep: HashSet<u64> = latest.into_values().collect();
    let mut out: Vec<FeedbackRecord> = records.iter().filter(|r| keep.contains(&r.id)).cloned().collect();
    out.sort_by_key(|r| r.id);
    out
}

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("feedback log {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("feedback log {path} line {line}: {message}")]
    Corrupt { path: PathBuf, line: usize, message: String },
}

/// Single-file append-only store; callers serialize access.
#[derive(Debug)]
pub struct FeedbackStore {
    path: PathBuf,
    records: Vec<FeedbackRecord>,
    next_id: u64,
    compact_every: usize,
    since_compaction: usize,
}

impl FeedbackStore {
    pub fn open(path: impl AsRef<Path>, compact_every: usize) -> Result<Self, StoreError> {
        let path = path.as_ref().to_path_buf();
        let io = |source| StoreError::Io { path: path.clone(), source };
        let mut records = Vec::new();
        if path.exists() {
            let reader = BufReader::new(File::open(&path).map_err(io)?);
            for (i, line) in reader.lines().enumerate() {
                let line = line.map_err(io)?;
                if line.trim().is_empty() {
                    continue;
                }
                let rec: FeedbackRecord = serde_json::from_str(&line)
                    .map_err(|e| StoreError::Corrupt { path: path.clone(), line: i + 1, message: e.to_string() })?;
                records.push(rec);
            }
        } else if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(io)?;
        }
        let next_id = records.iter().map(|r| r.id).max().map_or(1, |m| m + 1);
        Ok(Self { path, records, next_id, compact_every, since_compaction: 0 })
    }

    pub fn records(&self) -> &[FeedbackRecord] {
        &self.records
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn append(&mut self, input: FeedbackInput, timestamp: String) -> Result<u64, StoreError> {
        let rec = FeedbackRecord {
            id: self.next_id,
            request: input.request,
            candidate: input.candidate.trim().to_string(),
            verdict: input.verdict,
            replacement: input.replacement.map(|r| r.trim().to_string()).filter(|r| !r.is_empty()),
            timestamp,
            session_id: input.session_id,
        };
        let io = |source| StoreError::Io { path: self.path.clone(), source };
        let mut f = OpenOptions::new().create(true).append(true).open(&self.path).map_err(io)?;
        let mut line = serde_json::to_string(&rec).expect("record serializes");
        line.push('\n');
        f.write_all(line.as_bytes()).map_err(io)?;
        f.flush().map_err(io)?;
        self.next_id += 1;
        self.records.push(rec);
        self.since_compaction += 1;
        if self.compact_every > 0 && self.since_compaction >= self.compact_every {
            self.compact()?;
        }
        Ok(self.next_id - 1)
    }

    /// Rewrites the log without superseded records.
    pub fn compact(&mut self) -> Result<usize, StoreError> {
        let io = |source| StoreError::Io { path: self.path.clone(), source };
        let kept = compact_records(&self.records);
        let dropped = self.records.len() - kept.len();
        let tmp = self.path.with_extension("compact.tmp");
        {
            let mut f = std::io::BufWriter::new(File::create(&tmp).map_err(io)?);
            for r in &kept {
                serde_json::to_writer(&mut f, r).expect("record serializes");
                f.write_all(b"\n").map_err(io)?;
            }
            f.flush().map_err(io)?;
        }
        std::fs::rename(&tmp, &self.path).map_err(io)?;
        self.records = kept;
        self.since_compaction = 0;
        Ok(dropped)
    }
}
