//! Training-group construction and the line-delimited group file.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::io::{BufRead, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{key_pos, RankGroup, RankRow};
use crate::corpus::{gold_set, ClozeItem, Dataset};
use crate::csg::CandidateSet;
use crate::features::{extract_features, FeatureOptions, FeatureResources, FeatureVector};
use crate::kb::Taxonomy;
use crate::text;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GroupConfig {
    /// Top CSG candidates used as negatives (gold removed).
    pub pool_size: usize,
    /// POS-matched negatives drawn when CSG yields nothing.
    pub fallback_pool: usize,
    pub seed: u64,
    pub features: FeatureOptions,
}

impl Default for GroupConfig {
    fn default() -> Self {
        Self { pool_size: 100, fallback_pool: 30, seed: 0, features: FeatureOptions::default() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupBuild {
    pub groups: Vec<RankGroup>,
    /// Ids of items with neither CSG output nor a fallback pool.
    pub skipped: Vec<String>,
}

#[derive(Debug, Error)]
pub enum GroupError {
    #[error("every item was skipped ({0} items had no candidates)")]
    AllSkipped(usize),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}

fn negatives_for(
    item: &ClozeItem,
    index: usize,
    csg: &CandidateSet,
    taxonomy: Option<&Taxonomy>,
    res: &FeatureResources,
    cfg: &GroupConfig,
) -> Vec<String> {
    let gold = gold_set(item);
    let key = text::normalize_term(&item.key);
    let keep = |c: &String| {
        let f = text::normalize_term(c);
        !gold.contains(&f) && f != key
    };
    let from_csg: Vec<String> = csg.surfaces().take(cfg.pool_size).map(str::to_string).filter(keep).collect();
    if !csg.is_empty() {
        return from_csg;
    }
    let (Some(tax), Some(pos)) = (taxonomy, key_pos(&item.key, res)) else {
        return vec![];
    };
    let mut exclude: HashSet<String> = gold.iter().cloned().collect();
    exclude.insert(key);
    let seed = cfg.seed.wrapping_add(index as u64);
    let mut s = tax.sample_pos_matched(&pos, cfg.fallback_pool, seed, &exclude).unwrap_or_default();
    s.sort();
    s
}

/// One group per item: gold distractors as positives, the top `pool_size`
/// CSG candidates minus gold as negatives. Items without any negative are
/// skipped and reported.
pub fn build_training_groups(
    dataset: &Dataset,
    candidates: &(dyn Fn(&ClozeItem) -> CandidateSet + Sync),
    taxonomy: Option<&Taxonomy>,
    res: &FeatureResources,
    cfg: &GroupConfig,
) -> Result<GroupBuild, GroupError> {
    let built: Vec<Result<RankGroup, String>> = dataset
        .items
        .par_iter()
        .enumerate()
        .map(|(idx, item)| {
            let csg = candidates(item);
            let negatives = negatives_for(item, idx, &csg, taxonomy, res, cfg);
            if negatives.is_empty() {
                return Err(item.id.clone());
            }
            let featurize = |d: &str, rel: u8| RankRow {
                surface: d.to_string(),
                features: extract_features(&item.stem, &item.key, d, res, &cfg.features),
                relevance: rel,
            };
            let mut rows: Vec<RankRow> = item.distractors.iter().map(|d| featurize(d, 1)).collect();
            rows.extend(negatives.iter().map(|d| featurize(d, 0)));
            Ok(RankGroup { item_id: item.id.clone(), rows })
        })
        .collect();
    let mut groups = Vec::new();
    let mut skipped = Vec::new();
    for b in built {
        match b {
            Ok(g) => groups.push(g),
            Err(id) => skipped.push(id),
        }
    }
    if !skipped.is_empty() {
        log::warn!("skipped {} items without candidates", skipped.len());
    }
    if groups.is_empty() {
        return Err(GroupError::AllSkipped(skipped.len()));
    }
    Ok(GroupBuild { groups, skipped })
}

/// One line of the group file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupRecord {
    pub item_id: String,
    pub surface: String,
    pub relevance: u8,
    pub features: FeatureVector,
}

pub fn write_groups(groups: &[RankGroup], mut out: impl Write) -> std::io::Result<()> {
    for g in groups {
        for r in &g.rows {
            let rec = GroupRecord { item_id: g.item_id.clone(), surface: r.surface.clone(), relevance: r.relevance, features: r.features };
            serde_json::to_writer(&mut out, &rec)?;
            out.write_all(b"\n")?;
        }
    }
    Ok(())
}

/// Reads records back into groups, in order of first appearance.
pub fn read_groups(reader: impl BufRead) -> Result<Vec<RankGroup>, GroupError> {
    let mut groups: Vec<RankGroup> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: GroupRecord =
            serde_json::from_str(&line).map_err(|e| GroupError::Parse { line: i + 1, message: e.to_string() })?;
        if rec.relevance > 1 {
            return Err(GroupError::Parse { line: i + 1, message: format!("relevance must be 0 or 1, got {}", rec.relevance) });
        }
        if rec.features.0.iter().any(|v| !v.is_finite()) {
            return Err(GroupError::Parse { line: i + 1, message: "non-finite feature value".into() });
        }
        let g = *index.entry(rec.item_id.clone()).or_insert_with(|| {
            groups.push(RankGroup { item_id: rec.item_id.clone(), rows: vec![] });
            groups.len() - 1
        });
        groups[g].rows.push(RankRow { surface: rec.surface, features: rec.features, relevance: rec.relevance });
    }
    Ok(groups)
}

/// Surfaces of a group's negatives, for inspection.
pub fn negative_surfaces(group: &RankGroup) -> BTreeSet<String> {
    group.rows.iter().filter(|r| r.relevance == 0).map(|r| r.surface.clone()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Domain, SplitTag};
    use crate::csg::Candidate;

    fn item(id: &str, gold: &[&str]) -> ClozeItem {
        ClozeItem {
            id: id.into(),
            domain: Domain::Science,
            stem: "Cells contain ____.".into(),
            key: "DNA".into(),
            distractors: gold.iter().map(|s| s.to_string()).collect(),
        }
    }

    fn set(names: &[&str]) -> CandidateSet {
        CandidateSet {
            candidates: names.iter().map(|s| Candidate { surface: s.to_string(), probability: 0.1 }).collect(),
            fallback: None,
        }
    }

    #[test]
    fn set_subtraction() {
        let ds = Dataset::new(vec![item("a", &["RNA", "protein", "lipid"])], SplitTag::All);
        let pool: Vec<String> = (0..9).map(|i| format!("c{i}")).chain(["rna".to_string()]).collect();
        let refs: Vec<&str> = pool.iter().map(String::as_str).collect();
        let csg = set(&refs);
        let b = build_training_groups(&ds, &|_| csg.clone(), None, &FeatureResources::default(), &GroupConfig::default()).unwrap();
        assert_eq!(b.groups[0].positives(), 3);
        assert_eq!(b.groups[0].negatives(), 9);
        assert!(b.skipped.is_empty());
    }

    #[test]
    fn empty_output_skips() {
        let ds = Dataset::new(vec![item("a", &["RNA"]), item("b", &["RNA"])], SplitTag::All);
        let f = |it: &ClozeItem| if it.id == "a" { CandidateSet::default() } else { set(&["protein"]) };
        let b = build_training_groups(&ds, &f, None, &FeatureResources::default(), &GroupConfig::default()).unwrap();
        assert_eq!(b.skipped, vec!["a".to_string()]);
        assert_eq!(b.groups.len(), 1);
        let err = build_training_groups(&ds, &|_| CandidateSet::default(), None, &FeatureResources::default(), &GroupConfig::default());
        assert!(matches!(err, Err(GroupError::AllSkipped(2))));
    }

    #[test]
    fn pos_fallback_pool() {
        let mut tax = Taxonomy::builder().edge("molecule", "rna", 3).edge("organ", "heart", 2).edge("molecule", "dna", 4).build().unwrap();
        tax.fill_pos_index(|_| Some("NN".into()));
        let ds = Dataset::new(vec![item("a", &["RNA"])], SplitTag::All);
        let b = build_training_groups(&ds, &|_| CandidateSet::default(), Some(&tax), &FeatureResources::default(), &GroupConfig::default()).unwrap();
        assert_eq!(negative_surfaces(&b.groups[0]), BTreeSet::from(["heart".to_string()]));
    }

    #[test]
    fn file_round_trip() {
        let ds = Dataset::new(vec![item("a", &["RNA"]), item("b", &["protein"])], SplitTag::All);
        let b = build_training_groups(&ds, &|_| set(&["lipid", "sugar"]), None, &FeatureResources::default(), &GroupConfig::default()).unwrap();
        let mut buf = Vec::new();
        write_groups(&b.groups, &mut buf).unwrap();
        assert_eq!(String::from_utf8_lossy(&buf).lines().count(), 6);
        let back = read_groups(buf.as_slice()).unwrap();
        assert_eq!(back, b.groups);
        let bad = read_groups(r#"{"item_id":"x","surface":"s","relevance":2,"features":[]}"#.as_bytes());
        assert!(bad.is_err());
    }
}
