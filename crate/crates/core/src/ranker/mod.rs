//! Distractor selection by learning to rank over feature vectors.

mod boost;
pub mod groups;
mod lambdamart;
pub mod tree;

use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::csg::{self, CandidateSet, FallbackReason};
use crate::features::{self, FeatureOptions, FeatureResources, FeatureVector, FEATURE_COUNT, FEATURE_NAMES, SCHEMA_VERSION};
use crate::kb::Taxonomy;
use crate::text;

pub use groups::{build_training_groups, read_groups, write_groups, GroupBuild, GroupConfig, GroupRecord};
pub use tree::{Node, Tree};

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RankerKind {
    PointwiseBoost,
    LambdamartPairwise,
    LambdamartListwise,
}

impl RankerKind {
    pub const ALL: [RankerKind; 3] = [RankerKind::PointwiseBoost, RankerKind::LambdamartPairwise, RankerKind::LambdamartListwise];

    pub fn as_str(self) -> &'static str {
        match self {
            RankerKind::PointwiseBoost => "pointwise_boost",
            RankerKind::LambdamartPairwise => "lambdamart_pairwise",
            RankerKind::LambdamartListwise => "lambdamart_listwise",
        }
    }
}

impl fmt::Display for RankerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RankerKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        RankerKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| format!("unknown ranker kind `{s}` (expected pointwise_boost, lambdamart_pairwise or lambdamart_listwise)"))
    }
}

/// One training row: a candidate of an item with binary relevance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankRow {
    pub surface: String,
    pub features: FeatureVector,
    pub relevance: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankGroup {
    pub item_id: String,
    pub rows: Vec<RankRow>,
}

impl RankGroup {
    pub fn positives(&self) -> usize {
        self.rows.iter().filter(|r| r.relevance > 0).count()
    }

    pub fn negatives(&self) -> usize {
        self.rows.len() - self.positives()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub rounds: usize,
    pub learning_rate: f64,
    pub max_leaves: usize,
    pub min_rows_per_leaf: usize,
    pub seed: u64,
    /// Fraction of groups drawn (with the seed) for each boosting round.
    pub group_subsample: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { rounds: 200, learning_rate: 0.1, max_leaves: 8, min_rows_per_leaf: 5, seed: 0, group_subsample: 1.0 }
    }
}

impl TrainConfig {
    /// Defaults for `kind`: 100 stumps at full step for boosting, the
    /// LambdaMART defaults otherwise.
    pub fn for_kind(kind: RankerKind) -> Self {
        match kind {
            RankerKind::PointwiseBoost => {
                Self { rounds: 100, learning_rate: 1.0, max_leaves: 2, min_rows_per_leaf: 1, ..Self::default() }
            }
            _ => Self::default(),
        }
    }

    fn validate(&self) -> Result<(), TrainError> {
        if self.rounds == 0 {
            return Err(TrainError::ZeroRounds);
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(TrainError::BadConfig(format!("learning_rate must be positive, got {}", self.learning_rate)));
        }
        if self.max_leaves < 2 {
            return Err(TrainError::BadConfig("max_leaves must be at least 2".into()));
        }
        if !(self.group_subsample > 0.0 && self.group_subsample <= 1.0) {
            return Err(TrainError::BadConfig(format!("group_subsample must lie in (0, 1], got {}", self.group_subsample)));
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("rounds must be at least 1 (an empty ensemble is not a model)")]
    ZeroRounds,
    #[error("training data has no {0} rows")]
    MissingClass(&'static str),
    #[error("no group contains both a positive and a negative row")]
    NoMixedGroup,
    #[error("no feature separates the training rows")]
    NoInformativeSplit,
    #[error("invalid training config: {0}")]
    BadConfig(String),
}

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("model file: {0}")]
    Json(#[from] serde_json::Error),
    #[error("model uses feature schema {found}, this build extracts schema {expected}")]
    SchemaMismatch { found: u32, expected: u32 },
    #[error("invalid model: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedTree {
    pub weight: f64,
    pub tree: Tree,
}

/// Trained, immutable ensemble.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankModel {
    pub format_version: u32,
    pub kind: RankerKind,
    pub schema_version: u32,
    pub feature_names: Vec<String>,
    pub config: TrainConfig,
    pub trees: Vec<WeightedTree>,
}

impl RankModel {
    fn new(kind: RankerKind, config: TrainConfig, trees: Vec<WeightedTree>) -> Self {
        Self {
            format_version: MODEL_FORMAT_VERSION,
            kind,
            schema_version: SCHEMA_VERSION,
            feature_names: FEATURE_NAMES.iter().map(|s| s.to_string()).collect(),
            config,
            trees,
        }
    }

    pub fn score(&self, x: &FeatureVector) -> f64 {
        self.trees.iter().map(|t| t.weight * t.tree.predict(&x.0)).sum()
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.format_version != MODEL_FORMAT_VERSION {
            return Err(ModelError::Invalid(format!("unsupported model format version {}", self.format_version)));
        }
        if self.schema_version != SCHEMA_VERSION {
            return Err(ModelError::SchemaMismatch { found: self.schema_version, expected: SCHEMA_VERSION });
        }
        if self.feature_names.len() != FEATURE_COUNT || self.feature_names.iter().zip(FEATURE_NAMES).any(|(a, b)| a != b) {
            return Err(ModelError::Invalid("feature names differ from the extractor schema".into()));
        }
        if self.trees.is_empty() {
            return Err(ModelError::Invalid("empty ensemble".into()));
        }
        for (i, t) in self.trees.iter().enumerate() {
            if !t.weight.is_finite() {
                return Err(ModelError::Invalid(format!("tree {i} has a non-finite weight")));
            }
            t.tree.validate().map_err(|e| ModelError::Invalid(format!("tree {i}: {e}")))?;
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String, ModelError> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self, ModelError> {
        let m: RankModel = serde_json::from_str(s)?;
        m.validate()?;
        Ok(m)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ModelError> {
        let mut s = self.to_json()?;
        s.push('\n');
        std::fs::write(path, s)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ModelError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// Training-set NDCG@10 after each round.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct TrainingHistory {
    pub ndcg_at_10: Vec<f64>,
}

pub fn train(groups: &[RankGroup], kind: RankerKind, cfg: &TrainConfig) -> Result<RankModel, TrainError> {
    train_with_history(groups, kind, cfg).map(|(m, _)| m)
}

pub fn train_with_history(
    groups: &[RankGroup],
    kind: RankerKind,
    cfg: &TrainConfig,
) -> Result<(RankModel, TrainingHistory), TrainError> {
    cfg.validate()?;
    let rows = groups.iter().map(|g| g.rows.len()).sum::<usize>();
    let pos = groups.iter().map(RankGroup::positives).sum::<usize>();
    if pos == 0 {
        return Err(TrainError::MissingClass("positive (relevance 1)"));
    }
    if pos == rows {
        return Err(TrainError::MissingClass("negative (relevance 0)"));
    }
    let flat = Flat::new(groups);
    let (trees, history) = match kind {
        RankerKind::PointwiseBoost => boost::train(&flat, cfg)?,
        RankerKind::LambdamartPairwise => lambdamart::train(&flat, cfg, false)?,
        RankerKind::LambdamartListwise => lambdamart::train(&flat, cfg, true)?,
    };
    Ok((RankModel::new(kind, cfg.clone(), trees), history))
}

/// Rows of all groups laid out contiguously.
pub(crate) struct Flat<'a> {
    pub x: Vec<FeatureVector>,
    pub rel: Vec<u8>,
    pub surface: Vec<&'a str>,
    /// Half-open row ranges per group.
    pub spans: Vec<(usize, usize)>,
}

impl<'a> Flat<'a> {
    fn new(groups: &'a [RankGroup]) -> Self {
        let mut f = Flat { x: vec![], rel: vec![], surface: vec![], spans: vec![] };
        for g in groups {
            let s = f.x.len();
            for r in &g.rows {
                f.x.push(r.features);
                f.rel.push(u8::from(r.relevance > 0));
                f.surface.push(&r.surface);
            }
            f.spans.push((s, f.x.len()));
        }
        f
    }

    /// Row indices of a group ordered by descending score, ties by surface.
    pub fn ranked(&self, span: (usize, usize), scores: &[f64]) -> Vec<usize> {
        let mut idx: Vec<usize> = (span.0..span.1).collect();
        idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then_with(|| self.surface[a].cmp(self.surface[b])).then(a.cmp(&b)));
        idx
    }

    /// Mean NDCG@10 over groups holding at least one positive.
    pub fn mean_ndcg(&self, scores: &[f64]) -> f64 {
        let mut sum = 0.0;
        let mut n = 0usize;
        for &span in &self.spans {
            let total = self.rel[span.0..span.1].iter().filter(|r| **r > 0).count();
            if total == 0 {
                continue;
            }
            let rels: Vec<bool> = self.ranked(span, scores).iter().map(|&i| self.rel[i] > 0).collect();
            sum += crate::metrics::ndcg_from_relevance(&rels, total, 10);
            n += 1;
        }
        if n == 0 {
            0.0
        } else {
            sum / n as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedEntry {
    pub surface: String,
    pub score: f64,
}

/// Entries by descending score, ties by surface.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RankedList {
    pub entries: Vec<RankedEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fallback: Option<FallbackReason>,
}

impl RankedList {
    /// Sorts `(surface, score)` pairs and keeps the first `n`.
    pub fn from_scored(mut scored: Vec<(String, f64)>, n: usize) -> Self {
        scored.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        scored.truncate(n);
        Self { entries: scored.into_iter().map(|(surface, score)| RankedEntry { surface, score }).collect(), fallback: None }
    }

    pub fn surfaces(&self) -> Vec<&str> {
        self.entries.iter().map(|e| e.surface.as_str()).collect()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RankConfig {
    /// Top CSG candidates entering the pool.
    pub csg_top: usize,
    /// POS-matched taxonomy instances added to the pool.
    pub pos_pool: usize,
    /// Entries returned.
    pub n: usize,
    pub seed: u64,
    pub features: FeatureOptions,
}

impl Default for RankConfig {
    fn default() -> Self {
        Self { csg_top: 30, pos_pool: 30, n: 10, seed: 0, features: FeatureOptions::default() }
    }
}

/// Head POS tag of the key as produced by the tagger.
pub fn key_pos(key: &str, res: &FeatureResources) -> Option<String> {
    res.tagger.tag_phrase(key).into_iter().rev().find(|t| t.chars().next().is_some_and(char::is_alphabetic))
}

/// Candidate pool: top CSG candidates plus POS-matched taxonomy samples,
/// deduplicated case-insensitively, without the key or stem words.
pub fn build_pool(
    stem: &str,
    key: &str,
    csg: &CandidateSet,
    taxonomy: Option<&Taxonomy>,
    res: &FeatureResources,
    cfg: &RankConfig,
) -> Vec<String> {
    let mut pool: Vec<String> = csg.surfaces().take(cfg.csg_top).map(str::to_string).collect();
    if cfg.pos_pool > 0 {
        if let (Some(tax), Some(pos)) = (taxonomy, key_pos(key, res)) {
            let mut exclude: HashSet<String> = pool.iter().cloned().collect();
            exclude.insert(key.to_string());
            match tax.sample_pos_matched(&pos, cfg.pos_pool, cfg.seed, &exclude) {
                Ok(s) => pool.extend(s),
                Err(e) => log::debug!("no POS-matched pool: {e}"),
            }
        }
    }
    clean_pool(stem, key, pool)
}

fn clean_pool(stem: &str, key: &str, mut pool: Vec<String>) -> Vec<String> {
    pool.sort();
    let stem_set: HashSet<String> = text::stem_tokens(stem).iter().map(|t| t.to_lowercase()).collect();
    let folded_stem = text::casefold(&stem.replace(text::BLANK, " "));
    let folded_key = text::normalize_term(key);
    let mut seen = BTreeSet::new();
    pool.retain(|c| {
        let f = text::normalize_term(c);
        !f.is_empty() && f != folded_key && !csg::occurs_in_stem(c, &stem_set, &folded_stem) && seen.insert(f)
    });
    pool
}

/// Scores every pool member and returns the top `n`; independent of the
/// order of `pool`.
pub fn rank_pool(
    model: &RankModel,
    stem: &str,
    key: &str,
    pool: &[String],
    res: &FeatureResources,
    opts: &FeatureOptions,
    n: usize,
) -> RankedList {
    let pool = clean_pool(stem, key, pool.to_vec());
    if pool.is_empty() {
        return RankedList { entries: vec![], fallback: Some(FallbackReason::EmptyPool) };
    }
    let scored: Vec<(String, f64)> = pool
        .into_par_iter()
        .map(|c| {
            let f = features::extract_features(stem, key, &c, res, opts);
            let s = model.score(&f);
            (c, s)
        })
        .collect();
    RankedList::from_scored(scored, n)
}

pub fn rank(
    model: &RankModel,
    stem: &str,
    key: &str,
    csg: &CandidateSet,
    taxonomy: Option<&Taxonomy>,
    res: &FeatureResources,
    cfg: &RankConfig,
) -> RankedList {
    let pool = build_pool(stem, key, csg, taxonomy, res, cfg);
    let mut out = rank_pool(model, stem, key, &pool, res, &cfg.features, cfg.n);
    if out.fallback.is_none() {
        out.fallback = csg.fallback;
    }
    out
}

#[derive(Debug, Error)]
#[error("model has no splits, so feature importance is undefined")]
pub struct NoSplitsError;

/// Impurity decrease per feature, weighted by node reach probability,
/// normalized within each tree, averaged over trees, renormalized; sorted
/// descending (ties by schema order).
pub fn feature_importance(model: &RankModel) -> Result<Vec<(String, f64)>, NoSplitsError> {
    let mut acc = [0.0f64; FEATURE_COUNT];
    let mut any = false;
    for t in &model.trees {
        let g = t.tree.weighted_gains();
        let s: f64 = g.iter().sum();
        if s > 0.0 {
            any = true;
            for (a, v) in acc.iter_mut().zip(g) {
                *a += v / s;
            }
        }
    }
    if !any {
        return Err(NoSplitsError);
    }
    let n = model.trees.len() as f64;
    for a in &mut acc {
        *a /= n;
    }
    let total: f64 = acc.iter().sum();
    let mut out: Vec<(usize, f64)> = acc.iter().map(|v| v / total).enumerate().collect();
    out.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    Ok(out.into_iter().map(|(i, v)| (FEATURE_NAMES[i].to_string(), v)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(surface: &str, x0: f64, x1: f64, rel: u8) -> RankRow {
        let mut a = [0.0; FEATURE_COUNT];
        a[0] = x0;
        a[1] = x1;
        RankRow { surface: surface.into(), features: FeatureVector(a), relevance: rel }
    }

    /// Positives have higher feature 0; feature 1 is noise.
    fn separable(n_groups: usize) -> Vec<RankGroup> {
        (0..n_groups)
            .map(|g| {
                let mut rows = Vec::new();
                for i in 0..3 {
                    rows.push(row(&format!("p{g}_{i}"), 5.0 + i as f64 + g as f64 * 0.1, ((g * 7 + i * 3) % 5) as f64, 1));
                }
                for i in 0..7 {
                    rows.push(row(&format!("n{g}_{i}"), i as f64 * 0.5 - g as f64 * 0.05, ((g * 3 + i * 11) % 5) as f64, 0));
                }
                RankGroup { item_id: format!("g{g}"), rows }
            })
            .collect()
    }

    fn quick(kind: RankerKind) -> TrainConfig {
        TrainConfig { rounds: 20, min_rows_per_leaf: 2, ..TrainConfig::for_kind(kind) }
    }

    #[test]
    fn every_kind_separates_positives() {
        let train_groups = separable(12);
        let held_out = separable(15).split_off(12);
        for kind in RankerKind::ALL {
            let m = train(&train_groups, kind, &quick(kind)).unwrap();
            for g in &held_out {
                let min_pos = g.rows.iter().filter(|r| r.relevance == 1).map(|r| m.score(&r.features)).fold(f64::INFINITY, f64::min);
                let max_neg = g.rows.iter().filter(|r| r.relevance == 0).map(|r| m.score(&r.features)).fold(f64::NEG_INFINITY, f64::max);
                assert!(min_pos > max_neg, "{kind}: {min_pos} <= {max_neg}");
            }
        }
    }

    #[test]
    fn config_and_class_errors() {
        let g = separable(2);
        let zero = TrainConfig { rounds: 0, ..TrainConfig::default() };
        for kind in RankerKind::ALL {
            assert!(matches!(train(&g, kind, &zero), Err(TrainError::ZeroRounds)));
        }
        let mut only_pos = g.clone();
        for gr in &mut only_pos {
            gr.rows.retain(|r| r.relevance == 1);
        }
        let err = train(&only_pos, RankerKind::LambdamartPairwise, &TrainConfig::default()).unwrap_err();
        assert!(err.to_string().contains("negative"), "{err}");
        let mut only_neg = g;
        for gr in &mut only_neg {
            gr.rows.retain(|r| r.relevance == 0);
        }
        let err = train(&only_neg, RankerKind::PointwiseBoost, &TrainConfig::default()).unwrap_err();
        assert!(err.to_string().contains("positive"), "{err}");
    }

    #[test]
    fn deterministic_and_round_trips() {
        let g = separable(6);
        for kind in RankerKind::ALL {
            let a = train(&g, kind, &quick(kind)).unwrap();
            let b = train(&g, kind, &quick(kind)).unwrap();
            assert_eq!(a, b);
            let back = RankModel::from_json(&a.to_json().unwrap()).unwrap();
            for gr in &g {
                for r in &gr.rows {
                    assert_eq!(a.score(&r.features).to_bits(), back.score(&r.features).to_bits());
                }
            }
        }
    }

    #[test]
    fn schema_mismatch_rejected() {
        let mut m = train(&separable(3), RankerKind::LambdamartPairwise, &quick(RankerKind::LambdamartPairwise)).unwrap();
        m.schema_version += 1;
        let err = RankModel::from_json(&serde_json::to_string(&m).unwrap()).unwrap_err();
        assert!(matches!(err, ModelError::SchemaMismatch { .. }));
    }

    #[test]
    fn importance_favours_informative_feature() {
        for kind in RankerKind::ALL {
            let m = train(&separable(10), kind, &quick(kind)).unwrap();
            let imp = feature_importance(&m).unwrap();
            assert_eq!(imp.len(), FEATURE_COUNT);
            assert_eq!(imp[0].0, "emb_sim_qd", "{kind}");
            let sum: f64 = imp.iter().map(|p| p.1).sum();
            assert!((sum - 1.0).abs() < 1e-9);
            assert!(imp.iter().all(|p| p.1 >= 0.0));
            let constant = imp.iter().find(|p| p.0 == "web_search_score").unwrap();
            assert_eq!(constant.1, 0.0);
        }
    }

    #[test]
    fn listwise_ndcg_does_not_drop() {
        let (_, h) = train_with_history(&separable(8), RankerKind::LambdamartListwise, &quick(RankerKind::LambdamartListwise)).unwrap();
        assert_eq!(h.ndcg_at_10.len(), 20);
        assert!(h.ndcg_at_10.last().unwrap() >= h.ndcg_at_10.first().unwrap());
    }

    #[test]
    fn ranked_list_tie_break() {
        let l = RankedList::from_scored(vec![("b".into(), 1.0), ("a".into(), 1.0), ("c".into(), 2.0)], 10);
        assert_eq!(l.surfaces(), vec!["c", "a", "b"]);
    }

    #[test]
    fn pool_is_order_invariant_and_clean() {
        let m = train(&separable(4), RankerKind::LambdamartPairwise, &quick(RankerKind::LambdamartPairwise)).unwrap();
        let res = FeatureResources::default();
        let stem = "Cells contain ____ in the nucleus.";
        let a: Vec<String> = ["RNA", "protein", "ribosome", "nucleus", "DNA", "rna"].iter().map(|s| s.to_string()).collect();
        let mut b = a.clone();
        b.reverse();
        let la = rank_pool(&m, stem, "DNA", &a, &res, &FeatureOptions::default(), 10);
        let lb = rank_pool(&m, stem, "DNA", &b, &res, &FeatureOptions::default(), 10);
        assert_eq!(la, lb);
        let s = la.surfaces();
        assert_eq!(s.len(), 3);
        assert!(!s.contains(&"DNA") && !s.contains(&"nucleus"));
        let one = rank_pool(&m, stem, "DNA", &["protein".to_string()], &res, &FeatureOptions::default(), 10);
        assert_eq!(one.surfaces(), vec!["protein"]);
        let empty = rank_pool(&m, stem, "DNA", &[], &res, &FeatureOptions::default(), 10);
        assert!(empty.is_empty());
        assert_eq!(empty.fallback, Some(FallbackReason::EmptyPool));
    }
}
