//! Unsupervised baseline rankers over a candidate pool.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::ngram::{NgramLm, BOS, EOS};
use crate::features::strings::{dice_bigrams, edit_distance};
use crate::features::Embeddings;
use crate::kb::Taxonomy;
use crate::ranker::RankedList;
use crate::text;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineKind {
    Ed,
    Embsim,
    EmbsimCf,
    Revup,
    ThesaurusPath,
}

impl BaselineKind {
    pub const ALL: [BaselineKind; 5] =
        [BaselineKind::Ed, BaselineKind::Embsim, BaselineKind::EmbsimCf, BaselineKind::Revup, BaselineKind::ThesaurusPath];

    pub fn as_str(self) -> &'static str {
        match self {
            BaselineKind::Ed => "ed",
            BaselineKind::Embsim => "embsim",
            BaselineKind::EmbsimCf => "embsim_cf",
            BaselineKind::Revup => "revup",
            BaselineKind::ThesaurusPath => "thesaurus_path",
        }
    }
}

impl fmt::Display for BaselineKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BaselineKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        BaselineKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| format!("unknown baseline `{s}` (expected ed, embsim, embsim_cf, revup or thesaurus_path)"))
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum BaselineError {
    #[error("baseline {kind} needs {resource}")]
    MissingResource { kind: BaselineKind, resource: &'static str },
    #[error("revup weights must be nonnegative and sum to 1, got {0:?}")]
    BadWeights([f64; 3]),
}

#[derive(Debug, Clone, Copy)]
pub struct BaselineResources<'a> {
    pub embeddings: Option<&'a Embeddings>,
    pub lm: Option<&'a NgramLm>,
    pub taxonomy: Option<&'a Taxonomy>,
    /// A candidate is filtered when its centre n-gram occurs at least this often.
    pub cf_threshold: u64,
    /// Weights of cosine, dice and normalized LM probability.
    pub revup_weights: [f64; 3],
}

impl Default for BaselineResources<'_> {
    fn default() -> Self {
        Self { embeddings: None, lm: None, taxonomy: None, cf_threshold: 1, revup_weights: [1.0 / 3.0; 3] }
    }
}

/// Lowercased tokens around the blank, with sentence-boundary symbols.
fn blank_neighbours(stem: &str) -> (String, String) {
    let (left, right) = stem.split_once(text::BLANK).unwrap_or((stem, ""));
    let l = text::content_tokens(left).pop().map(|t| t.to_lowercase()).unwrap_or_else(|| BOS.into());
    let r = text::content_tokens(right).into_iter().next().map(|t| t.to_lowercase()).unwrap_or_else(|| EOS.into());
    (l, r)
}

/// Count of `left d right` in the language model's training corpus.
pub fn centre_ngram_count(lm: &NgramLm, stem: &str, candidate: &str) -> u64 {
    let (l, r) = blank_neighbours(stem);
    let mut gram = vec![l];
    gram.extend(text::content_tokens(candidate).into_iter().map(|t| t.to_lowercase()));
    gram.push(r);
    let refs: Vec<&str> = gram.iter().map(String::as_str).collect();
    lm.ngram_count(&refs)
}

fn need<'a, T>(r: Option<&'a T>, kind: BaselineKind, resource: &'static str) -> Result<&'a T, BaselineError> {
    r.ok_or(BaselineError::MissingResource { kind, resource })
}

pub fn baseline_rank(
    kind: BaselineKind,
    stem: &str,
    key: &str,
    pool: &[String],
    res: &BaselineResources<'_>,
) -> Result<RankedList, BaselineError> {
    let scored: Vec<(String, f64)> = match kind {
        BaselineKind::Ed => pool.iter().map(|d| (d.clone(), -(edit_distance(key, d) as f64))).collect(),
        BaselineKind::Embsim => {
            let e = need(res.embeddings, kind, "word embeddings")?;
            pool.iter().map(|d| (d.clone(), e.similarity(key, d))).collect()
        }
        BaselineKind::EmbsimCf => {
            let e = need(res.embeddings, kind, "word embeddings")?;
            let lm = need(res.lm, kind, "an n-gram language model")?;
            pool.iter()
                .filter(|d| centre_ngram_count(lm, stem, d) < res.cf_threshold)
                .map(|d| (d.clone(), e.similarity(key, d)))
                .collect()
        }
        BaselineKind::Revup => {
            let w = res.revup_weights;
            if w.iter().any(|x| !x.is_finite() || *x < 0.0) || (w.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
                return Err(BaselineError::BadWeights(w));
            }
            let e = if w[0] > 0.0 { Some(need(res.embeddings, kind, "word embeddings")?) } else { None };
            let lm = if w[2] > 0.0 { Some(need(res.lm, kind, "an n-gram language model")?) } else { None };
            pool.iter()
                .map(|d| {
                    let cos = e.map_or(0.0, |e| e.similarity(key, d));
                    let lmp = lm.map_or(0.0, |lm| lm.normalized_prob(&text::complete(stem, d)));
                    (d.clone(), w[0] * cos + w[1] * dice_bigrams(key, d) + w[2] * lmp)
                })
                .collect()
        }
        BaselineKind::ThesaurusPath => {
            let t = need(res.taxonomy, kind, "a taxonomy")?;
            pool.iter().map(|d| (d.clone(), t.hops(key, d).map_or(0.0, |h| 1.0 / (1.0 + h as f64)))).collect()
        }
    };
    let n = scored.len();
    Ok(RankedList::from_scored(scored, n))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::ngram::train_ngram_lm;

    fn pool(s: &[&str]) -> Vec<String> {
        s.iter().map(|x| x.to_string()).collect()
    }

    fn emb() -> Embeddings {
        let mut e = Embeddings::new(2);
        e.insert("dna", vec![1.0, 0.0]);
        e.insert("rna", vec![0.9, 0.1]);
        e.insert("ribosome", vec![0.2, 0.9]);
        e.insert("protein", vec![0.6, 0.5]);
        e
    }

    #[test]
    fn edit_distance_order() {
        let r = baseline_rank(BaselineKind::Ed, "Cells contain ____.", "DNA", &pool(&["ribosome", "RNA"]), &BaselineResources::default()).unwrap();
        assert_eq!(r.surfaces(), vec!["RNA", "ribosome"]);
    }

    #[test]
    fn missing_resources_named() {
        let p = pool(&["RNA"]);
        let d = BaselineResources::default();
        let err = baseline_rank(BaselineKind::Embsim, "x ____", "DNA", &p, &d).unwrap_err();
        assert!(err.to_string().contains("embeddings"));
        let err = baseline_rank(BaselineKind::ThesaurusPath, "x ____", "DNA", &p, &d).unwrap_err();
        assert!(err.to_string().contains("taxonomy"));
        let e = emb();
        let err = baseline_rank(BaselineKind::EmbsimCf, "x ____", "DNA", &p, &BaselineResources { embeddings: Some(&e), ..d }).unwrap_err();
        assert!(err.to_string().contains("language model"));
    }

    #[test]
    fn revup_degenerates_to_embsim() {
        let e = emb();
        let p = pool(&["ribosome", "protein", "RNA"]);
        let res = BaselineResources { embeddings: Some(&e), revup_weights: [1.0, 0.0, 0.0], ..Default::default() };
        let a = baseline_rank(BaselineKind::Revup, "Cells contain ____.", "DNA", &p, &res).unwrap();
        let b = baseline_rank(BaselineKind::Embsim, "Cells contain ____.", "DNA", &p, &res).unwrap();
        assert_eq!(a.surfaces(), b.surfaces());
        let bad = BaselineResources { revup_weights: [0.5, 0.0, 0.0], ..res };
        assert!(matches!(baseline_rank(BaselineKind::Revup, "x ____", "DNA", &p, &bad), Err(BaselineError::BadWeights(_))));
    }

    #[test]
    fn trigram_filter_removes_seen_context() {
        let e = emb();
        let lm = train_ngram_lm(&["cells contain rna daily".to_string(), "cells make protein".to_string()], 3).unwrap();
        let res = BaselineResources { embeddings: Some(&e), lm: Some(&lm), ..Default::default() };
        let r = baseline_rank(BaselineKind::EmbsimCf, "Cells contain ____ daily.", "DNA", &pool(&["RNA", "protein"]), &res).unwrap();
        assert_eq!(r.surfaces(), vec!["protein"]);
        let lm_all = train_ngram_lm(&["cells contain rna daily".to_string(), "a b c".to_string()], 3).unwrap();
        assert_eq!(centre_ngram_count(&lm_all, "Cells contain ____ daily.", "RNA"), 1);
        assert_eq!(centre_ngram_count(&lm_all, "____ b c", "a"), 1);
    }

    #[test]
    fn path_similarity() {
        let t = Taxonomy::builder()
            .edge("nucleic acid", "dna", 5)
            .edge("nucleic acid", "rna", 5)
            .edge("molecule", "nucleic acid", 2)
            .edge("molecule", "protein", 3)
            .build()
            .unwrap();
        let res = BaselineResources { taxonomy: Some(&t), ..Default::default() };
        let r = baseline_rank(BaselineKind::ThesaurusPath, "x ____", "DNA", &pool(&["protein", "RNA", "zebra"]), &res).unwrap();
        assert_eq!(r.surfaces(), vec!["RNA", "protein", "zebra"]);
        assert_eq!(r.entries[0].score, 1.0 / 3.0);
        assert_eq!(r.entries[2].score, 0.0);
    }
}
