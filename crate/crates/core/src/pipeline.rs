//! End-to-end generation: candidate set generation followed by ranking.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::csg::{generate_candidates, CandidateSet, CsgConfig};
use crate::features::{FeatureOptions, FeatureResources};
use crate::kb::Taxonomy;
use crate::ranker::{rank, RankConfig, RankModel, RankedList};
use crate::text;
use crate::topics::TopicModel;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RequestError {
    #[error("stem must contain exactly one blank `____`, found {0}")]
    BlankCount(usize),
    #[error("key must not be empty")]
    EmptyKey,
    #[error("n must be at least 1")]
    ZeroN,
}

/// Loaded, read-only resources shared by every request.
#[derive(Clone)]
pub struct Pipeline {
    pub taxonomy: Arc<Taxonomy>,
    pub topics: Arc<TopicModel>,
    pub resources: FeatureResources,
    pub csg: CsgConfig,
    pub rank: RankConfig,
}

impl std::fmt::Debug for Pipeline {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Pipeline")
            .field("concepts", &self.taxonomy.concept_count())
            .field("topics", &self.topics.k())
            .field("resources", &self.resources)
            .field("csg", &self.csg)
            .field("rank", &self.rank)
            .finish()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerateOptions {
    #[serde(default)]
    pub use_web_score: bool,
}

pub fn validate_request(stem: &str, key: &str) -> Result<(), RequestError> {
    let blanks = text::blank_count(stem);
    if blanks != 1 {
        return Err(RequestError::BlankCount(blanks));
    }
    if key.trim().is_empty() {
        return Err(RequestError::EmptyKey);
    }
    Ok(())
}

impl Pipeline {
    pub fn new(taxonomy: Taxonomy, topics: TopicModel, resources: FeatureResources) -> Self {
        Self {
            taxonomy: Arc::new(taxonomy),
            topics: Arc::new(topics),
            resources,
            csg: CsgConfig::default(),
            rank: RankConfig::default(),
        }
    }

    pub fn candidates(&self, stem: &str, key: &str) -> Result<CandidateSet, RequestError> {
        validate_request(stem, key)?;
        Ok(generate_candidates(stem, key.trim(), &self.taxonomy, &self.topics, &self.csg))
    }

    /// Top `n` ranked distractors. Unknown keys are served from the
    /// POS-matched pool and flagged.
    pub fn generate(
        &self,
        model: &RankModel,
        stem: &str,
        key: &str,
        n: usize,
        opts: GenerateOptions,
    ) -> Result<RankedList, RequestError> {
        if n == 0 {
            return Err(RequestError::ZeroN);
        }
        let csg = self.candidates(stem, key)?;
        let cfg = RankConfig { n, features: FeatureOptions { use_web_score: opts.use_web_score }, ..self.rank.clone() };
        Ok(rank(model, stem, key.trim(), &csg, Some(&self.taxonomy), &self.resources, &cfg))
    }
}
