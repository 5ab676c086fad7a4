//! Distractor generation for cloze-style multiple-choice questions.
//!
//! Candidates are generated from an is-A taxonomy conditioned on the stem's
//! topics, described by a fixed 33-slot feature vector, and re-ranked with a
//! learned model.

pub mod corpus;
pub mod csg;
pub mod features;
pub mod kb;
pub mod metrics;
pub mod pipeline;
pub mod ranker;
pub mod synthetic;
pub mod text;
pub mod topics;

pub use corpus::{ClozeItem, Dataset, Domain};
pub use csg::{Candidate, CandidateSet, CsgConfig};
pub use features::{FeatureResources, FeatureVector, FEATURE_COUNT, FEATURE_NAMES};
pub use kb::Taxonomy;
pub use metrics::EvalReport;
pub use pipeline::{GenerateOptions, Pipeline};
pub use ranker::{RankGroup, RankModel, RankedList, RankerKind};
pub use topics::{TopicDistribution, TopicModel};
