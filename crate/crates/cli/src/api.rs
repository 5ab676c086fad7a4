//! Request and response bodies shared by the HTTP service and the CLI.

use clozegen_core::csg::FallbackReason;
use clozegen_core::RankedList;
use serde::{Deserialize, Serialize};

use crate::feedback::RequestOptions;

pub const DEFAULT_N: usize = 3;

fn default_n() -> usize {
    DEFAULT_N
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRequest {
    pub stem: String,
    pub key: String,
    #[serde(default = "default_n")]
    pub n: usize,
    #[serde(default)]
    pub options: RequestOptions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Distractor {
    pub surface: String,
    pub score: f64,
    /// 1-based.
    pub rank: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationResponse {
    pub distractors: Vec<Distractor>,
    pub fallback_used: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fallback_reason: Option<FallbackReason>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timing_ms: Option<f64>,
}

impl GenerationResponse {
    pub fn from_ranked(list: &RankedList, timing_ms: Option<f64>) -> Self {
        Self {
            distractors: list
                .entries
                .iter()
                .enumerate()
                .map(|(i, e)| Distractor { surface: e.surface.clone(), score: e.score, rank: i + 1 })
                .collect(),
            fallback_used: list.fallback.is_some(),
            fallback_reason: list.fallback,
            timing_ms,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApiErrorBody {
    pub error: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub field: Option<String>,
    pub message: String,
}
