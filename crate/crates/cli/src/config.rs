//! TOML configuration. Command-line flags take precedence over the file.

use std::path::{Path, PathBuf};

use clozegen_core::csg::CsgConfig;
use clozegen_core::kb::TaxonomyFormat;
use clozegen_core::ranker::groups::GroupConfig;
use clozegen_core::ranker::RankConfig;
use serde::{Deserialize, Serialize};

use crate::error::{CliResult, Failure};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ResourcePaths {
    pub taxonomy: Option<PathBuf>,
    pub taxonomy_format: Option<TaxonomyFormat>,
    pub topic_model: Option<PathBuf>,
    pub embeddings: Option<PathBuf>,
    pub frequencies: Option<PathBuf>,
    pub tagger_lexicon: Option<PathBuf>,
    pub contextual_cache: Option<PathBuf>,
    /// Ranking models; the first is the default.
    pub models: Vec<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchConfig {
    pub endpoint: Option<String>,
    /// Environment variable holding the API key.
    pub key_env: String,
    pub key_header: String,
    pub max_per_second: f64,
    /// Canned responses used instead of the live endpoint.
    pub fixture: Option<PathBuf>,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            endpoint: None,
            key_env: "CLOZEGEN_SEARCH_KEY".into(),
            key_header: "Ocp-Apim-Subscription-Key".into(),
            max_per_second: 3.0,
            fixture: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceConfig {
    pub bind: String,
    pub feedback_log: PathBuf,
    /// Compact the feedback log after this many appends; 0 disables.
    pub compact_every: usize,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self { bind: "127.0.0.1:8080".into(), feedback_log: PathBuf::from("feedback.jsonl"), compact_every: 1000 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub seed: Option<u64>,
    pub resources: ResourcePaths,
    pub csg: CsgConfig,
    pub rank: RankConfig,
    pub groups: GroupConfig,
    pub search: SearchConfig,
    pub service: ServiceConfig,
}

impl Config {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Failure::io(path.display(), e))?;
        Self::parse(&text).map_err(|m| Failure::new("config", format!("{}: {m}", path.display())))
    }

    pub fn parse(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| e.message().to_string())
    }

    /// Seed shared by every randomized stage.
    pub fn apply_seed(&mut self, seed: u64) {
        self.seed = Some(seed);
        self.rank.seed = seed;
        self.groups.seed = seed;
    }
}

/// Resource flags shared by several subcommands.
#[derive(Debug, Clone, Default, clap::Args)]
pub struct ResourceArgs {
    /// TOML configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub taxonomy: Option<PathBuf>,
    /// `count_tsv` or `hypernym_export`.
    #[arg(long, global = true)]
    pub taxonomy_format: Option<TaxonomyFormat>,
    #[arg(long, global = true)]
    pub topics: Option<PathBuf>,
    #[arg(long, global = true)]
    pub embeddings: Option<PathBuf>,
    #[arg(long, global = true)]
    pub frequencies: Option<PathBuf>,
    /// Tab-separated `word<TAB>tag` lexicon for the tagger.
    #[arg(long, global = true)]
    pub lexicon: Option<PathBuf>,
    #[arg(long, global = true)]
    pub contextual_cache: Option<PathBuf>,
    /// Ranking model file; repeat to serve several.
    #[arg(long = "model", global = true)]
    pub models: Vec<PathBuf>,
    #[arg(long, global = true)]
    pub search_fixture: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
}

impl ResourceArgs {
    /// File config (if any) with every given flag applied on top.
    pub fn resolve(&self) -> CliResult<Config> {
        let mut cfg = match &self.config {
            Some(p) => Config::load(p)?,
            None => Config::default(),
        };
        let r = &mut cfg.resources;
        let set = |slot: &mut Option<PathBuf>, flag: &Option<PathBuf>| {
            if let Some(v) = flag {
                *slot = Some(v.clone());
            }
        };
        set(&mut r.taxonomy, &self.taxonomy);
        set(&mut r.topic_model, &self.topics);
        set(&mut r.embeddings, &self.embeddings);
        set(&mut r.frequencies, &self.frequencies);
        set(&mut r.tagger_lexicon, &self.lexicon);
        set(&mut r.contextual_cache, &self.contextual_cache);
        set(&mut cfg.search.fixture, &self.search_fixture);
        if let Some(f) = self.taxonomy_format {
            r.taxonomy_format = Some(f);
        }
        if !self.models.is_empty() {
            r.models = self.models.clone();
        }
        if let Some(seed) = self.seed.or(cfg.seed) {
            cfg.apply_seed(seed);
        }
        Ok(cfg)
    }
}
