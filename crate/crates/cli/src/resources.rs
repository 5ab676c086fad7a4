//! Loading of the resources named in a [`Config`].

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use clozegen_core::features::{
    CachedContextualEmbedder, ContextWindowEmbedder, ContextualEmbedder, Embeddings, FeatureResources, FixtureBackend,
    FrequencyTable, LexiconTagger, PosTagger, RateLimited, SearchBackend,
};
use clozegen_core::kb::{load_taxonomy, TaxonomyFormat};
use clozegen_core::ranker::key_pos;
use clozegen_core::{Pipeline, RankModel, TopicModel};

use crate::config::{Config, SearchConfig};
use crate::error::{CliResult, Failure};
use crate::live_search::HttpSearchBackend;

const CONTEXT_WINDOW: usize = 2;

fn require<'a>(path: &'a Option<std::path::PathBuf>, resource: &str, flag: &str) -> CliResult<&'a Path> {
    match path {
        Some(p) if p.exists() => Ok(p),
        Some(p) => Err(Failure::missing(resource, format!("{} does not exist", p.display()))),
        None => Err(Failure::missing(resource, format!("pass --{flag} or set it in the config file"))),
    }
}

pub fn load_tagger(cfg: &Config) -> CliResult<Arc<dyn PosTagger>> {
    Ok(match &cfg.resources.tagger_lexicon {
        Some(p) => Arc::new(LexiconTagger::load(p).map_err(|e| Failure::missing("tagger lexicon", format!("{}: {e}", p.display())))?),
        None => Arc::new(LexiconTagger::default()),
    })
}

pub fn load_embeddings(cfg: &Config) -> CliResult<Option<Arc<Embeddings>>> {
    let Some(p) = &cfg.resources.embeddings else {
        return Ok(None);
    };
    let e = Embeddings::load(p).map_err(|e| Failure::missing("embeddings", format!("{}: {e}", p.display())))?;
    Ok(Some(Arc::new(e)))
}

pub fn search_backend(cfg: &SearchConfig) -> CliResult<Option<Arc<dyn SearchBackend>>> {
    if let Some(p) = &cfg.fixture {
        let f = FixtureBackend::load(p).map_err(|e| Failure::missing("search fixture", format!("{}: {e}", p.display())))?;
        return Ok(Some(Arc::new(f)));
    }
    let Some(endpoint) = &cfg.endpoint else {
        return Ok(None);
    };
    let key = std::env::var(&cfg.key_env).ok();
    if key.is_none() {
        log::warn!("{} is not set; search requests go out without a key", cfg.key_env);
    }
    let live = HttpSearchBackend::new(endpoint.clone(), cfg.key_header.clone(), key);
    Ok(Some(Arc::new(RateLimited::new(live, cfg.max_per_second))))
}

/// Feature resources: the tagger is always present, the rest when configured.
pub fn load_feature_resources(cfg: &Config) -> CliResult<FeatureResources> {
    let tagger = load_tagger(cfg)?;
    let embeddings = load_embeddings(cfg)?;
    if embeddings.is_none() {
        log::warn!("no embeddings configured; similarity slots are zero");
    }
    let window: Option<Arc<dyn ContextualEmbedder>> =
        embeddings.clone().map(|e| Arc::new(ContextWindowEmbedder::new(e, CONTEXT_WINDOW)) as Arc<dyn ContextualEmbedder>);
    let contextual: Option<Arc<dyn ContextualEmbedder>> = match &cfg.resources.contextual_cache {
        Some(p) => {
            let mut c = CachedContextualEmbedder::open(p)
                .map_err(|e| Failure::missing("contextual cache", format!("{}: {e}", p.display())))?;
            if let Some(w) = window {
                c = c.with_provider(w);
            }
            Some(Arc::new(c))
        }
        None => window,
    };
    let frequencies = match &cfg.resources.frequencies {
        Some(p) => Some(Arc::new(
            FrequencyTable::load(p).map_err(|e| Failure::missing("frequencies", format!("{}: {e}", p.display())))?,
        )),
        None => None,
    };
    Ok(FeatureResources { embeddings, contextual, frequencies, tagger, search: search_backend(&cfg.search)? })
}

pub fn load_topics(cfg: &Config) -> CliResult<TopicModel> {
    let p = require(&cfg.resources.topic_model, "topic model", "topics")?;
    TopicModel::load(p).map_err(|e| Failure::missing("topic model", format!("{}: {e}", p.display())))
}

/// Taxonomy, topic model and feature resources wired into a pipeline.
pub fn load_pipeline(cfg: &Config) -> CliResult<Pipeline> {
    let p = require(&cfg.resources.taxonomy, "taxonomy", "taxonomy")?;
    let format = cfg.resources.taxonomy_format.unwrap_or(TaxonomyFormat::CountTsv);
    let loaded = load_taxonomy(p, format).map_err(|e| Failure::missing("taxonomy", format!("{}: {e}", p.display())))?;
    for d in loaded.diagnostics.iter().take(5) {
        log::warn!("taxonomy {}: {d}", p.display());
    }
    let topics = load_topics(cfg)?;
    let resources = load_feature_resources(cfg)?;
    let mut taxonomy = loaded.taxonomy;
    if !taxonomy.has_pos_index() {
        taxonomy.fill_pos_index(|inst| key_pos(inst, &resources));
    }
    let mut pipeline = Pipeline::new(taxonomy, topics, resources);
    pipeline.csg = cfg.csg.clone();
    pipeline.rank = cfg.rank.clone();
    Ok(pipeline)
}

pub fn load_model(path: &Path) -> CliResult<RankModel> {
    if !path.exists() {
        return Err(Failure::missing("model", format!("{} does not exist", path.display())));
    }
    RankModel::load(path).map_err(|e| Failure::new("model", format!("{}: {e}", path.display())))
}

/// Model id: the file name without extension.
pub fn model_id(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "model".into())
}

/// All configured models keyed by id, plus the default id.
pub fn load_models(cfg: &Config) -> CliResult<(BTreeMap<String, Arc<RankModel>>, String)> {
    let Some(first) = cfg.resources.models.first() else {
        return Err(Failure::missing("model", "pass --model or list models in the config file"));
    };
    let mut out = BTreeMap::new();
    for p in &cfg.resources.models {
        let id = model_id(p);
        if out.insert(id.clone(), Arc::new(load_model(p)?)).is_some() {
            return Err(Failure::new("config", format!("duplicate model id {id:?}")));
        }
    }
    Ok((out, model_id(first)))
}
