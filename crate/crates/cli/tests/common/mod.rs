#![allow(dead_code)]

use std::path::{Path, PathBuf};

use clozegen_cli::config::Config;
use clozegen_core::kb::TaxonomyFormat;
use clozegen_core::ranker::groups::{build_training_groups, GroupConfig};
use clozegen_core::ranker::{train, TrainConfig};
use clozegen_core::synthetic::{self, SynthConfig, SynthPaths};
use clozegen_core::RankerKind;

pub struct Fixture {
    pub dir: tempfile::TempDir,
    pub paths: SynthPaths,
    pub model: PathBuf,
}

impl Fixture {
    pub fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let bench = synthetic::generate(&SynthConfig { concepts: 4, docs_per_concept: 8, ..SynthConfig::default() });
        let paths = bench.write_to_dir(dir.path()).unwrap();
        let pipeline = bench.pipeline();
        let cand = |it: &clozegen_core::ClozeItem| pipeline.candidates(&it.stem, &it.key).unwrap_or_default();
        let groups =
            build_training_groups(&bench.train, &cand, Some(&pipeline.taxonomy), &pipeline.resources, &GroupConfig::default())
                .unwrap()
                .groups;
        let kind = RankerKind::LambdamartListwise;
        let model = train(&groups, kind, &TrainConfig { rounds: 20, ..TrainConfig::for_kind(kind) }).unwrap();
        let model_path = dir.path().join("listwise.json");
        model.save(&model_path).unwrap();
        Self { dir, paths, model: model_path }
    }

    pub fn config(&self) -> Config {
        let mut c = Config::default();
        c.resources.taxonomy = Some(self.paths.taxonomy.clone());
        c.resources.taxonomy_format = Some(TaxonomyFormat::HypernymExport);
        c.resources.topic_model = Some(self.paths.topics.clone());
        c.resources.embeddings = Some(self.paths.embeddings.clone());
        c.resources.models = vec![self.model.clone()];
        c.service.feedback_log = self.dir.path().join("feedback.jsonl");
        c
    }

    /// Global resource flags for the binary.
    pub fn flags(&self) -> Vec<String> {
        let p = |x: &Path| x.display().to_string();
        vec![
            "--taxonomy".into(),
            p(&self.paths.taxonomy),
            "--taxonomy-format".into(),
            "hypernym_export".into(),
            "--topics".into(),
            p(&self.paths.topics),
            "--embeddings".into(),
            p(&self.paths.embeddings),
        ]
    }

    pub fn first_test_item(&self) -> clozegen_core::ClozeItem {
        clozegen_core::corpus::load_dataset(&self.paths.test).unwrap().dataset.items.remove(0)
    }
}
