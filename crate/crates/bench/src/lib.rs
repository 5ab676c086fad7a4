//! Shared fixture for the criterion benches.

use clozegen_core::ranker::groups::{build_training_groups, GroupConfig};
use clozegen_core::ranker::{train, TrainConfig};
use clozegen_core::synthetic::{self, SynthBenchmark, SynthConfig};
use clozegen_core::{ClozeItem, Pipeline, RankModel, RankerKind};

pub struct Fixture {
    pub bench: SynthBenchmark,
    pub pipeline: Pipeline,
    pub model: RankModel,
}

impl Fixture {
    pub fn new(concepts: usize) -> Self {
        let bench = synthetic::generate(&SynthConfig { concepts, ..SynthConfig::default() });
        let pipeline = bench.pipeline();
        let cand = |it: &ClozeItem| pipeline.candidates(&it.stem, &it.key).unwrap_or_default();
        let groups = build_training_groups(&bench.train, &cand, Some(&pipeline.taxonomy), &pipeline.resources, &GroupConfig::default())
            .expect("synthetic items have candidates")
            .groups;
        let kind = RankerKind::LambdamartListwise;
        let model = train(&groups, kind, &TrainConfig { rounds: 50, ..TrainConfig::for_kind(kind) }).expect("two classes");
        Self { bench, pipeline, model }
    }

    pub fn item(&self) -> &ClozeItem {
        &self.bench.test.items[0]
    }
}
