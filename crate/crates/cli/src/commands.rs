//! Subcommand implementations.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use clozegen_core::corpus::{dataset_stats, load_dataset, save_dataset, split_dataset, Dataset};
use clozegen_core::csg::CandidateSet;
use clozegen_core::metrics::baselines::{baseline_rank, BaselineKind, BaselineResources};
use clozegen_core::metrics::ngram::train_ngram_lm;
use clozegen_core::metrics::{evaluate, read_run, write_run, EvalConfig};
use clozegen_core::pipeline::{validate_request, GenerateOptions};
use clozegen_core::ranker::groups::{build_training_groups, read_groups, write_groups};
use clozegen_core::ranker::{build_pool, feature_importance, rank, train_with_history, RankConfig, TrainConfig};
use clozegen_core::synthetic::{self, SynthConfig};
use clozegen_core::topics::{train_lda, LdaConfig};
use clozegen_core::{text, RankedList, RankerKind};
use serde::Serialize;

use crate::api::{GenerationResponse, DEFAULT_N};
use crate::config::{Config, ResourceArgs};
use crate::error::{CliResult, Failure};
use crate::feedback::{export_groups, ExportFilter, FeedbackStore};
use crate::resources;
use crate::service;

#[derive(Debug, Parser)]
#[command(name = "clozegen", version, about = "Distractor generation for cloze multiple-choice questions")]
pub struct Cli {
    #[command(flatten)]
    pub resources: ResourceArgs,
    /// Log level filter (error, warn, info, debug).
    #[arg(long, global = true, default_value = "warn")]
    pub log: String,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Query {
    #[arg(long)]
    pub stem: String,
    #[arg(long)]
    pub key: String,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Candidate generation followed by ranking.
    Generate {
        #[command(flatten)]
        query: Query,
        #[arg(short, long, default_value_t = DEFAULT_N)]
        n: usize,
        /// Query the search backend for the web score slot.
        #[arg(long)]
        web: bool,
        /// Include `timing_ms` in the output.
        #[arg(long)]
        timing: bool,
    },
    /// Candidate set generation only.
    Csg {
        #[command(flatten)]
        query: Query,
        #[arg(long)]
        m: Option<usize>,
    },
    /// Rank a candidate set written by `csg` (`-` reads stdin).
    Rank {
        #[command(flatten)]
        query: Query,
        #[arg(long)]
        candidates: PathBuf,
        #[arg(short, long, default_value_t = DEFAULT_N)]
        n: usize,
        #[arg(long)]
        web: bool,
    },
    /// Build training groups from a dataset.
    Groups {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        pool_size: Option<usize>,
    },
    /// Train a ranking model on a group file.
    Train {
        #[arg(long)]
        groups: PathBuf,
        #[arg(long, default_value = "lambdamart_listwise")]
        kind: RankerKind,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        rounds: Option<usize>,
        #[arg(long)]
        learning_rate: Option<f64>,
        #[arg(long)]
        max_leaves: Option<usize>,
        #[arg(long)]
        min_rows_per_leaf: Option<usize>,
        #[arg(long)]
        group_subsample: Option<f64>,
    },
    /// Rank every dataset item and write a run file.
    Predict {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(short, long, default_value_t = 10)]
        n: usize,
        /// Use CSG probabilities instead of a model.
        #[arg(long)]
        csg_only: bool,
    },
    /// Rank every dataset item's pool with an unsupervised baseline.
    Baseline {
        #[arg(long)]
        kind: BaselineKind,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(short, long, default_value_t = 10)]
        n: usize,
        /// Text corpus (one sentence per line) for the n-gram model.
        #[arg(long)]
        lm_corpus: Option<PathBuf>,
        #[arg(long, default_value_t = 3)]
        lm_order: usize,
    },
    /// Score a run file against a dataset.
    Eval {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// Train an LDA topic model on a corpus with one document per line.
    LdaTrain {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 100)]
        k: usize,
        #[arg(long, default_value_t = 200)]
        iterations: usize,
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long, default_value_t = 0.01)]
        beta: f64,
    },
    /// Run the HTTP service.
    Serve {
        #[arg(long)]
        bind: Option<String>,
        #[arg(long)]
        feedback_log: Option<PathBuf>,
    },
    /// Dataset statistics.
    Stats {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// Seeded train/valid/test split.
    Split {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, default_value = "0.8,0.1,0.1")]
        ratios: String,
    },
    /// Feature importance of a model.
    Importance {
        #[arg(long)]
        json: bool,
    },
    /// Convert a feedback log into a training-group file.
    ExportFeedback {
        #[arg(long)]
        log: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        session_id: Option<String>,
    },
    /// Write the seeded synthetic benchmark.
    Synth {
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, default_value_t = 8)]
        concepts: usize,
    },
}

fn seed(cfg: &Config) -> u64 {
    cfg.seed.unwrap_or(0)
}

fn load(path: &Path) -> CliResult<Dataset> {
    let loaded = load_dataset(path).map_err(|e| Failure::new("dataset", format!("{}: {e}", path.display())))?;
    for r in loaded.rejected.iter().take(5) {
        log::warn!("{}: {r}", path.display());
    }
    Ok(loaded.dataset)
}

fn create(path: &Path) -> CliResult<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Failure::io(dir.display(), e))?;
    }
    File::create(path).map(BufWriter::new).map_err(|e| Failure::io(path.display(), e))
}

fn json_line<T: Serialize>(out: &mut dyn Write, value: &T, pretty: bool) -> CliResult<()> {
    let s = if pretty { serde_json::to_string_pretty(value) } else { serde_json::to_string(value) }
        .map_err(|e| Failure::new("internal", e.to_string()))?;
    writeln!(out, "{s}").map_err(|e| Failure::io("stdout", e))
}

fn check_query(q: &Query, n: Option<usize>) -> CliResult<()> {
    validate_request(&q.stem, &q.key).map_err(|e| Failure::new("invalid_request", e.to_string()))?;
    if n == Some(0) {
        return Err(Failure::new("invalid_request", "n must be at least 1"));
    }
    Ok(())
}

fn default_model(cfg: &Config) -> CliResult<clozegen_core::RankModel> {
    let (mut models, id) = resources::load_models(cfg)?;
    let m = models.remove(&id).expect("default model is loaded");
    Ok(std::sync::Arc::try_unwrap(m).unwrap_or_else(|a| (*a).clone()))
}

pub fn run(cli: Cli, out: &mut dyn Write) -> CliResult<()> {
    let mut cfg = cli.resources.resolve()?;
    match cli.command {
        Command::Generate { query, n, web, timing } => {
            check_query(&query, Some(n))?;
            let pipeline = resources::load_pipeline(&cfg)?;
            let model = default_model(&cfg)?;
            let started = std::time::Instant::now();
            let list = pipeline
                .generate(&model, &query.stem, &query.key, n, GenerateOptions { use_web_score: web })
                .map_err(|e| Failure::new("invalid_request", e.to_string()))?;
            let ms = timing.then(|| started.elapsed().as_secs_f64() * 1000.0);
            json_line(out, &GenerationResponse::from_ranked(&list, ms), true)
        }
        Command::Csg { query, m } => {
            check_query(&query, None)?;
            if let Some(m) = m {
                cfg.csg.m = m;
            }
            let pipeline = resources::load_pipeline(&cfg)?;
            let set = pipeline.candidates(&query.stem, &query.key).map_err(|e| Failure::new("invalid_request", e.to_string()))?;
            json_line(out, &set, true)
        }
        Command::Rank { query, candidates, n, web } => {
            check_query(&query, Some(n))?;
            let mut raw = String::new();
            if candidates.as_os_str() == "-" {
                std::io::stdin().read_to_string(&mut raw).map_err(|e| Failure::io("stdin", e))?;
            } else {
                raw = std::fs::read_to_string(&candidates).map_err(|e| Failure::io(candidates.display(), e))?;
            }
            let set: CandidateSet = serde_json::from_str(&raw).map_err(|e| Failure::new("candidates", e.to_string()))?;
            let pipeline = resources::load_pipeline(&cfg)?;
            let model = default_model(&cfg)?;
            let rcfg = RankConfig {
                n,
                features: clozegen_core::features::FeatureOptions { use_web_score: web },
                ..pipeline.rank.clone()
            };
            let list = rank(&model, &query.stem, query.key.trim(), &set, Some(&pipeline.taxonomy), &pipeline.resources, &rcfg);
            json_line(out, &GenerationResponse::from_ranked(&list, None), true)
        }
        Command::Groups { dataset, out: path, pool_size } => {
            let ds = load(&dataset)?;
            let pipeline = resources::load_pipeline(&cfg)?;
            let mut gcfg = cfg.groups.clone();
            if let Some(p) = pool_size {
                gcfg.pool_size = p;
            }
            let candidates = |it: &clozegen_core::ClozeItem| pipeline.candidates(&it.stem, &it.key).unwrap_or_default();
            let built = build_training_groups(&ds, &candidates, Some(&pipeline.taxonomy), &pipeline.resources, &gcfg)
                .map_err(|e| Failure::new("groups", e.to_string()))?;
            let mut w = create(&path)?;
            write_groups(&built.groups, &mut w).map_err(|e| Failure::io(path.display(), e))?;
            w.flush().map_err(|e| Failure::io(path.display(), e))?;
            let rows: usize = built.groups.iter().map(|g| g.rows.len()).sum();
            json_line(out, &serde_json::json!({"groups": built.groups.len(), "rows": rows, "skipped": built.skipped}), false)
        }
        Command::Train { groups, kind, out: path, rounds, learning_rate, max_leaves, min_rows_per_leaf, group_subsample } => {
            let f = File::open(&groups).map_err(|e| Failure::io(groups.display(), e))?;
            let gs = read_groups(BufReader::new(f)).map_err(|e| Failure::new("groups", format!("{}: {e}", groups.display())))?;
            let mut t = TrainConfig { seed: seed(&cfg), ..TrainConfig::for_kind(kind) };
            t.rounds = rounds.unwrap_or(t.rounds);
            t.learning_rate = learning_rate.unwrap_or(t.learning_rate);
            t.max_leaves = max_leaves.unwrap_or(t.max_leaves);
            t.min_rows_per_leaf = min_rows_per_leaf.unwrap_or(t.min_rows_per_leaf);
            t.group_subsample = group_subsample.unwrap_or(t.group_subsample);
            let (model, history) = train_with_history(&gs, kind, &t).map_err(|e| Failure::new("train", e.to_string()))?;
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir).map_err(|e| Failure::io(dir.display(), e))?;
            }
            model.save(&path).map_err(|e| Failure::io(path.display(), e))?;
            json_line(
                out,
                &serde_json::json!({
                    "model": path.display().to_string(),
                    "kind": kind.as_str(),
                    "trees": model.trees.len(),
                    "groups": gs.len(),
                    "final_ndcg_at_10": history.ndcg_at_10.last(),
                }),
                false,
            )
        }
        Command::Predict { dataset, out: path, n, csg_only } => {
            let ds = load(&dataset)?;
            let pipeline = resources::load_pipeline(&cfg)?;
            let model = if csg_only { None } else { Some(default_model(&cfg)?) };
            let mut run: BTreeMap<String, RankedList> = BTreeMap::new();
            for item in &ds.items {
                let list = match &model {
                    Some(m) => pipeline
                        .generate(m, &item.stem, &item.key, n, GenerateOptions::default())
                        .map_err(|e| Failure::new("invalid_request", format!("{}: {e}", item.id)))?,
                    None => {
                        let set = pipeline.candidates(&item.stem, &item.key).unwrap_or_default();
                        let scored = set.candidates.iter().map(|c| (c.surface.clone(), c.probability)).collect();
                        let mut l = RankedList::from_scored(scored, n);
                        l.fallback = set.fallback;
                        l
                    }
                };
                run.insert(item.id.clone(), list);
            }
            let mut w = create(&path)?;
            write_run(&run, &mut w).map_err(|e| Failure::io(path.display(), e))?;
            w.flush().map_err(|e| Failure::io(path.display(), e))?;
            json_line(out, &serde_json::json!({"items": run.len(), "run": path.display().to_string()}), false)
        }
        Command::Baseline { kind, dataset, out: path, n, lm_corpus, lm_order } => {
            let ds = load(&dataset)?;
            let pipeline = resources::load_pipeline(&cfg)?;
            let lm = match &lm_corpus {
                Some(p) => {
                    let text = std::fs::read_to_string(p).map_err(|e| Failure::io(p.display(), e))?;
                    let lines: Vec<String> = text.lines().map(str::to_string).collect();
                    Some(train_ngram_lm(&lines, lm_order).map_err(|e| Failure::new("lm", e.to_string()))?)
                }
                None => None,
            };
            let bres = BaselineResources {
                embeddings: pipeline.resources.embeddings.as_deref(),
                lm: lm.as_ref(),
                taxonomy: Some(&pipeline.taxonomy),
                ..BaselineResources::default()
            };
            let mut run = BTreeMap::new();
            for item in &ds.items {
                let set = pipeline.candidates(&item.stem, &item.key).unwrap_or_default();
                let pool = build_pool(&item.stem, &item.key, &set, Some(&pipeline.taxonomy), &pipeline.resources, &pipeline.rank);
                let mut list = baseline_rank(kind, &item.stem, &item.key, &pool, &bres).map_err(|e| Failure::missing("baseline", e))?;
                list.entries.truncate(n);
                run.insert(item.id.clone(), list);
            }
            let mut w = create(&path)?;
            write_run(&run, &mut w).map_err(|e| Failure::io(path.display(), e))?;
            w.flush().map_err(|e| Failure::io(path.display(), e))?;
            json_line(out, &serde_json::json!({"items": run.len(), "baseline": kind.as_str()}), false)
        }
        Command::Eval { dataset, run, json } => {
            let ds = load(&dataset)?;
            let f = File::open(&run).map_err(|e| Failure::io(run.display(), e))?;
            let r = read_run(BufReader::new(f)).map_err(|e| Failure::new("run", format!("{}: {e}", run.display())))?;
            let emb = resources::load_embeddings(&cfg)?;
            let report = evaluate(&r, &ds, &EvalConfig::default(), emb.as_deref());
            if json {
                json_line(out, &report, true)
            } else {
                writeln!(out, "{report}").map_err(|e| Failure::io("stdout", e))
            }
        }
        Command::LdaTrain { corpus, out: path, k, iterations, alpha, beta } => {
            let text = std::fs::read_to_string(&corpus).map_err(|e| Failure::io(corpus.display(), e))?;
            let docs: Vec<Vec<String>> = text.lines().map(text::topic_tokens).filter(|d| !d.is_empty()).collect();
            let lcfg = LdaConfig { k, iterations, alpha, beta, seed: seed(&cfg) };
            let model = train_lda(&docs, &lcfg).map_err(|e| Failure::new("lda", e.to_string()))?;
            model.save(&path).map_err(|e| Failure::io(path.display(), e))?;
            json_line(out, &serde_json::json!({"topics": k, "documents": docs.len(), "vocabulary": model.vocabulary().len()}), false)
        }
        Command::Serve { bind, feedback_log } => {
            if let Some(p) = feedback_log {
                cfg.service.feedback_log = p;
            }
            let bind = bind.unwrap_or_else(|| cfg.service.bind.clone());
            service::serve(&cfg, &bind)
        }
        Command::Stats { dataset, json } => {
            let ds = load(&dataset)?;
            let tagger = resources::load_tagger(&cfg)?;
            let stats = dataset_stats(&ds, tagger.as_ref()).map_err(|e| Failure::new("dataset", e.to_string()))?;
            if json {
                json_line(out, &stats, true)
            } else {
                writeln!(out, "{stats}").map_err(|e| Failure::io("stdout", e))
            }
        }
        Command::Split { dataset, out_dir, ratios } => {
            let parts: Vec<f64> = ratios.split(',').map(|s| s.trim().parse::<f64>()).collect::<Result<_, _>>()
                .map_err(|_| Failure::usage(format!("ratios must be three comma-separated numbers, got {ratios:?}")))?;
            let [a, b, c] = parts[..] else {
                return Err(Failure::usage(format!("ratios must be three comma-separated numbers, got {ratios:?}")));
            };
            let ds = load(&dataset)?;
            let (train, valid, test) = split_dataset(&ds, (a, b, c), seed(&cfg)).map_err(|e| Failure::new("dataset", e.to_string()))?;
            std::fs::create_dir_all(&out_dir).map_err(|e| Failure::io(out_dir.display(), e))?;
            for (name, d) in [("train", &train), ("valid", &valid), ("test", &test)] {
                let p = out_dir.join(format!("{name}.jsonl"));
                save_dataset(d, &p).map_err(|e| Failure::io(p.display(), e))?;
            }
            json_line(out, &serde_json::json!({"train": train.len(), "valid": valid.len(), "test": test.len()}), false)
        }
        Command::Importance { json } => {
            let model = default_model(&cfg)?;
            let imp = feature_importance(&model).map_err(|e| Failure::new("model", e.to_string()))?;
            if json {
                let m: Vec<serde_json::Value> = imp.iter().map(|(f, v)| serde_json::json!({"feature": f, "importance": v})).collect();
                json_line(out, &m, true)
            } else {
                for (f, v) in imp.iter().filter(|x| x.1 > 0.0) {
                    writeln!(out, "{f:<28} {v:.4}").map_err(|e| Failure::io("stdout", e))?;
                }
                Ok(())
            }
        }
        Command::ExportFeedback { log, out: path, session_id } => {
            let store = FeedbackStore::open(&log, 0).map_err(|e| Failure::new("feedback_log", e.to_string()))?;
            let res = resources::load_feature_resources(&cfg)?;
            let groups = export_groups(store.records(), &ExportFilter { session_id, item_id: None }, &res);
            let mut w = create(&path)?;
            write_groups(&groups, &mut w).map_err(|e| Failure::io(path.display(), e))?;
            w.flush().map_err(|e| Failure::io(path.display(), e))?;
            json_line(out, &serde_json::json!({"groups": groups.len()}), false)
        }
        Command::Synth { out_dir, concepts } => {
            let bench = synthetic::generate(&SynthConfig { concepts, seed: seed(&cfg), ..SynthConfig::default() });
            let p = bench.write_to_dir(&out_dir).map_err(|e| Failure::io(out_dir.display(), e))?;
            json_line(
                out,
                &serde_json::json!({
                    "taxonomy": p.taxonomy, "topics": p.topics, "embeddings": p.embeddings,
                    "train": p.train, "test": p.test,
                    "train_items": bench.train.len(), "test_items": bench.test.len(),
                }),
                false,
            )
        }
    }
}
