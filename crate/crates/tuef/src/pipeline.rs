//! End-to-end pipeline: ingest → topics → graph → indexes → LtR dataset →
//! training → evaluation, with every stage persisting an artifact stamped
//! with the config hash. A stage refuses upstream artifacts whose hash does
//! not match the current config unless forced.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::PathBuf;

use serde::{de::DeserializeOwned, Deserialize, Serialize};

use crate::centrality::{auxiliary_centralities, CentralityTable};
use crate::config::{AblationMode, PipelineConfig};
use crate::error::{Error, Result};
use crate::eval::{
    compare_runs, compute_metrics, filter_test_queries, ComparisonTable, EvalReport, QueryRun,
    RunResult,
};
use crate::experts::{identify_experts, ExpertSet};
use crate::features::extract_features;
use crate::ingest::{
    clean_with_reputation, load_split, parse_posts, parse_users, save_split, temporal_split,
    PostFormat, PostId, Question, SplitDataset, UserId,
};
use crate::mlg::{build_mlg, layers_of, MultiLayerGraph};
use crate::par;
use crate::ranker::{
    build_ltr_dataset, load_ltr_dataset, save_ltr_dataset, score_and_rank, train_lambdamart,
    tune_hyperparams, LtrBuildReport, LtrSplit, RankerModel,
};
use crate::retrieval::{build_indexes, bm25_query, InvertedIndex};
use crate::selection::{select_candidates, SelectionContext, SelectionOutput};
use crate::topics::{build_cooccurrence, cluster_tags, TagClustering};

const INDEX_MAGIC: &[u8; 8] = b"TUEFIDX1";

/// Envelope written around every JSON artifact.
#[derive(Serialize, Deserialize)]
struct Artifact<T> {
    config_hash: String,
    payload: T,
}

/// Artifact directory bound to one config hash.
pub struct ArtifactStore {
    dir: PathBuf,
    hash: String,
    force: bool,
}

impl ArtifactStore {
    pub fn new(cfg: &PipelineConfig, force: bool) -> Result<ArtifactStore> {
        std::fs::create_dir_all(&cfg.artifacts_dir)?;
        Ok(ArtifactStore {
            dir: cfg.artifacts_dir.clone(),
            hash: cfg.hash(),
            force,
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn write_json<T: Serialize>(&self, name: &str, payload: &T) -> Result<()> {
        if let Some(parent) = self.path(name).parent() {
            std::fs::create_dir_all(parent)?;
        }
        let mut f = BufWriter::new(File::create(self.path(name))?);
        serde_json::to_writer(
            &mut f,
            &Artifact {
                config_hash: self.hash.clone(),
                payload,
            },
        )?;
        f.write_all(b"\n")?;
        f.flush()?;
        Ok(())
    }

    fn read_json<T: DeserializeOwned>(&self, name: &str) -> Result<T> {
        let path = self.path(name);
        let file = File::open(&path).map_err(|e| {
            Error::Artifact(format!(
                "missing artifact `{}` ({e}); run the producing stage first",
                path.display()
            ))
        })?;
        let artifact: Artifact<T> = serde_json::from_reader(BufReader::new(file))?;
        self.check_hash(name, &artifact.config_hash)?;
        Ok(artifact.payload)
    }

    fn check_hash(&self, name: &str, found: &str) -> Result<()> {
        if !self.force && found != self.hash {
            return Err(Error::Artifact(format!(
                "artifact `{name}` was produced by config {found}, current config is {}; \
                 re-run the stage or pass --force",
                self.hash
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct GraphArtifact {
    pub mlg: MultiLayerGraph,
    pub experts: ExpertSet,
    pub centralities: Vec<CentralityTable>,
    /// Betweenness runs on the unweighted topology; recorded for provenance.
    pub betweenness_weighting: String,
}

// ---------------------------------------------------------------------------
// Stages
// ---------------------------------------------------------------------------

/// Parse, clean, and split the raw posts; persist the dataset directory.
pub fn stage_ingest(cfg: &PipelineConfig, force: bool) -> Result<SplitDataset> {
    let run = || -> Result<SplitDataset> {
        let store = ArtifactStore::new(cfg, force)?;
        let format = match cfg.posts_format.as_str() {
            "jsonl" => PostFormat::Jsonl,
            "xml_dump" => PostFormat::XmlDump,
            other => {
                return Err(Error::InvalidParam(format!(
                    "unknown posts format `{other}`"
                )))
            }
        };
        let (raw, parse_report) = parse_posts(&cfg.posts_file, format)?;
        let reputations = match &cfg.users_file {
            Some(path) => Some(parse_users(path)?),
            None => None,
        };
        let (dataset, clean_report) = clean_with_reputation(&raw, reputations.as_ref());
        let split = temporal_split(&dataset, cfg.split_ratio)?;
        save_split(&split, &store.path("dataset"))?;
        store.write_json("parse_report.json", &parse_report)?;
        store.write_json("clean_report.json", &clean_report)?;
        store.write_json(
            "dataset/provenance.json",
            &format!("split at {}", split.split_ts),
        )?;
        eprintln!(
            "[ingest] {} train / {} test questions ({} skipped records)",
            split.train.questions.len(),
            split.test.questions.len(),
            parse_report.skipped
        );
        Ok(split)
    };
    run().map_err(|e| e.in_stage("ingest"))
}

fn load_dataset_checked(cfg: &PipelineConfig, store: &ArtifactStore) -> Result<SplitDataset> {
    let _: String = store.read_json("dataset/provenance.json")?;
    let _ = cfg;
    load_split(&store.path("dataset"))
}

/// Cluster the training tags (or assign them all to one layer in
/// single-layer mode).
pub fn stage_topics(cfg: &PipelineConfig, force: bool) -> Result<TagClustering> {
    let run = || -> Result<TagClustering> {
        let store = ArtifactStore::new(cfg, force)?;
        let split = load_dataset_checked(cfg, &store)?;
        let clustering = if cfg.mode == AblationMode::Sl {
            TagClustering::single_layer(split.train.tag_universe.iter().cloned())
        } else {
            let matrix = build_cooccurrence(&split.train, cfg.lambda)?;
            let k_max = cfg.k_max.min(matrix.tags.len());
            let candidates: Vec<usize> = (cfg.k_min..=k_max).collect();
            cluster_tags(&matrix, &candidates, cfg.seed)?
        };
        store.write_json("clustering.json", &clustering)?;
        eprintln!(
            "[topics] k={} over {} tags",
            clustering.k,
            clustering.assignment.len()
        );
        Ok(clustering)
    };
    run().map_err(|e| e.in_stage("topics"))
}

/// Identify experts, build the multi-layer graph, compute centralities.
pub fn stage_graph(cfg: &PipelineConfig, force: bool) -> Result<GraphArtifact> {
    let run = || -> Result<GraphArtifact> {
        let store = ArtifactStore::new(cfg, force)?;
        let split = load_dataset_checked(cfg, &store)?;
        let clustering: TagClustering = store.read_json("clustering.json")?;
        let experts = identify_experts(&split.train, cfg.beta)?;
        if let Some(warning) = &experts.warning {
            eprintln!("[graph] warning: {warning}");
        }
        let mut mlg = build_mlg(&split.train, &clustering, cfg.epsilon, cfg.delta)?;
        mlg.mark_experts(&experts);
        let centralities: Vec<CentralityTable> =
            par::map_collect(&mlg.layers, auxiliary_centralities);
        let artifact = GraphArtifact {
            mlg,
            experts,
            centralities,
            betweenness_weighting: "unweighted_topology".into(),
        };
        store.write_json("graph.json", &artifact)?;
        let sizes: Vec<usize> = artifact.mlg.layers.iter().map(|l| l.nodes.len()).collect();
        eprintln!(
            "[graph] {} experts; layer sizes {:?}",
            artifact.experts.experts.len(),
            sizes
        );
        // Expert audit export.
        let mut audit = BufWriter::new(File::create(store.path("experts.jsonl"))?);
        for (&uid, stats) in &split.train.users {
            if let Some(ratio) = artifact.experts.ratios.get(&uid) {
                writeln!(
                    audit,
                    "{{\"user_id\":{uid},\"accepted\":{},\"total\":{},\"ratio\":{ratio},\"is_expert\":{}}}",
                    stats.accepted,
                    stats.answers,
                    artifact.experts.is_expert(uid)
                )?;
            }
        }
        audit.flush()?;
        Ok(artifact)
    };
    run().map_err(|e| e.in_stage("graph"))
}

/// Build and persist the two BM25 indexes.
pub fn stage_index(cfg: &PipelineConfig, force: bool) -> Result<(InvertedIndex, InvertedIndex)> {
    let run = || -> Result<(InvertedIndex, InvertedIndex)> {
        let store = ArtifactStore::new(cfg, force)?;
        let split = load_dataset_checked(cfg, &store)?;
        let indexes = build_indexes(&split.train);
        save_indexes(&store, "index.bin", &indexes)?;
        eprintln!(
            "[index] tag vocabulary {}, text vocabulary {}",
            indexes.0.vocabulary.len(),
            indexes.1.vocabulary.len()
        );
        Ok(indexes)
    };
    run().map_err(|e| e.in_stage("index"))
}

fn save_indexes(
    store: &ArtifactStore,
    name: &str,
    indexes: &(InvertedIndex, InvertedIndex),
) -> Result<()> {
    let mut f = BufWriter::new(File::create(store.path(name))?);
    f.write_all(INDEX_MAGIC)?;
    let artifact = Artifact {
        config_hash: store.hash.clone(),
        payload: indexes,
    };
    bincode::serialize_into(&mut f, &artifact)
        .map_err(|e| Error::Artifact(format!("index serialization failed: {e}")))?;
    f.flush()?;
    Ok(())
}

fn load_indexes(store: &ArtifactStore, name: &str) -> Result<(InvertedIndex, InvertedIndex)> {
    let mut f = BufReader::new(File::open(store.path(name)).map_err(|e| {
        Error::Artifact(format!("missing index artifact: {e}; run `index` first"))
    })?);
    let mut magic = [0u8; 8];
    f.read_exact(&mut magic)?;
    if &magic != INDEX_MAGIC {
        return Err(Error::Artifact("bad index file magic".into()));
    }
    let artifact: Artifact<(InvertedIndex, InvertedIndex)> = bincode::deserialize_from(&mut f)
        .map_err(|e| Error::Artifact(format!("index deserialization failed: {e}")))?;
    store.check_hash(name, &artifact.config_hash)?;
    Ok(artifact.payload)
}

/// Everything selection needs, loaded from the artifact store.
pub struct LoadedArtifacts {
    pub split: SplitDataset,
    pub graph: GraphArtifact,
    pub tag_index: InvertedIndex,
    pub text_index: InvertedIndex,
}

impl LoadedArtifacts {
    pub fn load(cfg: &PipelineConfig, force: bool) -> Result<LoadedArtifacts> {
        let store = ArtifactStore::new(cfg, force)?;
        let split = load_dataset_checked(cfg, &store)?;
        let graph: GraphArtifact = store.read_json("graph.json")?;
        let (tag_index, text_index) = load_indexes(&store, "index.bin")?;
        Ok(LoadedArtifacts {
            split,
            graph,
            tag_index,
            text_index,
        })
    }

    pub fn selection_context(&self) -> SelectionContext<'_> {
        SelectionContext {
            mlg: &self.graph.mlg,
            tag_index: &self.tag_index,
            text_index: &self.text_index,
            centralities: &self.graph.centralities,
            experts: &self.graph.experts,
            users: &self.split.train.users,
        }
    }
}

/// Select candidates for one ad-hoc question against the stored artifacts.
pub fn run_select(
    cfg: &PipelineConfig,
    question: &Question,
    force: bool,
) -> Result<SelectionOutput> {
    let artifacts = LoadedArtifacts::load(cfg, force)?;
    let ctx = artifacts.selection_context();
    select_candidates(question, &ctx, &cfg.selection_config())
}

/// Build the LtR training/validation matrices from the train-tail queries.
pub fn stage_ltr_build(cfg: &PipelineConfig, force: bool) -> Result<(LtrSplit, LtrBuildReport)> {
    let run = || -> Result<(LtrSplit, LtrBuildReport)> {
        let store = ArtifactStore::new(cfg, force)?;
        let artifacts = LoadedArtifacts::load(cfg, force)?;
        let ctx = artifacts.selection_context();

        let mut ordered: Vec<&Question> = artifacts.split.train.questions.values().collect();
        ordered.sort_by_key(|q| (q.creation_ts, q.id));
        let tail_start = ordered.len().saturating_sub(cfg.ltr_tail_queries);
        let tail = &ordered[tail_start..];

        let (split, report) = build_ltr_dataset(
            tail,
            &artifacts.split.train,
            &ctx,
            &cfg.selection_config(),
            cfg.mode.feature_set(),
        )?;
        save_ltr_dataset(&split.train, &store.path("ltr"), "train")?;
        save_ltr_dataset(&split.validation, &store.path("ltr"), "validation")?;
        store.write_json("ltr/build_report.json", &report)?;
        eprintln!(
            "[ltr-build] {} queries retained ({} dropped without their answerer)",
            report.retained, report.dropped_missing_answerer
        );
        Ok((split, report))
    };
    run().map_err(|e| e.in_stage("ltr-build"))
}

/// Tune (optionally) and train the ranker; persist the model, the trials,
/// and the feature-importance report.
pub fn stage_train(cfg: &PipelineConfig, force: bool) -> Result<RankerModel> {
    let run = || -> Result<RankerModel> {
        let store = ArtifactStore::new(cfg, force)?;
        let train = load_ltr_dataset(&store.path("ltr"), "train")?;
        let validation = load_ltr_dataset(&store.path("ltr"), "validation")?;
        let hp = if cfg.tune_budget > 0 {
            let outcome = tune_hyperparams(&train, &validation, cfg.tune_budget, cfg.seed)?;
            store.write_json("tune.json", &outcome)?;
            eprintln!(
                "[train] tuned over {} draws, best validation MRR {:.4}",
                outcome.trials.len(),
                outcome.best_mrr
            );
            outcome.best
        } else {
            cfg.hyperparams
        };
        let model = train_lambdamart(&train, &validation, &hp, cfg.seed)?;
        model.save(&store.path("model.json"))?;
        store.write_json("feature_importance.json", &model.feature_importance())?;
        let best_mrr = model
            .metadata
            .validation_mrr_curve
            .get(model.metadata.best_iteration)
            .copied()
            .unwrap_or(f64::NAN);
        eprintln!(
            "[train] {} trees, validation MRR {best_mrr:.4}",
            model.trees.len()
        );
        Ok(model)
    };
    run().map_err(|e| e.in_stage("train"))
}

/// Rank the layer experts of a question by betweenness alone.
fn rank_by_betweenness(
    question: &Question,
    graph: &GraphArtifact,
) -> Vec<UserId> {
    let mapped = layers_of(&question.tags, &graph.mlg.clustering);
    let layers: Vec<usize> = if mapped.is_empty() {
        (0..graph.mlg.layers.len()).collect()
    } else {
        mapped.into_iter().collect()
    };
    let mut best: BTreeMap<UserId, f64> = BTreeMap::new();
    for &layer_id in &layers {
        let layer = &graph.mlg.layers[layer_id];
        let table = &graph.centralities[layer_id];
        for &u in &layer.nodes {
            if layer.is_expert.get(&u).copied().unwrap_or(false) {
                let score = table.betweenness.get(&u).copied().unwrap_or(0.0);
                let entry = best.entry(u).or_insert(f64::NEG_INFINITY);
                if score > *entry {
                    *entry = score;
                }
            }
        }
    }
    let mut order: Vec<(UserId, f64)> = best.into_iter().collect();
    order.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    order.into_iter().map(|(u, _)| u).collect()
}

/// Rank experts by the merged BM25 question lists alone.
fn rank_by_bm25(
    question: &Question,
    artifacts: &LoadedArtifacts,
    cfg: &PipelineConfig,
) -> Vec<UserId> {
    let tag_results = bm25_query(
        &artifacts.tag_index,
        &artifacts.tag_index.query_tokens(question),
        cfg.top_n_retrieval,
    );
    let text_results = bm25_query(
        &artifacts.text_index,
        &artifacts.text_index.query_tokens(question),
        cfg.top_n_retrieval,
    );
    let mapped = layers_of(&question.tags, &artifacts.graph.mlg.clustering);
    let layers: Vec<usize> = if mapped.is_empty() {
        (0..artifacts.graph.mlg.layers.len()).collect()
    } else {
        mapped.into_iter().collect()
    };
    let (a, b) = if cfg.tag_first {
        (&tag_results.hits, &text_results.hits)
    } else {
        (&text_results.hits, &tag_results.hits)
    };
    let mut merged = Vec::with_capacity(a.len() + b.len());
    let mut i = 0;
    while i < a.len() || i < b.len() {
        if i < a.len() {
            merged.push(a[i].2);
        }
        if i < b.len() {
            merged.push(b[i].2);
        }
        i += 1;
    }
    let mut seen = std::collections::BTreeSet::new();
    merged
        .into_iter()
        .filter(|&u| {
            layers.iter().any(|&l| {
                let layer = &artifacts.graph.mlg.layers[l];
                layer.contains(u) && layer.is_expert.get(&u).copied().unwrap_or(false)
            })
        })
        .filter(|&u| seen.insert(u))
        .collect()
}

fn rank_with_model(
    question: &Question,
    artifacts: &LoadedArtifacts,
    model: &RankerModel,
    cfg: &PipelineConfig,
) -> Result<Vec<UserId>> {
    let ctx = artifacts.selection_context();
    let output = select_candidates(question, &ctx, &cfg.selection_config())?;
    let vectors = extract_features(
        question,
        &output.candidates,
        &ctx,
        &output.tag_results,
        &output.text_results,
    );
    let mask = cfg.mode.feature_set().mask();
    let candidates: Vec<(UserId, Vec<f64>)> = vectors
        .into_iter()
        .map(|(u, fv)| {
            (
                u,
                fv.values
                    .iter()
                    .zip(mask)
                    .filter(|(_, keep)| *keep)
                    .map(|(v, _)| *v)
                    .collect(),
            )
        })
        .collect();
    Ok(score_and_rank(model, &candidates)?
        .into_iter()
        .map(|(u, _)| u)
        .collect())
}

/// Evaluate the configured mode on the filtered test queries; persist the
/// report (JSON + text), the per-query metric CSV, and the raw run.
pub fn stage_eval(cfg: &PipelineConfig, force: bool) -> Result<(EvalReport, RunResult)> {
    let run = || -> Result<(EvalReport, RunResult)> {
        let store = ArtifactStore::new(cfg, force)?;
        let artifacts = LoadedArtifacts::load(cfg, force)?;
        let model = if cfg.mode.uses_ranker() {
            Some(RankerModel::load(&store.path("model.json"))?)
        } else {
            None
        };

        let eligible = filter_test_queries(&artifacts.split.test, &artifacts.graph.experts);
        let limit = cfg.test_query_limit.min(eligible.len());
        let query_ids: Vec<PostId> = eligible.into_iter().take(limit).collect();
        if query_ids.is_empty() {
            return Err(Error::InvalidRun(
                "no test query has an expert best answerer".into(),
            ));
        }

        let ranked: Vec<Result<QueryRun>> = par::map_collect(&query_ids, |&qid| {
            let question = &artifacts.split.test.questions[&qid];
            let relevant = artifacts.split.test.best_answerer(qid).unwrap();
            let ranked = match cfg.mode {
                AblationMode::Bc => rank_by_betweenness(question, &artifacts.graph),
                AblationMode::Bm25 => rank_by_bm25(question, &artifacts, cfg),
                _ => rank_with_model(question, &artifacts, model.as_ref().unwrap(), cfg)?,
            };
            Ok(QueryRun {
                query_id: qid,
                ranked,
                relevant,
            })
        });
        let queries: Vec<QueryRun> = ranked.into_iter().collect::<Result<_>>()?;
        let run_result = RunResult {
            name: cfg.mode.as_str().to_string(),
            queries,
        };
        let report = compute_metrics(&run_result)?;

        store.write_json("eval/report.json", &report)?;
        store.write_json("eval/run.json", &run_result)?;
        let mut text = File::create(store.path("eval/report.txt"))?;
        writeln!(
            text,
            "mode={} queries={}\nP@1    {:.4}\nNDCG@3 {:.4}\nMRR    {:.4}\nR@100  {:.4}\nHit@5  {:.4}",
            cfg.mode.as_str(),
            report.query_count,
            report.p_at_1,
            report.ndcg_at_3,
            report.mrr,
            report.r_at_100,
            report.hit_at_5
        )?;
        let mut csv = BufWriter::new(File::create(store.path("eval/per_query.csv"))?);
        writeln!(csv, "query_id,p_at_1,ndcg_at_3,rr,r_at_100,hit_at_5")?;
        for (i, q) in run_result.queries.iter().enumerate() {
            writeln!(
                csv,
                "{},{},{},{},{},{}",
                q.query_id,
                report.per_query.p_at_1[i],
                report.per_query.ndcg_at_3[i],
                report.per_query.rr[i],
                report.per_query.r_at_100[i],
                report.per_query.hit_at_5[i]
            )?;
        }
        csv.flush()?;
        eprintln!(
            "[eval] mode={} P@1={:.3} NDCG@3={:.3} MRR={:.3} R@100={:.3} over {} queries",
            cfg.mode.as_str(),
            report.p_at_1,
            report.ndcg_at_3,
            report.mrr,
            report.r_at_100,
            report.query_count
        );
        Ok((report, run_result))
    };
    run().map_err(|e| e.in_stage("eval"))
}

/// Execute every stage in order and return the final evaluation report.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<EvalReport> {
    let store = ArtifactStore::new(cfg, false)?;
    store.write_json("config.json", cfg)?;
    cfg.save(&store.path("config.toml"))?;

    stage_ingest(cfg, false)?;
    stage_topics(cfg, false)?;
    stage_graph(cfg, false)?;
    stage_index(cfg, false)?;
    if cfg.mode.uses_ranker() {
        stage_ltr_build(cfg, false)?;
        stage_train(cfg, false)?;
    }
    let (report, _) = stage_eval(cfg, false)?;
    Ok(report)
}

/// Run the pipeline once per ablation mode (each in its own artifact
/// subdirectory) and compare every run against the content-only baseline.
pub fn run_ablation(base: &PipelineConfig, modes: &[AblationMode]) -> Result<ComparisonTable> {
    let mut runs: Vec<RunResult> = Vec::new();
    for &mode in modes {
        let mut cfg = base.clone();
        cfg.mode = mode;
        cfg.artifacts_dir = base.artifacts_dir.join(mode.as_str());
        eprintln!("[ablate] running mode {}", mode.as_str());
        run_pipeline(&cfg)?;
        let store = ArtifactStore::new(&cfg, false)?;
        let run: RunResult = store.read_json("eval/run.json")?;
        runs.push(run);
    }
    let baseline = if modes.contains(&AblationMode::Cb) {
        AblationMode::Cb.as_str()
    } else {
        modes[0].as_str()
    };
    let table = compare_runs(&runs, baseline)?;

    let store = ArtifactStore::new(base, true)?;
    store.write_json("ablation/report.json", &table)?;
    std::fs::write(store.path("ablation/report.txt"), table.render())?;
    eprint!("{}", table.render());
    Ok(table)
}
