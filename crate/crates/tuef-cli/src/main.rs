//! Pipeline driver: every stage is a subcommand, configured by a TOML file
//! with flag overrides. Logs go to stderr, artifacts to the configured
//! directory.

use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use tuef::config::{AblationMode, PipelineConfig};
use tuef::ingest::Question;
use tuef::pipeline::{
    run_ablation, run_pipeline, run_select, stage_eval, stage_graph, stage_index,
    stage_ingest, stage_ltr_build, stage_topics, stage_train, ArtifactStore, LoadedArtifacts,
};
use tuef::ranker::tune_hyperparams;
use tuef::retrieval::{bm25_query, tokenize_text};
use tuef::synth::{generate_synthetic, write_synthetic, SyntheticSpec};

#[derive(Parser)]
#[command(name = "tuef", about = "Topic-oriented user-interaction expert finding", version)]
struct Cli {
    /// TOML config file; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Accept upstream artifacts produced by a different config hash.
    #[arg(long, global = true)]
    force: bool,

    #[command(flatten)]
    overrides: Overrides,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Default)]
struct Overrides {
    #[arg(long, global = true)]
    posts_file: Option<PathBuf>,
    #[arg(long, global = true)]
    users_file: Option<PathBuf>,
    /// Input format: jsonl or xml_dump.
    #[arg(long, global = true)]
    posts_format: Option<String>,
    #[arg(long, global = true)]
    artifacts_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    split_ratio: Option<f64>,
    #[arg(long, global = true)]
    lambda: Option<usize>,
    #[arg(long, global = true)]
    k_min: Option<usize>,
    #[arg(long, global = true)]
    k_max: Option<usize>,
    #[arg(long, global = true)]
    epsilon: Option<u64>,
    #[arg(long, global = true)]
    delta: Option<f64>,
    #[arg(long, global = true)]
    beta: Option<u64>,
    #[arg(long, global = true)]
    alpha: Option<f64>,
    #[arg(long, global = true)]
    walks: Option<u32>,
    #[arg(long, global = true)]
    steps: Option<u32>,
    #[arg(long, global = true)]
    top_n: Option<usize>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Ablation mode: tuef, bc, bm25, nb, cb, sl, norw.
    #[arg(long, global = true)]
    mode: Option<String>,
    #[arg(long, global = true)]
    ltr_tail: Option<usize>,
    #[arg(long, global = true)]
    tune_budget: Option<usize>,
    #[arg(long, global = true)]
    test_limit: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Parse, clean, and temporally split the raw posts.
    Ingest,
    /// Cluster tags into topics (k selected by silhouette).
    Topics,
    /// Identify experts and build the multi-layer graph with centralities.
    Graph,
    /// Build or query the BM25 indexes.
    Index {
        #[command(subcommand)]
        action: IndexAction,
    },
    /// Identify the expert set and export the audit file.
    Experts,
    /// Select candidate experts for one question.
    Select {
        #[arg(long)]
        question_file: PathBuf,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Build the learning-to-rank dataset from the train tail.
    LtrBuild,
    /// Train the ranking model (tunes first when tune_budget > 0).
    Train,
    /// Random-search hyperparameters on validation MRR.
    Tune,
    /// Rank experts for one question with the trained model.
    Rank {
        #[arg(long)]
        question_file: PathBuf,
        #[arg(long, default_value_t = 20)]
        top: usize,
    },
    /// Evaluate the configured mode on the test split.
    Eval,
    /// Run several ablation modes and compare them.
    Ablate {
        /// Comma-separated modes (default: all seven).
        #[arg(long)]
        modes: Option<String>,
    },
    /// Generate a synthetic corpus with planted experts.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 200)]
        users: usize,
        #[arg(long, default_value_t = 20)]
        experts: usize,
        #[arg(long, default_value_t = 50)]
        tags: usize,
        #[arg(long, default_value_t = 5)]
        topics: usize,
        #[arg(long, default_value_t = 5000)]
        questions: usize,
        #[arg(long, default_value_t = 0.9)]
        concentration: f64,
        #[arg(long, default_value_t = 0.3)]
        generic_fraction: f64,
        #[arg(long, default_value_t = 42)]
        seed: u64,
    },
    /// Run the whole pipeline end to end.
    Run,
}

#[derive(Subcommand)]
enum IndexAction {
    /// Build the tag and text indexes from the training split.
    Build,
    /// Debug-query one index.
    Query {
        /// Which index: tag or text.
        #[arg(long)]
        kind: String,
        #[arg(long)]
        query: String,
        #[arg(long, default_value_t = 10)]
        top_n: usize,
    },
}

fn resolve_config(cli: &Cli) -> Result<PipelineConfig> {
    let mut cfg = match &cli.config {
        Some(path) => PipelineConfig::load(path)
            .with_context(|| format!("loading config {}", path.display()))?,
        None => {
            let posts = cli
                .overrides
                .posts_file
                .clone()
                .unwrap_or_else(|| PathBuf::from("posts.jsonl"));
            let artifacts = cli
                .overrides
                .artifacts_dir
                .clone()
                .unwrap_or_else(|| PathBuf::from("artifacts"));
            PipelineConfig::with_dirs(posts, artifacts)
        }
    };
    let o = &cli.overrides;
    if let Some(v) = &o.posts_file {
        cfg.posts_file = v.clone();
    }
    if let Some(v) = &o.users_file {
        cfg.users_file = Some(v.clone());
    }
    if let Some(v) = &o.posts_format {
        cfg.posts_format = v.clone();
    }
    if let Some(v) = &o.artifacts_dir {
        cfg.artifacts_dir = v.clone();
    }
    if let Some(v) = o.split_ratio {
        cfg.split_ratio = v;
    }
    if let Some(v) = o.lambda {
        cfg.lambda = v;
    }
    if let Some(v) = o.k_min {
        cfg.k_min = v;
    }
    if let Some(v) = o.k_max {
        cfg.k_max = v;
    }
    if let Some(v) = o.epsilon {
        cfg.epsilon = v;
    }
    if let Some(v) = o.delta {
        cfg.delta = v;
    }
    if let Some(v) = o.beta {
        cfg.beta = v;
    }
    if let Some(v) = o.alpha {
        cfg.alpha = v;
    }
    if let Some(v) = o.walks {
        cfg.walks_per_expert = v;
    }
    if let Some(v) = o.steps {
        cfg.walk_steps = v;
    }
    if let Some(v) = o.top_n {
        cfg.top_n_retrieval = v;
    }
    if let Some(v) = o.seed {
        cfg.seed = v;
    }
    if let Some(v) = &o.mode {
        cfg.mode = AblationMode::parse(v)?;
    }
    if let Some(v) = o.ltr_tail {
        cfg.ltr_tail_queries = v;
    }
    if let Some(v) = o.tune_budget {
        cfg.tune_budget = v;
    }
    if let Some(v) = o.test_limit {
        cfg.test_query_limit = v;
    }
    Ok(cfg)
}

#[derive(serde::Deserialize)]
struct QuestionFile {
    #[serde(default)]
    id: Option<u64>,
    #[serde(default)]
    title: String,
    #[serde(default)]
    body: String,
    tags: Vec<String>,
}

fn load_question(path: &PathBuf) -> Result<Question> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading question file {}", path.display()))?;
    let q: QuestionFile = serde_json::from_str(&text).context("parsing question JSON")?;
    if q.tags.is_empty() {
        bail!("question file must declare at least one tag");
    }
    Ok(Question {
        id: q.id.unwrap_or(0),
        owner_user_id: 0,
        creation_ts: 0,
        title: q.title,
        body: q.body,
        tags: q.tags.iter().map(|t| t.trim().to_lowercase()).collect(),
        accepted_answer_id: 0,
    })
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let cfg = resolve_config(&cli)?;
    let force = cli.force;

    match cli.command {
        Command::Ingest => {
            stage_ingest(&cfg, force)?;
        }
        Command::Topics => {
            stage_topics(&cfg, force)?;
        }
        Command::Graph => {
            stage_graph(&cfg, force)?;
        }
        Command::Index { action } => match action {
            IndexAction::Build => {
                stage_index(&cfg, force)?;
            }
            IndexAction::Query { kind, query, top_n } => {
                let artifacts = LoadedArtifacts::load(&cfg, force)?;
                let (index, tokens) = match kind.as_str() {
                    "tag" => {
                        let tokens: Vec<String> = query
                            .split_whitespace()
                            .map(|t| t.to_lowercase())
                            .collect();
                        (&artifacts.tag_index, tokens)
                    }
                    "text" => (&artifacts.text_index, tokenize_text(&query, true)),
                    other => bail!("unknown index kind `{other}` (use tag or text)"),
                };
                let hits = bm25_query(index, &tokens, top_n);
                for (qid, score, expert) in &hits.hits {
                    println!("{qid}\t{score:.6}\t{expert}");
                }
            }
        },
        Command::Experts => {
            let graph = stage_graph(&cfg, force)?;
            println!(
                "{} candidates, {} experts (mean acceptance ratio {:.4})",
                graph.experts.candidates.len(),
                graph.experts.experts.len(),
                graph.experts.mean_ratio
            );
        }
        Command::Select {
            question_file,
            output,
        } => {
            let question = load_question(&question_file)?;
            let result = run_select(&cfg, &question, force)?;
            let json = serde_json::to_string_pretty(&result.candidates)?;
            match output {
                Some(path) => std::fs::write(path, json)?,
                None => println!("{json}"),
            }
        }
        Command::LtrBuild => {
            stage_ltr_build(&cfg, force)?;
        }
        Command::Train => {
            stage_train(&cfg, force)?;
        }
        Command::Tune => {
            let store = ArtifactStore::new(&cfg, force)?;
            let train = tuef::ranker::load_ltr_dataset(&store.path("ltr"), "train")?;
            let validation = tuef::ranker::load_ltr_dataset(&store.path("ltr"), "validation")?;
            let budget = cfg.tune_budget.max(1);
            let outcome = tune_hyperparams(&train, &validation, budget, cfg.seed)?;
            std::fs::write(
                store.path("tune.json"),
                serde_json::to_string_pretty(&outcome)?,
            )?;
            println!(
                "best validation MRR {:.4} with {:?}",
                outcome.best_mrr, outcome.best
            );
        }
        Command::Rank { question_file, top } => {
            let question = load_question(&question_file)?;
            let artifacts = LoadedArtifacts::load(&cfg, force)?;
            let store = ArtifactStore::new(&cfg, force)?;
            let model = tuef::ranker::RankerModel::load(&store.path("model.json"))?;
            let ctx = artifacts.selection_context();
            let output =
                tuef::selection::select_candidates(&question, &ctx, &cfg.selection_config())?;
            let vectors = tuef::features::extract_features(
                &question,
                &output.candidates,
                &ctx,
                &output.tag_results,
                &output.text_results,
            );
            let mask = cfg.mode.feature_set().mask();
            let candidates: Vec<(u64, Vec<f64>)> = vectors
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
            let ranked = tuef::ranker::score_and_rank(&model, &candidates)?;
            for (rank, (user, score)) in ranked.iter().take(top).enumerate() {
                println!("{}\t{user}\t{score:.6}", rank + 1);
            }
        }
        Command::Eval => {
            let (report, _) = stage_eval(&cfg, force)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
        }
        Command::Ablate { modes } => {
            let modes: Vec<AblationMode> = match modes {
                Some(list) => list
                    .split(',')
                    .map(|m| AblationMode::parse(m.trim()))
                    .collect::<tuef::Result<_>>()?,
                None => AblationMode::all().to_vec(),
            };
            let table = run_ablation(&cfg, &modes)?;
            println!("{}", table.render());
        }
        Command::Synth {
            out,
            users,
            experts,
            tags,
            topics,
            questions,
            concentration,
            generic_fraction,
            seed,
        } => {
            let spec = SyntheticSpec {
                users,
                experts,
                tags,
                topics,
                questions,
                concentration,
                generic_fraction,
                seed,
            };
            let corpus = generate_synthetic(&spec)?;
            write_synthetic(&corpus, &out)?;
            eprintln!(
                "[synth] wrote {} posts to {}",
                corpus.posts.len(),
                out.display()
            );
        }
        Command::Run => {
            let report = run_pipeline(&cfg)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
        }
    }
    Ok(())
}
