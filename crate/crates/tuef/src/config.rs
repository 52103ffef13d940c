//! Pipeline configuration: one struct carrying every stage's parameters,
//! loadable from a TOML file with flag overrides, hashed for artifact
//! provenance.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::features::FeatureSet;
use crate::ranker::HyperParams;
use crate::selection::{SelectionConfig, SelectionMode};

/// Ablation variants of the full pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AblationMode {
    /// Full pipeline.
    Tuef,
    /// Rank layer experts by betweenness centrality only, no learned ranker.
    Bc,
    /// Rank by the merged BM25 expert order only, no learned ranker.
    Bm25,
    /// Network-based selection and features only.
    Nb,
    /// Content-based selection and features only.
    Cb,
    /// Single-layer graph (all tags in one cluster).
    Sl,
    /// Full pipeline without the random-walk exploratory phase.
    Norw,
}

impl AblationMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            AblationMode::Tuef => "tuef",
            AblationMode::Bc => "bc",
            AblationMode::Bm25 => "bm25",
            AblationMode::Nb => "nb",
            AblationMode::Cb => "cb",
            AblationMode::Sl => "sl",
            AblationMode::Norw => "norw",
        }
    }

    pub fn parse(s: &str) -> Result<AblationMode> {
        Ok(match s {
            "tuef" => AblationMode::Tuef,
            "bc" => AblationMode::Bc,
            "bm25" => AblationMode::Bm25,
            "nb" => AblationMode::Nb,
            "cb" => AblationMode::Cb,
            "sl" => AblationMode::Sl,
            "norw" => AblationMode::Norw,
            other => {
                return Err(Error::InvalidParam(format!(
                    "unknown ablation mode `{other}`"
                )))
            }
        })
    }

    pub fn all() -> [AblationMode; 7] {
        [
            AblationMode::Tuef,
            AblationMode::Bc,
            AblationMode::Bm25,
            AblationMode::Nb,
            AblationMode::Cb,
            AblationMode::Sl,
            AblationMode::Norw,
        ]
    }

    /// Does this mode train and apply the learned ranker?
    pub fn uses_ranker(&self) -> bool {
        !matches!(self, AblationMode::Bc | AblationMode::Bm25)
    }

    pub fn selection_mode(&self) -> SelectionMode {
        match self {
            AblationMode::Nb => SelectionMode::NetworkOnly,
            AblationMode::Cb => SelectionMode::ContentOnly,
            AblationMode::Norw => SelectionMode::NoRandomWalk,
            _ => SelectionMode::Full,
        }
    }

    pub fn feature_set(&self) -> FeatureSet {
        match self {
            AblationMode::Nb => FeatureSet::NetworkOnly,
            AblationMode::Cb => FeatureSet::ContentOnly,
            _ => FeatureSet::Full,
        }
    }
}

fn default_split_ratio() -> f64 {
    0.8
}
fn default_lambda() -> usize {
    10
}
fn default_k_min() -> usize {
    2
}
fn default_k_max() -> usize {
    10
}
fn default_epsilon() -> u64 {
    3
}
fn default_delta() -> f64 {
    0.5
}
fn default_beta() -> u64 {
    20
}
fn default_alpha() -> f64 {
    0.001
}
fn default_walks() -> u32 {
    5
}
fn default_steps() -> u32 {
    10
}
fn default_top_n() -> usize {
    1000
}
fn default_seed() -> u64 {
    42
}
fn default_mode() -> AblationMode {
    AblationMode::Tuef
}
fn default_ltr_tail() -> usize {
    50_000
}
fn default_tune_budget() -> usize {
    50
}
fn default_test_limit() -> usize {
    5000
}
fn default_posts_format() -> String {
    "jsonl".into()
}
fn default_tag_first() -> bool {
    true
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub posts_file: PathBuf,
    pub users_file: Option<PathBuf>,
    #[serde(default = "default_posts_format")]
    pub posts_format: String,
    pub artifacts_dir: PathBuf,
    #[serde(default = "default_split_ratio")]
    pub split_ratio: f64,
    #[serde(default = "default_lambda")]
    pub lambda: usize,
    #[serde(default = "default_k_min")]
    pub k_min: usize,
    #[serde(default = "default_k_max")]
    pub k_max: usize,
    #[serde(default = "default_epsilon")]
    pub epsilon: u64,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default = "default_beta")]
    pub beta: u64,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_walks")]
    pub walks_per_expert: u32,
    #[serde(default = "default_steps")]
    pub walk_steps: u32,
    #[serde(default = "default_top_n")]
    pub top_n_retrieval: usize,
    #[serde(default = "default_tag_first")]
    pub tag_first: bool,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_mode")]
    pub mode: AblationMode,
    /// How many of the newest training questions feed the LtR dataset.
    #[serde(default = "default_ltr_tail")]
    pub ltr_tail_queries: usize,
    /// Random-search budget; 0 trains once with `hyperparams`.
    #[serde(default = "default_tune_budget")]
    pub tune_budget: usize,
    #[serde(default)]
    pub hyperparams: HyperParams,
    /// Evaluate on the first N eligible test queries.
    #[serde(default = "default_test_limit")]
    pub test_query_limit: usize,
}

impl PipelineConfig {
    /// A config rooted in `dir` with the published default parameters.
    pub fn with_dirs(posts_file: PathBuf, artifacts_dir: PathBuf) -> PipelineConfig {
        PipelineConfig {
            posts_file,
            users_file: None,
            posts_format: default_posts_format(),
            artifacts_dir,
            split_ratio: default_split_ratio(),
            lambda: default_lambda(),
            k_min: default_k_min(),
            k_max: default_k_max(),
            epsilon: default_epsilon(),
            delta: default_delta(),
            beta: default_beta(),
            alpha: default_alpha(),
            walks_per_expert: default_walks(),
            walk_steps: default_steps(),
            top_n_retrieval: default_top_n(),
            tag_first: default_tag_first(),
            seed: default_seed(),
            mode: default_mode(),
            ltr_tail_queries: default_ltr_tail(),
            tune_budget: default_tune_budget(),
            hyperparams: HyperParams::default(),
            test_query_limit: default_test_limit(),
        }
    }

    pub fn load(path: &Path) -> Result<PipelineConfig> {
        let text = std::fs::read_to_string(path)?;
        toml::from_str(&text).map_err(|e| Error::InvalidParam(format!("bad config file: {e}")))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = toml::to_string_pretty(self)
            .map_err(|e| Error::InvalidParam(format!("cannot serialize config: {e}")))?;
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn selection_config(&self) -> SelectionConfig {
        SelectionConfig {
            alpha: self.alpha,
            walks_per_expert: self.walks_per_expert,
            walk_steps: self.walk_steps,
            top_n_retrieval: self.top_n_retrieval,
            rng_seed: self.seed,
            mode: self.mode.selection_mode(),
            tag_first: self.tag_first,
        }
    }

    /// Stable hash of the full configuration, embedded in every artifact.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(json.as_bytes());
        let mut hex = String::with_capacity(16);
        for byte in digest.iter().take(8) {
            hex.push_str(&format!("{byte:02x}"));
        }
        hex
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base() -> PipelineConfig {
        PipelineConfig::with_dirs(PathBuf::from("posts.jsonl"), PathBuf::from("artifacts"))
    }

    #[test]
    fn defaults_match_published_parameters() {
        let cfg = base();
        assert_eq!(cfg.lambda, 10);
        assert_eq!(cfg.epsilon, 3);
        assert_eq!(cfg.delta, 0.5);
        assert_eq!(cfg.beta, 20);
        assert_eq!(cfg.alpha, 0.001);
        assert_eq!(cfg.walks_per_expert, 5);
        assert_eq!(cfg.walk_steps, 10);
        assert_eq!(cfg.top_n_retrieval, 1000);
    }

    #[test]
    fn hash_changes_with_parameters() {
        let a = base();
        let mut b = base();
        b.beta = 5;
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash(), base().hash());
        assert_eq!(a.hash().len(), 16);
    }

    #[test]
    fn toml_roundtrip() {
        let cfg = base();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("config.toml");
        cfg.save(&path).unwrap();
        let loaded = PipelineConfig::load(&path).unwrap();
        assert_eq!(cfg.hash(), loaded.hash());
    }

    #[test]
    fn mode_parsing() {
        assert_eq!(AblationMode::parse("tuef").unwrap(), AblationMode::Tuef);
        assert_eq!(AblationMode::parse("norw").unwrap(), AblationMode::Norw);
        assert!(AblationMode::parse("bogus").is_err());
        for mode in AblationMode::all() {
            assert_eq!(AblationMode::parse(mode.as_str()).unwrap(), mode);
        }
    }
}
