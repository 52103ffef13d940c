//! Gradient-boosted learning-to-rank: regression trees fit on LambdaRank
//! gradients, validation-MRR early stopping, versioned JSON model files.

pub mod dataset;
pub mod lambda;
pub mod tree;
mod tune;

use std::fs::File;
use std::io::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::UserId;
use crate::par;

pub use dataset::{
    build_ltr_dataset, load_ltr_dataset, save_ltr_dataset, LtrBuildReport, LtrDataset, LtrRow,
    LtrSplit, QueryGroup,
};
pub use lambda::{lambda_gradients, ndcg, reciprocal_rank, NDCG_TRUNCATION};
pub use tree::{Binner, GrowParams, Node, Tree};
pub use tune::{tune_hyperparams, HyperParams, TuneOutcome, TuneTrial};

pub const MODEL_VERSION: u32 = 1;

/// Boosting rounds without validation-MRR improvement before stopping.
pub const EARLY_STOP_ROUNDS: usize = 30;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelMetadata {
    pub seed: u64,
    pub hyperparams: HyperParams,
    /// Validation MRR after each boosting iteration (empty when no
    /// validation split was supplied).
    pub validation_mrr_curve: Vec<f64>,
    /// Training NDCG@3 after each boosting iteration.
    pub training_ndcg3_curve: Vec<f64>,
    /// Iteration whose trees the model keeps (inclusive).
    pub best_iteration: usize,
    /// Total split gain accumulated per feature.
    pub feature_gain: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RankerModel {
    pub version: u32,
    pub learning_rate: f64,
    pub feature_names: Vec<String>,
    pub trees: Vec<Tree>,
    pub metadata: ModelMetadata,
}

impl RankerModel {
    /// σ(x): the boosted score of one feature vector.
    pub fn score(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.feature_names.len() {
            return Err(Error::ArityMismatch {
                expected: self.feature_names.len(),
                got: x.len(),
            });
        }
        Ok(self.score_unchecked(x))
    }

    fn score_unchecked(&self, x: &[f64]) -> f64 {
        self.trees
            .iter()
            .map(|t| self.learning_rate * t.predict(x))
            .sum()
    }

    /// Per-feature split gain, highest first.
    pub fn feature_importance(&self) -> Vec<(String, f64)> {
        let mut pairs: Vec<(String, f64)> = self
            .feature_names
            .iter()
            .cloned()
            .zip(self.metadata.feature_gain.iter().copied())
            .collect();
        pairs.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
        pairs
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = File::create(path)?;
        serde_json::to_writer(&mut f, self)?;
        f.write_all(b"\n")?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<RankerModel> {
        let model: RankerModel = serde_json::from_reader(File::open(path)?)?;
        if model.version != MODEL_VERSION {
            return Err(Error::Artifact(format!(
                "unsupported model version {} (expected {MODEL_VERSION})",
                model.version
            )));
        }
        Ok(model)
    }
}

struct FlatGroups {
    features: Vec<Vec<f64>>,
    labels: Vec<u8>,
    /// (start, len) per query group.
    bounds: Vec<(usize, usize)>,
}

fn flatten(ds: &LtrDataset) -> FlatGroups {
    let mut features = Vec::with_capacity(ds.n_samples());
    let mut labels = Vec::with_capacity(ds.n_samples());
    let mut bounds = Vec::with_capacity(ds.groups.len());
    for group in &ds.groups {
        bounds.push((features.len(), group.rows.len()));
        for row in &group.rows {
            features.push(row.features.clone());
            labels.push(row.label);
        }
    }
    FlatGroups {
        features,
        labels,
        bounds,
    }
}

fn mean_validation_mrr(scores: &[f64], flat: &FlatGroups) -> f64 {
    if flat.bounds.is_empty() {
        return 0.0;
    }
    let per: Vec<f64> = flat
        .bounds
        .iter()
        .map(|&(start, len)| {
            lambda::reciprocal_rank(&scores[start..start + len], &flat.labels[start..start + len])
        })
        .collect();
    per.iter().sum::<f64>() / per.len() as f64
}

fn mean_training_ndcg3(scores: &[f64], flat: &FlatGroups) -> f64 {
    let per: Vec<f64> = flat
        .bounds
        .iter()
        .map(|&(start, len)| {
            lambda::ndcg(&scores[start..start + len], &flat.labels[start..start + len], 3)
        })
        .collect();
    per.iter().sum::<f64>() / per.len().max(1) as f64
}

/// Fit boosted trees on LambdaRank gradients. Training is deterministic (no
/// sampling); `seed` is recorded in the metadata. Early stopping watches
/// validation MRR and the returned model keeps the trees up to the best
/// iteration; with an empty validation set all `n_estimators` trees are kept.
pub fn train_lambdamart(
    train: &LtrDataset,
    validation: &LtrDataset,
    hp: &HyperParams,
    seed: u64,
) -> Result<RankerModel> {
    train.validate()?;
    if train.groups.is_empty() {
        return Err(Error::DegenerateDataset("empty training set".into()));
    }
    let has_label_variation = train
        .groups
        .iter()
        .any(|g| g.rows.iter().any(|r| r.label != g.rows[0].label));
    if !has_label_variation {
        return Err(Error::DegenerateDataset(
            "all labels equal in every query group".into(),
        ));
    }

    let flat = flatten(train);
    let n_features = train.arity();
    let binner = Binner::fit(&flat.features, n_features);
    if (0..n_features).all(|f| binner.n_bins(f) <= 1) {
        return Err(Error::DegenerateDataset(
            "identical feature vectors across all candidates".into(),
        ));
    }
    let binned = binner.bin_matrix(&flat.features);
    let flat_val = flatten(validation);

    let grow = GrowParams {
        num_leaves: hp.num_leaves.max(2),
        max_depth: hp.max_depth.max(1),
        min_data_in_leaf: hp.min_data_in_leaf.max(1),
    };

    let mut scores = vec![0.0f64; flat.labels.len()];
    let mut val_scores = vec![0.0f64; flat_val.labels.len()];
    let mut trees: Vec<Tree> = Vec::with_capacity(hp.n_estimators);
    let mut feature_gain = vec![0.0f64; n_features];
    let mut validation_mrr_curve = Vec::new();
    let mut training_ndcg3_curve = Vec::new();
    let mut best_iteration = 0usize;
    let mut best_mrr = f64::NEG_INFINITY;
    let mut stall = 0usize;
    let use_validation = !flat_val.bounds.is_empty();

    for iteration in 0..hp.n_estimators {
        // Per-group gradients, scattered back in fixed group order.
        let per_group: Vec<(Vec<f64>, Vec<f64>)> = par::map_collect(&flat.bounds, |&(start, len)| {
            lambda::lambda_gradients(
                &scores[start..start + len],
                &flat.labels[start..start + len],
                NDCG_TRUNCATION,
            )
        });
        let mut grad = vec![0.0f64; flat.labels.len()];
        let mut hess = vec![0.0f64; flat.labels.len()];
        for ((start, _), (g, h)) in flat.bounds.iter().zip(per_group) {
            grad[*start..*start + g.len()].copy_from_slice(&g);
            hess[*start..*start + h.len()].copy_from_slice(&h);
        }

        let grown = tree::grow_tree(&binned, &binner, &grad, &hess, &grow);
        for (acc, g) in feature_gain.iter_mut().zip(&grown.feature_gain) {
            *acc += g;
        }
        for (i, score) in scores.iter_mut().enumerate() {
            if let Node::Leaf { value } = grown.tree.nodes[grown.sample_leaf[i]] {
                *score += hp.learning_rate * value;
            }
        }
        let val_deltas = par::map_collect(&flat_val.features, |row| grown.tree.predict(row));
        for (score, delta) in val_scores.iter_mut().zip(val_deltas) {
            *score += hp.learning_rate * delta;
        }
        trees.push(grown.tree);

        training_ndcg3_curve.push(mean_training_ndcg3(&scores, &flat));
        if use_validation {
            let mrr = mean_validation_mrr(&val_scores, &flat_val);
            validation_mrr_curve.push(mrr);
            if mrr > best_mrr {
                best_mrr = mrr;
                best_iteration = iteration;
                stall = 0;
            } else {
                stall += 1;
                if stall >= EARLY_STOP_ROUNDS {
                    break;
                }
            }
        } else {
            best_iteration = iteration;
        }
    }

    trees.truncate(best_iteration + 1);
    Ok(RankerModel {
        version: MODEL_VERSION,
        learning_rate: hp.learning_rate,
        feature_names: train.feature_names.clone(),
        trees,
        metadata: ModelMetadata {
            seed,
            hyperparams: *hp,
            validation_mrr_curve,
            training_ndcg3_curve,
            best_iteration,
            feature_gain,
        },
    })
}

/// Score candidates with σ(x) and sort them best-first; ties break by
/// ascending expert id so the ranking is independent of input order.
pub fn score_and_rank(
    model: &RankerModel,
    candidates: &[(UserId, Vec<f64>)],
) -> Result<Vec<(UserId, f64)>> {
    let mut scored = Vec::with_capacity(candidates.len());
    for (user, features) in candidates {
        scored.push((*user, model.score(features)?));
    }
    scored.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    Ok(scored)
}
