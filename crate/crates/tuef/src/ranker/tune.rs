//! Hyperparameters and random-search tuning on validation MRR.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::dataset::LtrDataset;
use super::train_lambdamart;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    pub learning_rate: f64,
    pub num_leaves: usize,
    pub n_estimators: usize,
    pub max_depth: usize,
    pub min_data_in_leaf: usize,
}

impl Default for HyperParams {
    /// Desk-scale defaults for small corpora; the tuner samples the
    /// published ranges instead.
    fn default() -> Self {
        HyperParams {
            learning_rate: 0.1,
            num_leaves: 31,
            n_estimators: 100,
            max_depth: 8,
            min_data_in_leaf: 20,
        }
    }
}

/// Search ranges: learning_rate ∈ [0.0001, 0.15] (log-uniform),
/// num_leaves ∈ [50, 200], n_estimators ∈ [50, 150], max_depth ∈ [8, 15],
/// min_data_in_leaf ∈ [150, 500].
pub const LEARNING_RATE_RANGE: (f64, f64) = (0.0001, 0.15);
pub const NUM_LEAVES_RANGE: (usize, usize) = (50, 200);
pub const N_ESTIMATORS_RANGE: (usize, usize) = (50, 150);
pub const MAX_DEPTH_RANGE: (usize, usize) = (8, 15);
pub const MIN_DATA_IN_LEAF_RANGE: (usize, usize) = (150, 500);

impl HyperParams {
    /// One random draw from the search ranges.
    pub fn sample(rng: &mut ChaCha8Rng) -> HyperParams {
        let (lo, hi) = LEARNING_RATE_RANGE;
        let learning_rate = (lo.ln() + rng.random::<f64>() * (hi.ln() - lo.ln())).exp();
        HyperParams {
            learning_rate,
            num_leaves: rng.random_range(NUM_LEAVES_RANGE.0..=NUM_LEAVES_RANGE.1),
            n_estimators: rng.random_range(N_ESTIMATORS_RANGE.0..=N_ESTIMATORS_RANGE.1),
            max_depth: rng.random_range(MAX_DEPTH_RANGE.0..=MAX_DEPTH_RANGE.1),
            min_data_in_leaf: rng
                .random_range(MIN_DATA_IN_LEAF_RANGE.0..=MIN_DATA_IN_LEAF_RANGE.1),
        }
    }

    /// Midpoint of every search range (learning rate: arithmetic midpoint).
    pub fn range_midpoints() -> HyperParams {
        HyperParams {
            learning_rate: (LEARNING_RATE_RANGE.0 + LEARNING_RATE_RANGE.1) / 2.0,
            num_leaves: (NUM_LEAVES_RANGE.0 + NUM_LEAVES_RANGE.1) / 2,
            n_estimators: (N_ESTIMATORS_RANGE.0 + N_ESTIMATORS_RANGE.1) / 2,
            max_depth: (MAX_DEPTH_RANGE.0 + MAX_DEPTH_RANGE.1) / 2,
            min_data_in_leaf: (MIN_DATA_IN_LEAF_RANGE.0 + MIN_DATA_IN_LEAF_RANGE.1) / 2,
        }
    }

    pub fn in_search_ranges(&self) -> bool {
        let (lo, hi) = LEARNING_RATE_RANGE;
        (lo..=hi).contains(&self.learning_rate)
            && (NUM_LEAVES_RANGE.0..=NUM_LEAVES_RANGE.1).contains(&self.num_leaves)
            && (N_ESTIMATORS_RANGE.0..=N_ESTIMATORS_RANGE.1).contains(&self.n_estimators)
            && (MAX_DEPTH_RANGE.0..=MAX_DEPTH_RANGE.1).contains(&self.max_depth)
            && (MIN_DATA_IN_LEAF_RANGE.0..=MIN_DATA_IN_LEAF_RANGE.1)
                .contains(&self.min_data_in_leaf)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TuneTrial {
    pub hyperparams: HyperParams,
    pub validation_mrr: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TuneOutcome {
    pub best: HyperParams,
    pub best_mrr: f64,
    pub trials: Vec<TuneTrial>,
}

/// Random search over the ranges: train once per draw, keep the draw with
/// the best validation MRR (ties go to the earlier draw).
pub fn tune_hyperparams(
    train: &LtrDataset,
    validation: &LtrDataset,
    budget: usize,
    seed: u64,
) -> Result<TuneOutcome> {
    if budget < 1 {
        return Err(Error::InvalidParam("tuning budget must be >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut trials = Vec::with_capacity(budget);
    let mut best: Option<(usize, f64)> = None;
    for i in 0..budget {
        let hp = HyperParams::sample(&mut rng);
        let model = train_lambdamart(train, validation, &hp, seed)?;
        let mrr = model
            .metadata
            .validation_mrr_curve
            .get(model.metadata.best_iteration)
            .copied()
            .unwrap_or(0.0);
        trials.push(TuneTrial {
            hyperparams: hp,
            validation_mrr: mrr,
        });
        let better = match best {
            None => true,
            Some((_, best_mrr)) => mrr > best_mrr,
        };
        if better {
            best = Some((i, mrr));
        }
    }
    let (idx, best_mrr) = best.unwrap();
    Ok(TuneOutcome {
        best: trials[idx].hyperparams,
        best_mrr,
        trials,
    })
}
