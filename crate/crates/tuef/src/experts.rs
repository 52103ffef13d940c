//! Expert identification: accepted-answer threshold plus acceptance-ratio
//! filter over the candidate pool.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{Dataset, UserId};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExpertSet {
    pub beta: u64,
    /// Users with at least `beta` accepted answers.
    pub candidates: BTreeSet<UserId>,
    /// Mean acceptance ratio over the candidates.
    pub mean_ratio: f64,
    /// Candidates whose ratio strictly exceeds the mean.
    pub experts: BTreeSet<UserId>,
    pub ratios: BTreeMap<UserId, f64>,
    /// Set when the strict filter left the expert set empty (for example a
    /// single candidate, whose ratio can never exceed the mean).
    pub warning: Option<String>,
}

impl ExpertSet {
    pub fn is_expert(&self, user: UserId) -> bool {
        self.experts.contains(&user)
    }
}

pub fn identify_experts(train: &Dataset, beta: u64) -> Result<ExpertSet> {
    if beta < 1 {
        return Err(Error::InvalidParam("beta must be >= 1".into()));
    }
    let mut candidates = BTreeSet::new();
    let mut ratios = BTreeMap::new();
    for (&uid, stats) in &train.users {
        if stats.accepted >= beta {
            candidates.insert(uid);
            ratios.insert(uid, stats.ratio());
        }
    }
    if candidates.is_empty() {
        return Err(Error::EmptyCandidates { beta });
    }
    let mean_ratio = ratios.values().sum::<f64>() / ratios.len() as f64;
    let experts: BTreeSet<UserId> = ratios
        .iter()
        .filter(|(_, &r)| r > mean_ratio)
        .map(|(&u, _)| u)
        .collect();
    let warning = if experts.is_empty() {
        Some(format!(
            "no candidate has acceptance ratio above the mean {mean_ratio:.4}; \
             expert set is empty (candidates: {})",
            candidates.len()
        ))
    } else {
        None
    };
    Ok(ExpertSet {
        beta,
        candidates,
        mean_ratio,
        experts,
        ratios,
        warning,
    })
}
