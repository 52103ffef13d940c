//! Ranking metrics (P@1, NDCG@3, MRR, R@100, Hit@5), the paired significance
//! test, and side-by-side run comparison tables.
//!
//! Binary relevance with exactly one relevant expert per query (the accepted
//! answerer). The test-query filter — keep only questions whose best answerer
//! is in the expert set — lives here and runs before any model.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::experts::ExpertSet;
use crate::ingest::{Dataset, PostId, UserId};
use crate::stats::t_two_sided_p;

pub const SIGNIFICANCE_LEVEL: f64 = 0.05;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QueryRun {
    pub query_id: PostId,
    pub ranked: Vec<UserId>,
    pub relevant: UserId,
}

/// One system's rankings over a query set.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunResult {
    pub name: String,
    pub queries: Vec<QueryRun>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct PerQueryMetrics {
    pub p_at_1: Vec<f64>,
    pub ndcg_at_3: Vec<f64>,
    pub rr: Vec<f64>,
    pub r_at_100: Vec<f64>,
    pub hit_at_5: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub query_count: usize,
    pub p_at_1: f64,
    pub ndcg_at_3: f64,
    pub mrr: f64,
    pub r_at_100: f64,
    pub hit_at_5: f64,
    pub per_query: PerQueryMetrics,
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

/// Per-query metrics for a single ranking with one relevant expert.
fn query_metrics(ranked: &[UserId], relevant: UserId) -> (f64, f64, f64, f64, f64) {
    let rank = ranked.iter().position(|&u| u == relevant).map(|p| p + 1);
    match rank {
        Some(r) => {
            let p1 = if r == 1 { 1.0 } else { 0.0 };
            let ndcg3 = if r <= 3 {
                1.0 / ((r as f64 + 1.0).log2())
            } else {
                0.0
            };
            let rr = 1.0 / r as f64;
            let r100 = if r <= 100 { 1.0 } else { 0.0 };
            let hit5 = if r <= 5 { 1.0 } else { 0.0 };
            (p1, ndcg3, rr, r100, hit5)
        }
        None => (0.0, 0.0, 0.0, 0.0, 0.0),
    }
}

/// Compute the evaluation report for one run. Errors if a ranked list
/// contains duplicates or the relevant expert appears more than once.
pub fn compute_metrics(run: &RunResult) -> Result<EvalReport> {
    if run.queries.is_empty() {
        return Err(Error::InvalidRun("run contains no queries".into()));
    }
    let mut per = PerQueryMetrics::default();
    for q in &run.queries {
        let unique: BTreeSet<&UserId> = q.ranked.iter().collect();
        if unique.len() != q.ranked.len() {
            return Err(Error::InvalidRun(format!(
                "query {} has duplicate experts in its ranking",
                q.query_id
            )));
        }
        let (p1, ndcg3, rr, r100, hit5) = query_metrics(&q.ranked, q.relevant);
        per.p_at_1.push(p1);
        per.ndcg_at_3.push(ndcg3);
        per.rr.push(rr);
        per.r_at_100.push(r100);
        per.hit_at_5.push(hit5);
    }
    Ok(EvalReport {
        query_count: run.queries.len(),
        p_at_1: mean(&per.p_at_1),
        ndcg_at_3: mean(&per.ndcg_at_3),
        mrr: mean(&per.rr),
        r_at_100: mean(&per.r_at_100),
        hit_at_5: mean(&per.hit_at_5),
        per_query: per,
    })
}

/// Two-sided paired Student t-test. Zero variance of the differences is the
/// degenerate case: p = 1 when the means agree, p = 0 otherwise.
pub fn paired_ttest(per_query_a: &[f64], per_query_b: &[f64]) -> Result<f64> {
    if per_query_a.len() != per_query_b.len() {
        return Err(Error::InvalidRun(format!(
            "paired t-test length mismatch: {} vs {}",
            per_query_a.len(),
            per_query_b.len()
        )));
    }
    let n = per_query_a.len();
    if n < 2 {
        return Err(Error::InvalidRun(
            "paired t-test needs at least 2 observations".into(),
        ));
    }
    let diffs: Vec<f64> = per_query_a
        .iter()
        .zip(per_query_b)
        .map(|(a, b)| a - b)
        .collect();
    let mean_d = mean(&diffs);
    let var = diffs.iter().map(|d| (d - mean_d) * (d - mean_d)).sum::<f64>() / (n as f64 - 1.0);
    if var == 0.0 {
        return Ok(if mean_d == 0.0 { 1.0 } else { 0.0 });
    }
    let t = mean_d / (var / n as f64).sqrt();
    Ok(t_two_sided_p(t, n as f64 - 1.0))
}

/// Significance of a run against the baseline on one metric.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Marker {
    None,
    /// Significantly better than the baseline (p < 0.05).
    Better,
    /// Significantly worse than the baseline (p < 0.05).
    Worse,
}

impl Marker {
    fn symbol(&self) -> &'static str {
        match self {
            Marker::None => " ",
            Marker::Better => "▲",
            Marker::Worse => "▼",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub name: String,
    pub p_at_1: (f64, Marker),
    pub ndcg_at_3: (f64, Marker),
    pub r_at_100: (f64, Marker),
    pub mrr: (f64, Marker),
    pub hit_at_5: (f64, Marker),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub baseline: String,
    pub rows: Vec<ComparisonRow>,
}

impl ComparisonTable {
    /// Plain-text rendering with significance markers against the baseline.
    pub fn render(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "{:<14} {:>9} {:>9} {:>9} {:>9} {:>9}\n",
            "run", "P@1", "NDCG@3", "R@100", "MRR", "Hit@5"
        ));
        for row in &self.rows {
            let cell = |(v, m): (f64, Marker)| format!("{v:.3}{}", m.symbol());
            out.push_str(&format!(
                "{:<14} {:>9} {:>9} {:>9} {:>9} {:>9}\n",
                row.name,
                cell(row.p_at_1),
                cell(row.ndcg_at_3),
                cell(row.r_at_100),
                cell(row.mrr),
                cell(row.hit_at_5),
            ));
        }
        out.push_str(&format!(
            "markers: ▲/▼ = significantly better/worse than `{}` (paired t-test, p < {SIGNIFICANCE_LEVEL})\n",
            self.baseline
        ));
        out
    }
}

/// Compare named runs against a baseline run over the same query set.
pub fn compare_runs(runs: &[RunResult], baseline_name: &str) -> Result<ComparisonTable> {
    let baseline = runs
        .iter()
        .find(|r| r.name == baseline_name)
        .ok_or_else(|| Error::InvalidRun(format!("baseline run `{baseline_name}` not found")))?;
    let baseline_ids: Vec<PostId> = baseline.queries.iter().map(|q| q.query_id).collect();
    for run in runs {
        let ids: Vec<PostId> = run.queries.iter().map(|q| q.query_id).collect();
        if ids != baseline_ids {
            return Err(Error::InvalidRun(format!(
                "run `{}` covers a different query set than the baseline",
                run.name
            )));
        }
    }
    let baseline_report = compute_metrics(baseline)?;

    let mut rows = Vec::new();
    for run in runs {
        let report = compute_metrics(run)?;
        let marked = |value: f64,
                      baseline_value: f64,
                      per: &[f64],
                      base_per: &[f64]|
         -> Result<(f64, Marker)> {
            if run.name == baseline.name {
                return Ok((value, Marker::None));
            }
            let p = paired_ttest(per, base_per)?;
            let marker = if p < SIGNIFICANCE_LEVEL {
                if value > baseline_value {
                    Marker::Better
                } else {
                    Marker::Worse
                }
            } else {
                Marker::None
            };
            Ok((value, marker))
        };
        rows.push(ComparisonRow {
            name: run.name.clone(),
            p_at_1: marked(
                report.p_at_1,
                baseline_report.p_at_1,
                &report.per_query.p_at_1,
                &baseline_report.per_query.p_at_1,
            )?,
            ndcg_at_3: marked(
                report.ndcg_at_3,
                baseline_report.ndcg_at_3,
                &report.per_query.ndcg_at_3,
                &baseline_report.per_query.ndcg_at_3,
            )?,
            r_at_100: marked(
                report.r_at_100,
                baseline_report.r_at_100,
                &report.per_query.r_at_100,
                &baseline_report.per_query.r_at_100,
            )?,
            mrr: marked(
                report.mrr,
                baseline_report.mrr,
                &report.per_query.rr,
                &baseline_report.per_query.rr,
            )?,
            hit_at_5: marked(
                report.hit_at_5,
                baseline_report.hit_at_5,
                &report.per_query.hit_at_5,
                &baseline_report.per_query.hit_at_5,
            )?,
        });
    }
    Ok(ComparisonTable {
        baseline: baseline_name.to_string(),
        rows,
    })
}

/// Test-query filter: only questions whose best answerer is an expert,
/// ordered by (creation_ts, id).
pub fn filter_test_queries(test: &Dataset, experts: &ExpertSet) -> Vec<PostId> {
    let mut queries: Vec<(i64, PostId)> = test
        .questions
        .values()
        .filter(|q| {
            test.best_answerer(q.id)
                .map(|u| experts.is_expert(u))
                .unwrap_or(false)
        })
        .map(|q| (q.creation_ts, q.id))
        .collect();
    queries.sort_unstable();
    queries.into_iter().map(|(_, id)| id).collect()
}
