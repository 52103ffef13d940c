//! Candidate expert selection for an incoming question.
//!
//! Per layer the question belongs to, two pipelines run: the network pipeline
//! sorts the layer's experts by betweenness, the content pipeline orders them
//! by merged BM25 retrieval. Each sorted list is scanned by the collection
//! rule (`p ← p·(1−μ_u)` until `p ≤ α`), then weighted random walks expand
//! the collected set. Visited experts join the candidate pool; non-expert
//! nodes are transit only.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::centrality::CentralityTable;
use crate::error::{Error, Result};
use crate::experts::ExpertSet;
use crate::ingest::{PostId, Question, UserId, UserStats};
use crate::mlg::{layers_of, Layer, MultiLayerGraph};
use crate::par;
use crate::retrieval::{bm25_query, content_order, InvertedIndex, RankedQuestions};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionMode {
    Full,
    NetworkOnly,
    ContentOnly,
    NoRandomWalk,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SelectionConfig {
    /// Collection stops once the no-answer probability drops to this value.
    pub alpha: f64,
    pub walks_per_expert: u32,
    pub walk_steps: u32,
    pub top_n_retrieval: usize,
    pub rng_seed: u64,
    pub mode: SelectionMode,
    /// Which retrieval list leads the alternating merge.
    pub tag_first: bool,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        SelectionConfig {
            alpha: 0.001,
            walks_per_expert: 5,
            walk_steps: 10,
            top_n_retrieval: 1000,
            rng_seed: 42,
            mode: SelectionMode::Full,
            tag_first: true,
        }
    }
}

impl SelectionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidParam(format!(
                "alpha must be in (0,1), got {}",
                self.alpha
            )));
        }
        if self.top_n_retrieval == 0 {
            return Err(Error::InvalidParam("top_n_retrieval must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Network,
    Content,
}

/// Per (layer, method, expert) discovery record.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TraceRecord {
    pub layer: usize,
    pub method: Method,
    pub expert: UserId,
    /// 1-based position in the sorted list for collected experts; collection
    /// length + walk step for walk-discovered experts.
    pub steps: u32,
    /// Times encountered across collection and walks.
    pub visit_count: u32,
    pub discovered_in_collection: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InitialSet {
    pub layer: usize,
    pub method: Method,
    pub experts: Vec<UserId>,
    /// No-answer probability when collection stopped.
    pub final_p: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CandidateSet {
    pub query_id: PostId,
    pub layers_used: Vec<usize>,
    /// Set when the question's tags mapped to no layer and the content
    /// pipeline ran over all layers instead.
    pub fallback_all_layers: bool,
    pub initial_sets: Vec<InitialSet>,
    pub candidates: BTreeSet<UserId>,
    /// Experts selected per layer (union over methods), for feature scoping.
    pub per_layer_candidates: BTreeMap<usize, BTreeSet<UserId>>,
    pub trace: Vec<TraceRecord>,
}

impl CandidateSet {
    /// Index the trace by (layer, method, expert).
    pub fn trace_lookup(&self) -> HashMap<(usize, Method, UserId), &TraceRecord> {
        self.trace
            .iter()
            .map(|r| ((r.layer, r.method, r.expert), r))
            .collect()
    }
}

/// Read-only bundle of the per-corpus artifacts selection draws from.
pub struct SelectionContext<'a> {
    pub mlg: &'a MultiLayerGraph,
    pub tag_index: &'a InvertedIndex,
    pub text_index: &'a InvertedIndex,
    pub centralities: &'a [CentralityTable],
    pub experts: &'a ExpertSet,
    /// Training-split user stats (global answer counts for the μ smoothing).
    pub users: &'a BTreeMap<UserId, UserStats>,
}

pub struct SelectionOutput {
    pub candidates: CandidateSet,
    pub tag_results: RankedQuestions,
    pub text_results: RankedQuestions,
}

#[derive(Debug, Clone)]
pub struct CollectResult {
    pub collected: Vec<UserId>,
    pub final_p: f64,
    /// μ of each collected expert, in collection order.
    pub mus: Vec<f64>,
}

/// μ_u: the user's global acceptance ratio smoothed by their share of the
/// layer's activity (answers in the layer over the layer maximum).
fn mu(user: UserId, layer: &Layer, users: &BTreeMap<UserId, UserStats>) -> f64 {
    let ratio = users.get(&user).map(UserStats::ratio).unwrap_or(0.0);
    if layer.max_answers_in_layer == 0 {
        return 0.0;
    }
    let activity = layer.answers_in_layer.get(&user).copied().unwrap_or(0) as f64
        / layer.max_answers_in_layer as f64;
    ratio * activity
}

/// Scan the sorted expert list, multiplying the no-answer probability by
/// `1 − μ_u` for every collected expert, until it reaches `alpha` or the
/// list is exhausted. The expert that pushes `p` to `alpha` is included.
pub fn collect(
    sorted_experts: &[UserId],
    layer: &Layer,
    users: &BTreeMap<UserId, UserStats>,
    alpha: f64,
) -> CollectResult {
    let mut p = 1.0;
    let mut collected = Vec::new();
    let mut mus = Vec::new();
    for &u in sorted_experts {
        let mu_u = mu(u, layer, users);
        collected.push(u);
        mus.push(mu_u);
        p *= 1.0 - mu_u;
        if p <= alpha {
            break;
        }
    }
    CollectResult {
        collected,
        final_p: p,
        mus,
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Deterministic per-walk seed, independent of layer/method iteration order.
fn walk_seed(parts: &[u64]) -> u64 {
    let mut acc = 0x243f_6a88_85a3_08d3u64;
    for &p in parts {
        acc = splitmix64(acc ^ p);
    }
    acc
}

/// Move to a neighbor with probability proportional to its edge weight.
fn weighted_step(neighbors: &[(UserId, f64)], rng: &mut ChaCha8Rng) -> Option<UserId> {
    if neighbors.is_empty() {
        return None;
    }
    let total: f64 = neighbors.iter().map(|(_, w)| w).sum();
    if total <= 0.0 {
        return None;
    }
    let mut target = rng.random::<f64>() * total;
    for &(v, w) in neighbors {
        target -= w;
        if target <= 0.0 {
            return Some(v);
        }
    }
    Some(neighbors.last().unwrap().0)
}

struct MethodOutcome {
    initial: InitialSet,
    trace: Vec<TraceRecord>,
}

/// Run collection plus (optionally) random walks for one (layer, method).
#[allow(clippy::too_many_arguments)]
fn run_method_pipeline(
    query_id: PostId,
    layer: &Layer,
    method: Method,
    sorted_experts: &[UserId],
    users: &BTreeMap<UserId, UserStats>,
    cfg: &SelectionConfig,
    do_walks: bool,
) -> MethodOutcome {
    let result = collect(sorted_experts, layer, users, cfg.alpha);
    let collected_len = result.collected.len() as u32;

    let mut state: BTreeMap<UserId, TraceRecord> = BTreeMap::new();
    for (pos, &u) in result.collected.iter().enumerate() {
        state.insert(
            u,
            TraceRecord {
                layer: layer.layer_id,
                method,
                expert: u,
                steps: pos as u32 + 1,
                visit_count: 1,
                discovered_in_collection: true,
            },
        );
    }

    if do_walks && cfg.walks_per_expert > 0 && cfg.walk_steps > 0 {
        let method_tag = match method {
            Method::Network => 1u64,
            Method::Content => 2u64,
        };
        for (start_idx, &start) in result.collected.iter().enumerate() {
            for walk in 0..cfg.walks_per_expert {
                let seed = walk_seed(&[
                    cfg.rng_seed,
                    query_id,
                    layer.layer_id as u64,
                    method_tag,
                    start_idx as u64,
                    walk as u64,
                ]);
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let mut current = start;
                for step in 1..=cfg.walk_steps {
                    let Some(next) = weighted_step(layer.neighbors(current), &mut rng) else {
                        break;
                    };
                    current = next;
                    if layer.is_expert.get(&current).copied().unwrap_or(false) {
                        state
                            .entry(current)
                            .or_insert_with(|| TraceRecord {
                                layer: layer.layer_id,
                                method,
                                expert: current,
                                steps: collected_len + step,
                                visit_count: 0,
                                discovered_in_collection: false,
                            })
                            .visit_count += 1;
                    }
                }
            }
        }
    }

    MethodOutcome {
        initial: InitialSet {
            layer: layer.layer_id,
            method,
            experts: result.collected,
            final_p: result.final_p,
        },
        trace: state.into_values().collect(),
    }
}

/// Select candidate experts for a question: determine its layers, run the
/// network and content pipelines per layer (subject to `cfg.mode`), and union
/// the discovered experts. Per-layer pipelines run in parallel; results are
/// merged in a fixed order, so the output is bit-reproducible given the seed.
pub fn select_candidates(
    question: &Question,
    ctx: &SelectionContext,
    cfg: &SelectionConfig,
) -> Result<SelectionOutput> {
    cfg.validate()?;
    let tag_results = bm25_query(
        ctx.tag_index,
        &ctx.tag_index.query_tokens(question),
        cfg.top_n_retrieval,
    );
    let text_results = bm25_query(
        ctx.text_index,
        &ctx.text_index.query_tokens(question),
        cfg.top_n_retrieval,
    );

    let mapped = layers_of(&question.tags, &ctx.mlg.clustering);
    let fallback_all_layers = mapped.is_empty();
    let layers_used: Vec<usize> = if fallback_all_layers {
        (0..ctx.mlg.layers.len()).collect()
    } else {
        mapped.into_iter().collect()
    };

    let do_walks = !matches!(cfg.mode, SelectionMode::NoRandomWalk);
    let run_network = matches!(cfg.mode, SelectionMode::Full | SelectionMode::NoRandomWalk)
        || cfg.mode == SelectionMode::NetworkOnly;
    let run_content = matches!(cfg.mode, SelectionMode::Full | SelectionMode::NoRandomWalk)
        || cfg.mode == SelectionMode::ContentOnly;

    let jobs: Vec<(usize, Method)> = layers_used
        .iter()
        .flat_map(|&layer| {
            let mut methods = Vec::new();
            // The all-layers fallback runs the content pipeline only.
            if run_network && !fallback_all_layers {
                methods.push((layer, Method::Network));
            }
            if run_content {
                methods.push((layer, Method::Content));
            }
            methods
        })
        .collect();

    let outcomes: Vec<MethodOutcome> = par::map_collect(&jobs, |&(layer_id, method)| {
        let layer = &ctx.mlg.layers[layer_id];
        let sorted = match method {
            Method::Network => ctx.centralities[layer_id].experts_by_betweenness(),
            Method::Content => content_order(&tag_results, &text_results, layer, cfg.tag_first),
        };
        run_method_pipeline(
            question.id,
            layer,
            method,
            &sorted,
            ctx.users,
            cfg,
            do_walks,
        )
    });

    let mut candidates = BTreeSet::new();
    let mut per_layer_candidates: BTreeMap<usize, BTreeSet<UserId>> = BTreeMap::new();
    let mut initial_sets = Vec::new();
    let mut trace = Vec::new();
    for outcome in outcomes {
        let layer_entry = per_layer_candidates
            .entry(outcome.initial.layer)
            .or_default();
        for record in &outcome.trace {
            candidates.insert(record.expert);
            layer_entry.insert(record.expert);
        }
        initial_sets.push(outcome.initial);
        trace.extend(outcome.trace);
    }
    per_layer_candidates.retain(|_, set| !set.is_empty());

    Ok(SelectionOutput {
        candidates: CandidateSet {
            query_id: question.id,
            layers_used,
            fallback_all_layers,
            initial_sets,
            candidates,
            per_layer_candidates,
            trace,
        },
        tag_results,
        text_results,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stats(accepted: u64, answers: u64) -> UserStats {
        UserStats {
            answers,
            accepted,
            reputation: 0,
            answer_ts: vec![0; answers as usize],
        }
    }

    fn uniform_layer(users: &[UserId]) -> Layer {
        // All members share the same in-layer activity, so the smoothing
        // factor is 1 and μ equals the global acceptance ratio.
        Layer::from_edges(0, users.to_vec(), &[])
    }

    #[test]
    fn absorbing_expert_stops_collection_immediately() {
        let layer = uniform_layer(&[1, 2, 3]);
        let users: BTreeMap<UserId, UserStats> =
            [(1, stats(5, 5)), (2, stats(5, 10)), (3, stats(5, 10))]
                .into_iter()
                .collect();
        let result = collect(&[1, 2, 3], &layer, &users, 0.001);
        assert_eq!(result.collected, vec![1]);
        assert_eq!(result.final_p, 0.0);
    }

    #[test]
    fn uniform_half_mu_collects_exactly_ten() {
        let ids: Vec<UserId> = (1..=20).collect();
        let layer = uniform_layer(&ids);
        let users: BTreeMap<UserId, UserStats> =
            ids.iter().map(|&u| (u, stats(1, 2))).collect();
        let result = collect(&ids, &layer, &users, 0.001);
        // 0.5^10 ≈ 0.000977 <= 0.001 < 0.5^9
        assert_eq!(result.collected.len(), 10);
        assert!((result.final_p - 0.5f64.powi(10)).abs() < 1e-15);
    }

    #[test]
    fn low_mu_exhausts_list() {
        let ids = vec![1, 2, 3];
        let layer = uniform_layer(&ids);
        let users: BTreeMap<UserId, UserStats> =
            ids.iter().map(|&u| (u, stats(1, 10))).collect();
        let result = collect(&ids, &layer, &users, 0.001);
        assert_eq!(result.collected.len(), 3);
        assert!((result.final_p - 0.9f64.powi(3)).abs() < 1e-12);
    }

    #[test]
    fn final_p_equals_product_of_one_minus_mu() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let n = rng.random_range(1..30usize);
            let ids: Vec<UserId> = (1..=n as u64).collect();
            let layer = uniform_layer(&ids);
            let users: BTreeMap<UserId, UserStats> = ids
                .iter()
                .map(|&u| {
                    let answers = rng.random_range(1..50u64);
                    let accepted = rng.random_range(0..=answers);
                    (u, stats(accepted, answers))
                })
                .collect();
            let result = collect(&ids, &layer, &users, 0.001);
            let product: f64 = result.mus.iter().map(|m| 1.0 - m).product();
            assert!((result.final_p - product).abs() < 1e-12);
            for m in &result.mus {
                assert!((0.0..=1.0).contains(m));
            }
        }
    }

    fn two_neighbor_layer() -> Layer {
        // start node 1 with neighbors 2 (w=0.9) and 3 (w=0.1)
        Layer::from_edges(0, vec![1, 2, 3], &[(1, 2, 0.9), (1, 3, 0.1)])
    }

    #[test]
    fn walk_transition_frequencies_match_weights() {
        let layer = two_neighbor_layer();
        let users: BTreeMap<UserId, UserStats> = [(1, stats(5, 5))].into_iter().collect();
        let cfg = SelectionConfig {
            walks_per_expert: 10_000,
            walk_steps: 1,
            rng_seed: 7,
            ..SelectionConfig::default()
        };
        let outcome = run_method_pipeline(1, &layer, Method::Network, &[1], &users, &cfg, true);
        let visits: BTreeMap<UserId, u32> = outcome
            .trace
            .iter()
            .filter(|r| !r.discovered_in_collection)
            .map(|r| (r.expert, r.visit_count))
            .collect();
        let total = 10_000.0;
        let freq2 = visits[&2] as f64 / total;
        let freq3 = visits[&3] as f64 / total;
        assert!((freq2 - 0.9).abs() < 0.02, "freq2 = {freq2}");
        assert!((freq3 - 0.1).abs() < 0.02, "freq3 = {freq3}");
    }

    #[test]
    fn isolated_start_node_adds_no_candidates() {
        let layer = uniform_layer(&[1, 2]);
        let users: BTreeMap<UserId, UserStats> = [(1, stats(5, 5))].into_iter().collect();
        let cfg = SelectionConfig::default();
        let outcome = run_method_pipeline(1, &layer, Method::Network, &[1], &users, &cfg, true);
        assert_eq!(outcome.initial.experts, vec![1]);
        assert_eq!(outcome.trace.len(), 1); // only the collected expert
    }

    #[test]
    fn chain_far_node_reachable_with_paper_walk_defaults() {
        // chain 1 - 2 - 3, all experts, start at 1
        let layer = Layer::from_edges(0, vec![1, 2, 3], &[(1, 2, 1.0), (2, 3, 1.0)]);
        let users: BTreeMap<UserId, UserStats> = [(1, stats(9, 9))].into_iter().collect();
        let cfg = SelectionConfig {
            walks_per_expert: 5,
            walk_steps: 10,
            rng_seed: 42,
            ..SelectionConfig::default()
        };
        let outcome = run_method_pipeline(1, &layer, Method::Network, &[1], &users, &cfg, true);
        let discovered: BTreeSet<UserId> = outcome.trace.iter().map(|r| r.expert).collect();
        assert!(discovered.contains(&3), "far node not reached: {discovered:?}");
    }

    #[test]
    fn walk_discovery_steps_offset_by_collection_length() {
        let layer = Layer::from_edges(0, vec![1, 2], &[(1, 2, 1.0)]);
        let users: BTreeMap<UserId, UserStats> = [(1, stats(9, 9))].into_iter().collect();
        let cfg = SelectionConfig {
            walks_per_expert: 1,
            walk_steps: 3,
            rng_seed: 1,
            ..SelectionConfig::default()
        };
        // Collection stops after user 1 (μ=1); user 2 is found on walk step 1.
        let outcome = run_method_pipeline(1, &layer, Method::Network, &[1], &users, &cfg, true);
        let rec2 = outcome.trace.iter().find(|r| r.expert == 2).unwrap();
        assert!(!rec2.discovered_in_collection);
        assert_eq!(rec2.steps, 1 + 1);
        assert!(rec2.visit_count >= 1);
    }
}
