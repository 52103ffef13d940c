//! Per-layer node centralities.
//!
//! Betweenness is exact Brandes over the unweighted topology (edge weights
//! are similarities, not distances), endpoints excluded, unordered pair
//! counts. PageRank and eigenvector centrality use the edge weights; closeness
//! is harmonic on unweighted hops. Everything is computed once per layer at
//! build time and cached with the graph artifact.

use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::ingest::UserId;
use crate::mlg::Layer;
use crate::par;

pub const PAGERANK_DAMPING: f64 = 0.85;
pub const PAGERANK_TOL: f64 = 1e-8;
const PAGERANK_MAX_ITERS: usize = 200;
pub const EIGENVECTOR_TOL: f64 = 1e-8;
const EIGENVECTOR_MAX_ITERS: usize = 1_000;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CentralityTable {
    pub layer_id: usize,
    pub betweenness: BTreeMap<UserId, f64>,
    pub eigenvector: BTreeMap<UserId, f64>,
    pub pagerank: BTreeMap<UserId, f64>,
    pub closeness: BTreeMap<UserId, f64>,
    pub degree: BTreeMap<UserId, f64>,
    pub avg_weight: BTreeMap<UserId, f64>,
    /// Rank of each expert by betweenness, 1 = highest. Ties break by id.
    pub betweenness_rank: BTreeMap<UserId, usize>,
    /// False when power iteration hit the iteration cap; scores are then 0.
    pub eigenvector_converged: bool,
}

impl CentralityTable {
    /// Expert nodes of the layer sorted by betweenness, highest first.
    pub fn experts_by_betweenness(&self) -> Vec<UserId> {
        let mut order: Vec<(usize, UserId)> = self
            .betweenness_rank
            .iter()
            .map(|(&u, &r)| (r, u))
            .collect();
        order.sort_unstable();
        order.into_iter().map(|(_, u)| u).collect()
    }
}

/// Exact unweighted betweenness over all nodes of the layer; unordered pair
/// counts with endpoints excluded. Empty layers produce an empty map.
pub fn betweenness_scores(layer: &Layer) -> BTreeMap<UserId, f64> {
    let nodes = &layer.nodes;
    let n = nodes.len();
    if n == 0 {
        return BTreeMap::new();
    }
    let index: BTreeMap<UserId, usize> = nodes.iter().enumerate().map(|(i, &u)| (u, i)).collect();
    let adj: Vec<Vec<usize>> = nodes
        .iter()
        .map(|u| {
            layer
                .neighbors(*u)
                .iter()
                .map(|(v, _)| index[v])
                .collect()
        })
        .collect();

    let scores = par::accumulate_chunked(n, n, |sources| {
        let mut acc = vec![0.0; n];
        for s in sources {
            brandes_from_source(s, &adj, &mut acc);
        }
        acc
    });

    nodes
        .iter()
        .enumerate()
        // Each unordered pair is visited from both endpoints.
        .map(|(i, &u)| (u, scores[i] / 2.0))
        .collect()
}

/// One Brandes source: BFS, then dependency back-propagation.
fn brandes_from_source(s: usize, adj: &[Vec<usize>], acc: &mut [f64]) {
    let n = adj.len();
    let mut stack = Vec::with_capacity(n);
    let mut predecessors: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut sigma = vec![0.0f64; n];
    let mut dist = vec![-1i64; n];
    sigma[s] = 1.0;
    dist[s] = 0;
    let mut queue = VecDeque::new();
    queue.push_back(s);
    while let Some(v) = queue.pop_front() {
        stack.push(v);
        for &w in &adj[v] {
            if dist[w] < 0 {
                dist[w] = dist[v] + 1;
                queue.push_back(w);
            }
            if dist[w] == dist[v] + 1 {
                sigma[w] += sigma[v];
                predecessors[w].push(v);
            }
        }
    }
    let mut delta = vec![0.0f64; n];
    while let Some(w) = stack.pop() {
        for &v in &predecessors[w] {
            delta[v] += (sigma[v] / sigma[w]) * (1.0 + delta[w]);
        }
        if w != s {
            acc[w] += delta[w];
        }
    }
}

/// Full centrality table for one layer: betweenness plus weighted PageRank,
/// weighted eigenvector centrality, harmonic closeness, degree, and mean
/// incident edge weight.
pub fn auxiliary_centralities(layer: &Layer) -> CentralityTable {
    let nodes = &layer.nodes;
    let index: BTreeMap<UserId, usize> = nodes.iter().enumerate().map(|(i, &u)| (u, i)).collect();
    let adj: Vec<Vec<(usize, f64)>> = nodes
        .iter()
        .map(|u| {
            layer
                .neighbors(*u)
                .iter()
                .map(|(v, w)| (index[v], *w))
                .collect()
        })
        .collect();

    let betweenness = betweenness_scores(layer);
    let pagerank_v = weighted_pagerank(&adj);
    let (eigen_v, eigenvector_converged) = weighted_eigenvector(&adj);
    let closeness_v = harmonic_closeness(&adj);

    let to_map = |values: &[f64]| -> BTreeMap<UserId, f64> {
        nodes
            .iter()
            .enumerate()
            .map(|(i, &u)| (u, values[i]))
            .collect()
    };

    let degree: BTreeMap<UserId, f64> = nodes
        .iter()
        .map(|&u| (u, layer.neighbors(u).len() as f64))
        .collect();
    let avg_weight: BTreeMap<UserId, f64> = nodes
        .iter()
        .map(|&u| {
            let nb = layer.neighbors(u);
            let mean = if nb.is_empty() {
                0.0
            } else {
                nb.iter().map(|(_, w)| w).sum::<f64>() / nb.len() as f64
            };
            (u, mean)
        })
        .collect();

    // Expert ranks by betweenness, ties by ascending id.
    let mut experts: Vec<UserId> = layer.expert_nodes();
    experts.sort_by(|a, b| {
        betweenness[b]
            .partial_cmp(&betweenness[a])
            .unwrap()
            .then(a.cmp(b))
    });
    let betweenness_rank: BTreeMap<UserId, usize> = experts
        .iter()
        .enumerate()
        .map(|(i, &u)| (u, i + 1))
        .collect();

    CentralityTable {
        layer_id: layer.layer_id,
        betweenness,
        eigenvector: to_map(&eigen_v),
        pagerank: to_map(&pagerank_v),
        closeness: to_map(&closeness_v),
        degree,
        avg_weight,
        betweenness_rank,
        eigenvector_converged,
    }
}

/// Weighted PageRank with uniform teleport; dangling mass is redistributed
/// uniformly, so the scores sum to 1.
fn weighted_pagerank(adj: &[Vec<(usize, f64)>]) -> Vec<f64> {
    let n = adj.len();
    if n == 0 {
        return Vec::new();
    }
    let out_weight: Vec<f64> = adj
        .iter()
        .map(|nb| nb.iter().map(|(_, w)| w).sum::<f64>())
        .collect();
    let mut x = vec![1.0 / n as f64; n];
    for _ in 0..PAGERANK_MAX_ITERS {
        let dangling: f64 = (0..n)
            .filter(|&i| out_weight[i] == 0.0)
            .map(|i| x[i])
            .sum();
        let base = (1.0 - PAGERANK_DAMPING) / n as f64
            + PAGERANK_DAMPING * dangling / n as f64;
        let next = par::map_range(n, |v| {
            let mut rank = base;
            for &(u, w) in &adj[v] {
                rank += PAGERANK_DAMPING * x[u] * w / out_weight[u];
            }
            rank
        });
        let diff: f64 = x.iter().zip(&next).map(|(a, b)| (a - b).abs()).sum();
        x = next;
        if diff < PAGERANK_TOL {
            break;
        }
    }
    x
}

/// Weighted eigenvector centrality via power iteration, L2-normalized.
/// Returns zeros with `false` if the iteration cap is hit.
fn weighted_eigenvector(adj: &[Vec<(usize, f64)>]) -> (Vec<f64>, bool) {
    let n = adj.len();
    if n == 0 {
        return (Vec::new(), true);
    }
    if adj.iter().all(|nb| nb.is_empty()) {
        return (vec![0.0; n], true);
    }
    let mut x = vec![1.0 / (n as f64).sqrt(); n];
    for _ in 0..EIGENVECTOR_MAX_ITERS {
        let mut next = par::map_range(n, |v| {
            adj[v].iter().map(|&(u, w)| x[u] * w).sum::<f64>()
        });
        let norm = next.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            return (vec![0.0; n], true);
        }
        for v in next.iter_mut() {
            *v /= norm;
        }
        let delta = x
            .iter()
            .zip(&next)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        x = next;
        if delta < EIGENVECTOR_TOL {
            return (x, true);
        }
    }
    (vec![0.0; n], false)
}

/// Harmonic closeness on unweighted hops: sum over reachable peers of 1/d.
fn harmonic_closeness(adj: &[Vec<(usize, f64)>]) -> Vec<f64> {
    let n = adj.len();
    par::map_range(n, |s| {
        let mut dist = vec![-1i64; n];
        dist[s] = 0;
        let mut queue = VecDeque::new();
        queue.push_back(s);
        let mut total = 0.0;
        while let Some(v) = queue.pop_front() {
            for &(w, _) in &adj[v] {
                if dist[w] < 0 {
                    dist[w] = dist[v] + 1;
                    total += 1.0 / dist[w] as f64;
                    queue.push_back(w);
                }
            }
        }
        total
    })
}
