//! The multi-layer graph: one independent layer per tag cluster, nodes are
//! users filtered by accepted-answer activity, edges are cosine similarities
//! between topic vectors.
//!
//! A question belongs to every layer one of its tags is assigned to, and
//! credits each of those layers once. Topic vectors are indexed by the
//! layer's tags minus the clustering feature tags, and normalized by the
//! user's total accepted answers across all layers.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::experts::ExpertSet;
use crate::ingest::{Dataset, UserId};
use crate::par;
use crate::topics::TagClustering;

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct TopicVector {
    /// Sparse tag → weight map; every weight is in [0, 1].
    pub weights: BTreeMap<String, f64>,
}

impl TopicVector {
    pub fn norm(&self) -> f64 {
        self.weights.values().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Cosine similarity; zero vectors compare as 0.
    pub fn cosine(&self, other: &TopicVector) -> f64 {
        let (small, large) = if self.weights.len() <= other.weights.len() {
            (self, other)
        } else {
            (other, self)
        };
        let mut dot = 0.0;
        for (tag, v) in &small.weights {
            if let Some(w) = large.weights.get(tag) {
                dot += v * w;
            }
        }
        if dot == 0.0 {
            return 0.0;
        }
        let denom = self.norm() * other.norm();
        if denom == 0.0 {
            0.0
        } else {
            dot / denom
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Layer {
    pub layer_id: usize,
    /// Admitted users, ascending.
    pub nodes: Vec<UserId>,
    /// Undirected edges (u < v), weight = cosine similarity in [delta, 1].
    pub edges: Vec<(UserId, UserId, f64)>,
    /// Neighbor lists sorted by neighbor id; symmetric.
    pub adjacency: BTreeMap<UserId, Vec<(UserId, f64)>>,
    pub topic_vectors: BTreeMap<UserId, TopicVector>,
    pub is_expert: BTreeMap<UserId, bool>,
    /// Accepted answers per member on questions of this layer.
    pub accepted_in_layer: BTreeMap<UserId, u64>,
    /// All answers (accepted or not) per member on questions of this layer.
    pub answers_in_layer: BTreeMap<UserId, u64>,
    pub max_answers_in_layer: u64,
}

impl Layer {
    /// Build a bare layer from an explicit node list and weighted edge list
    /// (u, v, w). Topic vectors and activity counts start empty; every node
    /// is flagged as an expert. Used by tests, benches, and fixtures.
    pub fn from_edges(layer_id: usize, mut nodes: Vec<UserId>, edges: &[(UserId, UserId, f64)]) -> Layer {
        nodes.sort_unstable();
        nodes.dedup();
        let mut adjacency: BTreeMap<UserId, Vec<(UserId, f64)>> = BTreeMap::new();
        for &u in &nodes {
            adjacency.insert(u, Vec::new());
        }
        let mut normalized: Vec<(UserId, UserId, f64)> = edges
            .iter()
            .map(|&(u, v, w)| if u < v { (u, v, w) } else { (v, u, w) })
            .collect();
        normalized.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        for &(u, v, w) in &normalized {
            adjacency.entry(u).or_default().push((v, w));
            adjacency.entry(v).or_default().push((u, w));
        }
        for list in adjacency.values_mut() {
            list.sort_by(|a, b| a.0.cmp(&b.0));
        }
        let all_nodes: Vec<UserId> = adjacency.keys().copied().collect();
        Layer {
            layer_id,
            is_expert: all_nodes.iter().map(|&u| (u, true)).collect(),
            accepted_in_layer: all_nodes.iter().map(|&u| (u, 1)).collect(),
            answers_in_layer: all_nodes.iter().map(|&u| (u, 1)).collect(),
            max_answers_in_layer: 1,
            nodes: all_nodes,
            edges: normalized,
            adjacency,
            topic_vectors: BTreeMap::new(),
        }
    }

    pub fn contains(&self, user: UserId) -> bool {
        self.adjacency.contains_key(&user) || self.nodes.binary_search(&user).is_ok()
    }

    pub fn neighbors(&self, user: UserId) -> &[(UserId, f64)] {
        self.adjacency.get(&user).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Expert nodes, ascending.
    pub fn expert_nodes(&self) -> Vec<UserId> {
        self.nodes
            .iter()
            .copied()
            .filter(|u| self.is_expert.get(u).copied().unwrap_or(false))
            .collect()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MultiLayerGraph {
    pub layers: Vec<Layer>,
    pub clustering: TagClustering,
    pub epsilon: u64,
    pub delta: f64,
}

impl MultiLayerGraph {
    /// Flag expert nodes in every layer. Expertise is global; layers carry
    /// the flag so selection can treat non-experts as transit nodes.
    pub fn mark_experts(&mut self, experts: &ExpertSet) {
        for layer in &mut self.layers {
            for &u in &layer.nodes {
                layer.is_expert.insert(u, experts.is_expert(u));
            }
        }
    }
}

/// The set of layer ids a question's tags map to. Unknown tags are ignored;
/// the result may be empty if every tag is unknown.
pub fn layers_of(question_tags: &[String], clustering: &TagClustering) -> BTreeSet<usize> {
    question_tags
        .iter()
        .filter_map(|t| clustering.assignment.get(t).copied())
        .collect()
}

/// Build the multi-layer graph from the training corpus.
///
/// Per layer: admit users with at least `epsilon` accepted answers on the
/// layer's questions, build their topic vectors, and connect pairs whose
/// cosine similarity is `>= delta`. Layers are built independently and in
/// parallel.
pub fn build_mlg(
    train: &Dataset,
    clustering: &TagClustering,
    epsilon: u64,
    delta: f64,
) -> Result<MultiLayerGraph> {
    if epsilon < 1 {
        return Err(Error::InvalidParam("epsilon must be >= 1".into()));
    }
    if !(0.0..=1.0).contains(&delta) {
        return Err(Error::InvalidParam(format!(
            "delta must be in [0,1], got {delta}"
        )));
    }
    let k = clustering.k;
    let feature_tags: HashSet<&str> = clustering.feature_tags.iter().map(String::as_str).collect();

    // Per-user bookkeeping gathered in one pass over the answers.
    let mut accepted_in_layer: Vec<HashMap<UserId, u64>> = vec![HashMap::new(); k];
    let mut answers_in_layer: Vec<HashMap<UserId, u64>> = vec![HashMap::new(); k];
    // Accepted answers per (user, tag), for topic-vector numerators.
    let mut accepted_per_tag: HashMap<UserId, HashMap<&str, u64>> = HashMap::new();
    // Denominator: total accepted answers on questions mapping to >= 1 layer.
    let mut total_accepted: HashMap<UserId, u64> = HashMap::new();

    for answer in train.answers.values() {
        let Some(q) = train.questions.get(&answer.parent_id) else {
            continue;
        };
        let layers = layers_of(&q.tags, clustering);
        if layers.is_empty() {
            continue;
        }
        for &layer in &layers {
            *answers_in_layer[layer]
                .entry(answer.owner_user_id)
                .or_insert(0) += 1;
        }
        if answer.accepted {
            *total_accepted.entry(answer.owner_user_id).or_insert(0) += 1;
            for &layer in &layers {
                *accepted_in_layer[layer]
                    .entry(answer.owner_user_id)
                    .or_insert(0) += 1;
            }
            let per_tag = accepted_per_tag.entry(answer.owner_user_id).or_default();
            for tag in &q.tags {
                *per_tag.entry(tag.as_str()).or_insert(0) += 1;
            }
        }
    }

    let layer_ids: Vec<usize> = (0..k).collect();
    let layers: Vec<Layer> = par::map_collect(&layer_ids, |&layer_id| {
        build_layer(
            layer_id,
            clustering,
            &feature_tags,
            &accepted_in_layer[layer_id],
            &answers_in_layer[layer_id],
            &accepted_per_tag,
            &total_accepted,
            epsilon,
            delta,
        )
    });

    Ok(MultiLayerGraph {
        layers,
        clustering: clustering.clone(),
        epsilon,
        delta,
    })
}

#[allow(clippy::too_many_arguments)]
fn build_layer(
    layer_id: usize,
    clustering: &TagClustering,
    feature_tags: &HashSet<&str>,
    accepted_in_layer: &HashMap<UserId, u64>,
    answers_in_layer: &HashMap<UserId, u64>,
    accepted_per_tag: &HashMap<UserId, HashMap<&str, u64>>,
    total_accepted: &HashMap<UserId, u64>,
    epsilon: u64,
    delta: f64,
) -> Layer {
    let mut nodes: Vec<UserId> = accepted_in_layer
        .iter()
        .filter(|(_, &c)| c >= epsilon)
        .map(|(&u, _)| u)
        .collect();
    nodes.sort_unstable();

    // Tags of this layer, excluding the clustering features.
    let layer_tags: HashSet<&str> = clustering
        .assignment
        .iter()
        .filter(|(t, &c)| c == layer_id && !feature_tags.contains(t.as_str()))
        .map(|(t, _)| t.as_str())
        .collect();

    let mut topic_vectors: BTreeMap<UserId, TopicVector> = BTreeMap::new();
    for &u in &nodes {
        let denom = total_accepted.get(&u).copied().unwrap_or(0) as f64;
        let mut weights = BTreeMap::new();
        if denom > 0.0 {
            if let Some(per_tag) = accepted_per_tag.get(&u) {
                for (&tag, &count) in per_tag {
                    if layer_tags.contains(tag) {
                        weights.insert(tag.to_string(), count as f64 / denom);
                    }
                }
            }
        }
        topic_vectors.insert(u, TopicVector { weights });
    }

    // Candidate pairs share at least one topic-vector tag; enumerated via an
    // inverted tag → users index instead of the full quadratic sweep.
    let mut tag_to_users: HashMap<&str, Vec<UserId>> = HashMap::new();
    for (&u, tv) in &topic_vectors {
        for tag in tv.weights.keys() {
            tag_to_users.entry(tag.as_str()).or_default().push(u);
        }
    }
    let pair_lists: Vec<Vec<(UserId, UserId, f64)>> = par::map_collect(&nodes, |&u| {
        let tv = &topic_vectors[&u];
        let mut partners: BTreeSet<UserId> = BTreeSet::new();
        for tag in tv.weights.keys() {
            if let Some(users) = tag_to_users.get(tag.as_str()) {
                partners.extend(users.iter().copied().filter(|&v| v > u));
            }
        }
        let mut edges = Vec::new();
        for v in partners {
            let w = tv.cosine(&topic_vectors[&v]);
            if w >= delta && w > 0.0 {
                edges.push((u, v, w.min(1.0)));
            }
        }
        edges
    });
    let mut edges: Vec<(UserId, UserId, f64)> = pair_lists.into_iter().flatten().collect();
    edges.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));

    let mut adjacency: BTreeMap<UserId, Vec<(UserId, f64)>> = BTreeMap::new();
    for &u in &nodes {
        adjacency.insert(u, Vec::new());
    }
    for &(u, v, w) in &edges {
        adjacency.get_mut(&u).unwrap().push((v, w));
        adjacency.get_mut(&v).unwrap().push((u, w));
    }
    for list in adjacency.values_mut() {
        list.sort_by(|a, b| a.0.cmp(&b.0));
    }

    let member_answers: BTreeMap<UserId, u64> = nodes
        .iter()
        .map(|&u| (u, answers_in_layer.get(&u).copied().unwrap_or(0)))
        .collect();
    let max_answers_in_layer = member_answers.values().copied().max().unwrap_or(0);

    Layer {
        layer_id,
        is_expert: nodes.iter().map(|&u| (u, false)).collect(),
        accepted_in_layer: nodes
            .iter()
            .map(|&u| (u, accepted_in_layer.get(&u).copied().unwrap_or(0)))
            .collect(),
        answers_in_layer: member_answers,
        max_answers_in_layer,
        nodes,
        edges,
        adjacency,
        topic_vectors,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{clean, PostKind, RawPost};

    fn clustering(tags: &[(&str, usize)], k: usize, features: &[&str]) -> TagClustering {
        TagClustering {
            k,
            assignment: tags
                .iter()
                .map(|(t, c)| (t.to_string(), *c))
                .collect(),
            centroids: Vec::new(),
            silhouette_by_k: BTreeMap::new(),
            feature_tags: features.iter().map(|f| f.to_string()).collect(),
            wcss_trace: Vec::new(),
        }
    }

    /// Dataset with one question per entry: `(tags, answers)` where each
    /// answer is `(user, accepted)`. Exactly one answer per question must
    /// have `accepted = true`.
    fn corpus(entries: &[(&[&str], &[(UserId, bool)])]) -> Dataset {
        let mut raw = Vec::new();
        let mut next_id = 1u64;
        for &(tags, answers) in entries {
            let qid = next_id;
            next_id += 1;
            let accepted_aid = next_id + answers.iter().position(|(_, a)| *a).unwrap() as u64;
            raw.push(RawPost {
                id: qid,
                post_kind: PostKind::Question,
                owner_user_id: Some(1000),
                creation_ts: qid as i64,
                title: Some("q".into()),
                body: "b".into(),
                tags: tags.iter().map(|t| t.to_string()).collect(),
                accepted_answer_id: Some(accepted_aid),
                parent_id: None,
            });
            for (user, _) in answers {
                raw.push(RawPost {
                    id: next_id,
                    post_kind: PostKind::Answer,
                    owner_user_id: Some(*user),
                    creation_ts: next_id as i64,
                    title: None,
                    body: String::new(),
                    tags: vec![],
                    accepted_answer_id: None,
                    parent_id: Some(qid),
                });
                next_id += 1;
            }
        }
        clean(&raw).0
    }

    #[test]
    fn layers_of_maps_tags_to_clusters() {
        let c = clustering(&[("t1", 0), ("t2", 0), ("t3", 4)], 5, &[]);
        let tags = |ts: &[&str]| ts.iter().map(|t| t.to_string()).collect::<Vec<_>>();
        assert_eq!(
            layers_of(&tags(&["t1", "t2"]), &c),
            BTreeSet::from([0])
        );
        assert_eq!(
            layers_of(&tags(&["t1", "t3"]), &c),
            BTreeSet::from([0, 4])
        );
        assert!(layers_of(&tags(&["zz", "yy"]), &c).is_empty());
    }

    #[test]
    fn identical_vectors_get_edge_weight_one() {
        let ds = corpus(&[
            (&["a1", "a2"], &[(2, true)]),
            (&["a1", "a2"], &[(3, true)]),
        ]);
        let c = clustering(&[("a1", 0), ("a2", 0)], 1, &[]);
        let mlg = build_mlg(&ds, &c, 1, 0.5).unwrap();
        let layer = &mlg.layers[0];
        assert_eq!(layer.nodes, vec![2, 3]);
        assert_eq!(layer.edges.len(), 1);
        let (u, v, w) = layer.edges[0];
        assert_eq!((u, v), (2, 3));
        assert!((w - 1.0).abs() < 1e-12);
    }

    #[test]
    fn orthogonal_vectors_get_no_edge() {
        let ds = corpus(&[(&["a1"], &[(2, true)]), (&["a2"], &[(3, true)])]);
        let c = clustering(&[("a1", 0), ("a2", 0)], 1, &[]);
        let mlg = build_mlg(&ds, &c, 1, 0.5).unwrap();
        assert!(mlg.layers[0].edges.is_empty());
    }

    #[test]
    fn epsilon_filters_low_activity_users() {
        let ds = corpus(&[
            (&["a1"], &[(2, true)]),
            (&["a1", "a2"], &[(2, true)]),
            (&["a2"], &[(3, true)]),
        ]);
        let c = clustering(&[("a1", 0), ("a2", 0)], 1, &[]);
        let mlg = build_mlg(&ds, &c, 2, 0.5).unwrap();
        assert_eq!(mlg.layers[0].nodes, vec![2]);
    }

    #[test]
    fn invalid_params_error() {
        let ds = Dataset::default();
        let c = clustering(&[("a", 0)], 1, &[]);
        assert!(build_mlg(&ds, &c, 0, 0.5).is_err());
        assert!(build_mlg(&ds, &c, 1, 1.5).is_err());
        assert!(build_mlg(&ds, &c, 1, -0.1).is_err());
    }

    #[test]
    fn multi_layer_question_credits_each_layer_once() {
        let ds = corpus(&[(&["a1", "b1"], &[(2, true)])]);
        let c = clustering(&[("a1", 0), ("b1", 1)], 2, &[]);
        let mlg = build_mlg(&ds, &c, 1, 0.5).unwrap();
        assert_eq!(mlg.layers[0].accepted_in_layer[&2], 1);
        assert_eq!(mlg.layers[1].accepted_in_layer[&2], 1);
    }

    #[test]
    fn feature_tags_excluded_from_topic_vectors() {
        let ds = corpus(&[(&["a1", "a2"], &[(2, true)])]);
        let c = clustering(&[("a1", 0), ("a2", 0)], 1, &["a1"]);
        let mlg = build_mlg(&ds, &c, 1, 0.5).unwrap();
        let tv = &mlg.layers[0].topic_vectors[&2];
        assert!(tv.weights.contains_key("a2"));
        assert!(!tv.weights.contains_key("a1"));
    }

    #[test]
    fn adjacency_is_symmetric_with_equal_weights() {
        let ds = corpus(&[
            (&["a1", "a2"], &[(2, true)]),
            (&["a2", "a3"], &[(3, true)]),
            (&["a1", "a3"], &[(4, true)]),
            (&["a1", "a2"], &[(3, true)]),
        ]);
        let c = clustering(&[("a1", 0), ("a2", 0), ("a3", 0)], 1, &[]);
        let mlg = build_mlg(&ds, &c, 1, 0.1).unwrap();
        let layer = &mlg.layers[0];
        for (&u, list) in &layer.adjacency {
            for &(v, w) in list {
                let back = layer
                    .adjacency[&v]
                    .iter()
                    .find(|(x, _)| *x == u)
                    .expect("missing reverse edge");
                assert_eq!(back.1, w);
                assert!(w >= mlg.delta && w <= 1.0 + 1e-9);
                assert_ne!(u, v, "self loop");
            }
        }
    }

    #[test]
    fn removing_a_user_never_adds_nodes_or_edges() {
        let entries: Vec<(&[&str], &[(UserId, bool)])> = vec![
            (&["a1", "a2"], &[(2, true)]),
            (&["a2", "a3"], &[(3, true)]),
            (&["a1", "a3"], &[(4, true)]),
            (&["a1", "a2"], &[(2, true)]),
            (&["a2", "a3"], &[(4, true)]),
        ];
        let full = corpus(&entries);
        let without: Vec<_> = entries
            .iter()
            .filter(|e| e.1[0].0 != 4)
            .copied()
            .collect();
        let reduced = corpus(&without);
        let c = clustering(&[("a1", 0), ("a2", 0), ("a3", 0)], 1, &[]);
        let mlg_full = build_mlg(&full, &c, 1, 0.1).unwrap();
        let mlg_reduced = build_mlg(&reduced, &c, 1, 0.1).unwrap();
        let full_nodes: BTreeSet<_> = mlg_full.layers[0].nodes.iter().collect();
        let red_nodes: BTreeSet<_> = mlg_reduced.layers[0].nodes.iter().collect();
        assert!(red_nodes.is_subset(&full_nodes));
        let full_edges: BTreeSet<_> = mlg_full.layers[0]
            .edges
            .iter()
            .map(|(u, v, _)| (*u, *v))
            .collect();
        for (u, v, _) in &mlg_reduced.layers[0].edges {
            assert!(full_edges.contains(&(*u, *v)));
        }
    }

    #[test]
    fn mark_experts_flags_layer_nodes() {
        let ds = corpus(&[(&["a1"], &[(2, true)]), (&["a1"], &[(2, true)])]);
        let c = clustering(&[("a1", 0)], 1, &[]);
        let mut mlg = build_mlg(&ds, &c, 1, 0.5).unwrap();
        let experts = crate::experts::identify_experts(&ds, 1).unwrap();
        mlg.mark_experts(&experts);
        // Without competition user 2 has ratio 1.0 but the mean equals it, so
        // the strict filter leaves them out.
        assert_eq!(mlg.layers[0].is_expert[&2], experts.is_expert(2));
    }
}
