//! Feature extraction: one 23-dimensional vector per (query, candidate),
//! combining static user statistics with query-dependent selection, retrieval,
//! and centrality signals.
//!
//! Cross-layer aggregation when a candidate was selected in several layers:
//! max for the network centrality scores, min for steps and betweenness rank,
//! sum for everything content-side plus LayerCount, QueryKnowledge, Degree,
//! and AvgWeights.

use serde::{Deserialize, Serialize};

use crate::ingest::{PostId, Question, UserId, UserStats};
use crate::retrieval::RankedQuestions;
use crate::selection::{CandidateSet, Method, SelectionContext};

/// Sentinel for undefined step counts and activity gaps.
pub const SENTINEL: f64 = 1e6;

pub const NUM_FEATURES: usize = 23;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(usize)]
pub enum Feature {
    Reputation = 0,
    Answers,
    AcceptedAnswers,
    Ratio,
    AvgActivity,
    StdActivity,
    LayerCount,
    QueryKnowledge,
    VisitCountContent,
    VisitCountNetwork,
    StepsContent,
    StepsNetwork,
    BetweennessPos,
    BetweennessScore,
    ScoreIndexTag,
    ScoreIndexText,
    FrequencyIndexTag,
    FrequencyIndexText,
    Eigenvector,
    PageRank,
    Closeness,
    Degree,
    AvgWeights,
}

pub const FEATURE_NAMES: [&str; NUM_FEATURES] = [
    "Reputation",
    "Answers",
    "AcceptedAnswers",
    "Ratio",
    "AvgActivity",
    "StdActivity",
    "LayerCount",
    "QueryKnowledge",
    "VisitCountContent",
    "VisitCountNetwork",
    "StepsContent",
    "StepsNetwork",
    "BetweennessPos",
    "BetweennessScore",
    "ScoreIndexTag",
    "ScoreIndexText",
    "FrequencyIndexTag",
    "FrequencyIndexText",
    "Eigenvector",
    "PageRank",
    "Closeness",
    "Degree",
    "AvgWeights",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub values: [f64; NUM_FEATURES],
}

impl FeatureVector {
    pub fn get(&self, f: Feature) -> f64 {
        self.values[f as usize]
    }

    fn set(&mut self, f: Feature, v: f64) {
        self.values[f as usize] = v;
    }
}

impl Default for FeatureVector {
    fn default() -> Self {
        FeatureVector {
            values: [0.0; NUM_FEATURES],
        }
    }
}

/// One labeled training sample for the ranker.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LtrSample {
    pub query_id: PostId,
    pub expert_id: UserId,
    pub features: FeatureVector,
    pub label: u8,
}

/// Ablation feature subsets: the network-only and content-only variants keep
/// the static features plus their method's query-dependent ones.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureSet {
    Full,
    NetworkOnly,
    ContentOnly,
}

impl FeatureSet {
    pub fn mask(&self) -> [bool; NUM_FEATURES] {
        use Feature::*;
        let mut mask = [false; NUM_FEATURES];
        let statics = [
            Reputation,
            Answers,
            AcceptedAnswers,
            Ratio,
            AvgActivity,
            StdActivity,
        ];
        for f in statics {
            mask[f as usize] = true;
        }
        let rest: &[Feature] = match self {
            FeatureSet::Full => &[
                LayerCount,
                QueryKnowledge,
                VisitCountContent,
                VisitCountNetwork,
                StepsContent,
                StepsNetwork,
                BetweennessPos,
                BetweennessScore,
                ScoreIndexTag,
                ScoreIndexText,
                FrequencyIndexTag,
                FrequencyIndexText,
                Eigenvector,
                PageRank,
                Closeness,
                Degree,
                AvgWeights,
            ],
            FeatureSet::NetworkOnly => &[
                LayerCount,
                QueryKnowledge,
                VisitCountNetwork,
                StepsNetwork,
                BetweennessPos,
                BetweennessScore,
                Eigenvector,
                PageRank,
                Closeness,
                Degree,
                AvgWeights,
            ],
            FeatureSet::ContentOnly => &[
                LayerCount,
                QueryKnowledge,
                VisitCountContent,
                StepsContent,
                ScoreIndexTag,
                ScoreIndexText,
                FrequencyIndexTag,
                FrequencyIndexText,
                Degree,
                AvgWeights,
            ],
        };
        for &f in rest {
            mask[f as usize] = true;
        }
        mask
    }

    /// Feature names retained by this subset, in catalog order.
    pub fn names(&self) -> Vec<String> {
        let mask = self.mask();
        FEATURE_NAMES
            .iter()
            .zip(mask)
            .filter(|(_, keep)| *keep)
            .map(|(n, _)| n.to_string())
            .collect()
    }
}

/// Mean and population standard deviation of the hour gaps between a user's
/// consecutive answers; the sentinel when fewer than two answers exist.
fn activity_hours(stats: &UserStats) -> (f64, f64) {
    if stats.answer_ts.len() < 2 {
        return (SENTINEL, SENTINEL);
    }
    let gaps: Vec<f64> = stats
        .answer_ts
        .windows(2)
        .map(|w| (w[1] - w[0]) as f64 / 3600.0)
        .collect();
    let mean = gaps.iter().sum::<f64>() / gaps.len() as f64;
    let var = gaps.iter().map(|g| (g - mean) * (g - mean)).sum::<f64>() / gaps.len() as f64;
    (mean, var.sqrt())
}

/// Sum of retrieved BM25 scores and count of distinct retrieved questions the
/// candidate best-answered.
fn index_signals(results: &RankedQuestions, candidate: UserId) -> (f64, f64) {
    let mut score = 0.0;
    let mut count = 0u32;
    for &(_, s, expert) in &results.hits {
        if expert == candidate {
            score += s;
            count += 1;
        }
    }
    (score, count as f64)
}

/// Extract one feature vector per candidate of the set, sorted by user id.
pub fn extract_features(
    question: &Question,
    cset: &CandidateSet,
    ctx: &SelectionContext,
    tag_results: &RankedQuestions,
    text_results: &RankedQuestions,
) -> Vec<(UserId, FeatureVector)> {
    debug_assert_eq!(question.id, cset.query_id);
    let trace = cset.trace_lookup();
    let empty_stats = UserStats::default();

    cset.candidates
        .iter()
        .map(|&u| {
            let mut fv = FeatureVector::default();
            let stats = ctx.users.get(&u).unwrap_or(&empty_stats);

            fv.set(Feature::Reputation, stats.reputation as f64);
            fv.set(Feature::Answers, stats.answers as f64);
            fv.set(Feature::AcceptedAnswers, stats.accepted as f64);
            fv.set(Feature::Ratio, stats.ratio());
            let (avg, std) = activity_hours(stats);
            fv.set(Feature::AvgActivity, avg);
            fv.set(Feature::StdActivity, std);

            let (score_tag, freq_tag) = index_signals(tag_results, u);
            let (score_text, freq_text) = index_signals(text_results, u);
            fv.set(Feature::ScoreIndexTag, score_tag);
            fv.set(Feature::ScoreIndexText, score_text);
            fv.set(Feature::FrequencyIndexTag, freq_tag);
            fv.set(Feature::FrequencyIndexText, freq_text);

            // Layers where this candidate was selected.
            let layers: Vec<usize> = cset
                .per_layer_candidates
                .iter()
                .filter(|(_, set)| set.contains(&u))
                .map(|(&l, _)| l)
                .collect();
            fv.set(Feature::LayerCount, layers.len() as f64);

            let mut query_knowledge = 0.0;
            let mut visit_content = 0.0;
            let mut visit_network = 0.0;
            let mut steps_content = f64::INFINITY;
            let mut steps_network = f64::INFINITY;
            let mut btw_pos = f64::INFINITY;
            let mut btw_score: f64 = 0.0;
            let mut eigen: f64 = 0.0;
            let mut pagerank: f64 = 0.0;
            let mut closeness: f64 = 0.0;
            let mut degree = 0.0;
            let mut avg_weights = 0.0;

            for &layer_id in &layers {
                let layer = &ctx.mlg.layers[layer_id];
                let table = &ctx.centralities[layer_id];

                let answers = layer.answers_in_layer.get(&u).copied().unwrap_or(0) as f64;
                let accepted = layer.accepted_in_layer.get(&u).copied().unwrap_or(0) as f64;
                if accepted > 0.0 {
                    query_knowledge += answers / accepted;
                }

                if let Some(rec) = trace.get(&(layer_id, Method::Content, u)) {
                    visit_content += rec.visit_count as f64;
                    steps_content = steps_content.min(rec.steps as f64);
                }
                if let Some(rec) = trace.get(&(layer_id, Method::Network, u)) {
                    visit_network += rec.visit_count as f64;
                    steps_network = steps_network.min(rec.steps as f64);
                }

                if let Some(&rank) = table.betweenness_rank.get(&u) {
                    btw_pos = btw_pos.min(rank as f64);
                }
                btw_score = btw_score.max(table.betweenness.get(&u).copied().unwrap_or(0.0));
                eigen = eigen.max(table.eigenvector.get(&u).copied().unwrap_or(0.0));
                pagerank = pagerank.max(table.pagerank.get(&u).copied().unwrap_or(0.0));
                closeness = closeness.max(table.closeness.get(&u).copied().unwrap_or(0.0));
                degree += table.degree.get(&u).copied().unwrap_or(0.0);
                avg_weights += table.avg_weight.get(&u).copied().unwrap_or(0.0);
            }

            fv.set(Feature::QueryKnowledge, query_knowledge);
            fv.set(Feature::VisitCountContent, visit_content);
            fv.set(Feature::VisitCountNetwork, visit_network);
            fv.set(
                Feature::StepsContent,
                if steps_content.is_finite() {
                    steps_content
                } else {
                    SENTINEL
                },
            );
            fv.set(
                Feature::StepsNetwork,
                if steps_network.is_finite() {
                    steps_network
                } else {
                    SENTINEL
                },
            );
            fv.set(
                Feature::BetweennessPos,
                if btw_pos.is_finite() { btw_pos } else { SENTINEL },
            );
            fv.set(Feature::BetweennessScore, btw_score);
            fv.set(Feature::Eigenvector, eigen);
            fv.set(Feature::PageRank, pagerank);
            fv.set(Feature::Closeness, closeness);
            fv.set(Feature::Degree, degree);
            fv.set(Feature::AvgWeights, avg_weights);

            (u, fv)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::centrality::CentralityTable;
    use crate::experts::ExpertSet;
    use crate::ingest::Question;
    use crate::mlg::{Layer, MultiLayerGraph};
    use crate::retrieval::{IndexKind, InvertedIndex};
    use crate::selection::TraceRecord;
    use crate::topics::TagClustering;
    use std::collections::{BTreeMap, BTreeSet};

    fn empty_index(kind: IndexKind) -> InvertedIndex {
        InvertedIndex {
            kind,
            remove_stopwords: true,
            vocabulary: BTreeMap::new(),
            postings: BTreeMap::new(),
            doc_lengths: BTreeMap::new(),
            avg_doc_length: 0.0,
            doc_expert: BTreeMap::new(),
            doc_ts: BTreeMap::new(),
        }
    }

    fn table_for(layer: &Layer, overrides: &[(UserId, f64, usize, f64)]) -> CentralityTable {
        // overrides: (user, betweenness, rank, pagerank)
        let mut t = crate::centrality::auxiliary_centralities(layer);
        for &(u, b, r, p) in overrides {
            t.betweenness.insert(u, b);
            t.betweenness_rank.insert(u, r);
            t.pagerank.insert(u, p);
        }
        t
    }

    struct Fixture {
        mlg: MultiLayerGraph,
        centralities: Vec<CentralityTable>,
        experts: ExpertSet,
        users: BTreeMap<UserId, UserStats>,
        tag_index: InvertedIndex,
        text_index: InvertedIndex,
    }

    impl Fixture {
        fn ctx(&self) -> SelectionContext<'_> {
            SelectionContext {
                mlg: &self.mlg,
                tag_index: &self.tag_index,
                text_index: &self.text_index,
                centralities: &self.centralities,
                experts: &self.experts,
                users: &self.users,
            }
        }
    }

    fn two_layer_fixture() -> Fixture {
        let layer0 = Layer::from_edges(0, vec![1, 2], &[(1, 2, 0.8)]);
        let layer1 = Layer::from_edges(1, vec![1, 3], &[(1, 3, 0.6)]);
        let c0 = table_for(&layer0, &[(1, 4.0, 3, 0.1)]);
        let c1 = table_for(&layer1, &[(1, 9.0, 7, 0.3)]);
        let mlg = MultiLayerGraph {
            layers: vec![layer0, layer1],
            clustering: TagClustering::single_layer(Vec::new()),
            epsilon: 1,
            delta: 0.5,
        };
        let users: BTreeMap<UserId, UserStats> = [
            (
                1,
                UserStats {
                    answers: 10,
                    accepted: 5,
                    reputation: 321,
                    answer_ts: vec![0, 7200, 14400],
                },
            ),
            (2, UserStats::default()),
            (3, UserStats::default()),
        ]
        .into_iter()
        .collect();
        let experts = ExpertSet {
            beta: 1,
            candidates: BTreeSet::from([1, 2, 3]),
            mean_ratio: 0.0,
            experts: BTreeSet::from([1, 2, 3]),
            ratios: BTreeMap::new(),
            warning: None,
        };
        Fixture {
            mlg,
            centralities: vec![c0, c1],
            experts,
            users,
            tag_index: empty_index(IndexKind::Tag),
            text_index: empty_index(IndexKind::Text),
        }
    }

    fn question() -> Question {
        Question {
            id: 100,
            owner_user_id: 50,
            creation_ts: 0,
            title: "q".into(),
            body: "b".into(),
            tags: vec!["t".into()],
            accepted_answer_id: 999,
        }
    }

    fn cset_for(
        layers: &[usize],
        candidates: &[UserId],
        trace: Vec<TraceRecord>,
    ) -> CandidateSet {
        let per_layer: BTreeMap<usize, BTreeSet<UserId>> = layers
            .iter()
            .map(|&l| {
                (
                    l,
                    trace
                        .iter()
                        .filter(|r| r.layer == l)
                        .map(|r| r.expert)
                        .collect(),
                )
            })
            .collect();
        CandidateSet {
            query_id: 100,
            layers_used: layers.to_vec(),
            fallback_all_layers: false,
            initial_sets: Vec::new(),
            candidates: candidates.iter().copied().collect(),
            per_layer_candidates: per_layer,
            trace,
        }
    }

    fn rec(layer: usize, method: Method, expert: UserId, steps: u32, visits: u32) -> TraceRecord {
        TraceRecord {
            layer,
            method,
            expert,
            steps,
            visit_count: visits,
            discovered_in_collection: true,
        }
    }

    #[test]
    fn min_max_aggregation_across_two_layers() {
        let fx = two_layer_fixture();
        let cset = cset_for(
            &[0, 1],
            &[1],
            vec![
                rec(0, Method::Network, 1, 1, 1),
                rec(1, Method::Network, 1, 2, 3),
            ],
        );
        let out = extract_features(
            &question(),
            &cset,
            &fx.ctx(),
            &RankedQuestions::default(),
            &RankedQuestions::default(),
        );
        let fv = &out[0].1;
        assert_eq!(fv.get(Feature::LayerCount), 2.0);
        // BetweennessPos: min(3, 7); BetweennessScore: max(4, 9); PageRank max(0.1, 0.3)
        assert_eq!(fv.get(Feature::BetweennessPos), 3.0);
        assert_eq!(fv.get(Feature::BetweennessScore), 9.0);
        assert!((fv.get(Feature::PageRank) - 0.3).abs() < 1e-12);
        // VisitCountNetwork sums; StepsNetwork takes the min.
        assert_eq!(fv.get(Feature::VisitCountNetwork), 4.0);
        assert_eq!(fv.get(Feature::StepsNetwork), 1.0);
        // Degree sums across the two layers (1 neighbor each).
        assert_eq!(fv.get(Feature::Degree), 2.0);
        assert!((fv.get(Feature::AvgWeights) - (0.8 + 0.6)).abs() < 1e-12);
    }

    #[test]
    fn single_layer_aggregation_is_identity() {
        let fx = two_layer_fixture();
        let cset = cset_for(&[0], &[1], vec![rec(0, Method::Content, 1, 4, 2)]);
        let out = extract_features(
            &question(),
            &cset,
            &fx.ctx(),
            &RankedQuestions::default(),
            &RankedQuestions::default(),
        );
        let fv = &out[0].1;
        assert_eq!(fv.get(Feature::LayerCount), 1.0);
        assert_eq!(fv.get(Feature::StepsContent), 4.0);
        assert_eq!(fv.get(Feature::VisitCountContent), 2.0);
        // Not discovered by the network pipeline: sentinel + zero visits.
        assert_eq!(fv.get(Feature::StepsNetwork), SENTINEL);
        assert_eq!(fv.get(Feature::VisitCountNetwork), 0.0);
        assert_eq!(fv.get(Feature::BetweennessPos), 3.0);
    }

    #[test]
    fn index_signals_sum_scores_and_count_questions() {
        let fx = two_layer_fixture();
        let cset = cset_for(&[0], &[1], vec![rec(0, Method::Content, 1, 1, 1)]);
        let tag_results = RankedQuestions {
            hits: vec![(900, 4.0, 1), (901, 1.5, 1), (902, 3.0, 2)],
        };
        let out = extract_features(
            &question(),
            &cset,
            &fx.ctx(),
            &tag_results,
            &RankedQuestions::default(),
        );
        let fv = &out[0].1;
        assert_eq!(fv.get(Feature::FrequencyIndexTag), 2.0);
        assert!((fv.get(Feature::ScoreIndexTag) - 5.5).abs() < 1e-12);
        assert_eq!(fv.get(Feature::FrequencyIndexText), 0.0);
    }

    #[test]
    fn activity_hours_mean_and_std() {
        // Answers at hours 0, 2, 4 → gaps [2, 2] → avg 2.0, std 0.0.
        let stats = UserStats {
            answers: 3,
            accepted: 1,
            reputation: 0,
            answer_ts: vec![0, 7200, 14400],
        };
        let (avg, std) = activity_hours(&stats);
        assert_eq!(avg, 2.0);
        assert_eq!(std, 0.0);
        // Fewer than two answers → sentinels.
        let lonely = UserStats {
            answers: 1,
            accepted: 0,
            reputation: 0,
            answer_ts: vec![42],
        };
        assert_eq!(activity_hours(&lonely), (SENTINEL, SENTINEL));
    }

    #[test]
    fn static_features_read_from_user_stats() {
        let fx = two_layer_fixture();
        let cset = cset_for(&[0], &[1], vec![rec(0, Method::Network, 1, 1, 1)]);
        let out = extract_features(
            &question(),
            &cset,
            &fx.ctx(),
            &RankedQuestions::default(),
            &RankedQuestions::default(),
        );
        let fv = &out[0].1;
        assert_eq!(fv.get(Feature::Reputation), 321.0);
        assert_eq!(fv.get(Feature::Answers), 10.0);
        assert_eq!(fv.get(Feature::AcceptedAnswers), 5.0);
        assert!((fv.get(Feature::Ratio) - 0.5).abs() < 1e-12);
        assert_eq!(fv.get(Feature::AvgActivity), 2.0);
    }

    #[test]
    fn extraction_is_bitwise_deterministic() {
        let fx = two_layer_fixture();
        let cset = cset_for(
            &[0, 1],
            &[1],
            vec![
                rec(0, Method::Network, 1, 1, 1),
                rec(1, Method::Content, 1, 5, 2),
            ],
        );
        let q = question();
        let a = extract_features(
            &q,
            &cset,
            &fx.ctx(),
            &RankedQuestions::default(),
            &RankedQuestions::default(),
        );
        let b = extract_features(
            &q,
            &cset,
            &fx.ctx(),
            &RankedQuestions::default(),
            &RankedQuestions::default(),
        );
        for ((ua, fa), (ub, fb)) in a.iter().zip(&b) {
            assert_eq!(ua, ub);
            for (x, y) in fa.values.iter().zip(&fb.values) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
    }

    #[test]
    fn feature_masks_have_expected_sizes() {
        assert_eq!(
            FeatureSet::Full.mask().iter().filter(|&&b| b).count(),
            NUM_FEATURES
        );
        // 6 static + 11 network-side
        assert_eq!(
            FeatureSet::NetworkOnly.mask().iter().filter(|&&b| b).count(),
            17
        );
        // 6 static + 10 content-side
        assert_eq!(
            FeatureSet::ContentOnly.mask().iter().filter(|&&b| b).count(),
            16
        );
        assert!(FeatureSet::ContentOnly.names().contains(&"ScoreIndexTag".to_string()));
        assert!(!FeatureSet::ContentOnly.names().contains(&"PageRank".to_string()));
    }
}
