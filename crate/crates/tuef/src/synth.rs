//! Synthetic CQA corpus generator: planted experts with topic affinities,
//! acceptance decided by an affinity-weighted lottery, ground truth emitted
//! in a sidecar for verification.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{PostKind, RawPost, UserId};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub users: usize,
    pub experts: usize,
    pub tags: usize,
    pub topics: usize,
    pub questions: usize,
    /// How strongly the acceptance lottery favors the planted owner, in
    /// (0, 1]. Near 1 the owner almost always provides the best answer.
    pub concentration: f64,
    /// Fraction of questions with no specialty slant: their tags are drawn
    /// uniformly from the topic and acceptance follows expert prominence,
    /// so network signals carry information that content alone does not.
    pub generic_fraction: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            users: 200,
            experts: 20,
            tags: 50,
            topics: 5,
            questions: 5000,
            concentration: 0.9,
            generic_fraction: 0.3,
            seed: 42,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.experts > self.users {
            return Err(Error::InvalidParam("experts must be <= users".into()));
        }
        if self.topics > self.tags {
            return Err(Error::InvalidParam("topics must be <= tags".into()));
        }
        if self.experts < self.topics || self.topics == 0 || self.questions == 0 {
            return Err(Error::InvalidParam(
                "need at least one expert per topic and a nonempty corpus".into(),
            ));
        }
        if !(self.concentration > 0.0 && self.concentration <= 1.0) {
            return Err(Error::InvalidParam("concentration must be in (0,1]".into()));
        }
        if !(0.0..=1.0).contains(&self.generic_fraction) {
            return Err(Error::InvalidParam(
                "generic_fraction must be in [0,1]".into(),
            ));
        }
        Ok(())
    }
}

/// Planted structure written next to the generated posts.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GroundTruth {
    pub tag_topics: BTreeMap<String, usize>,
    pub expert_topics: BTreeMap<UserId, usize>,
    pub expert_specialties: BTreeMap<UserId, Vec<String>>,
}

pub struct SyntheticCorpus {
    pub posts: Vec<RawPost>,
    /// (user id, reputation) rows for the optional users file.
    pub reputations: Vec<(UserId, i64)>,
    pub truth: GroundTruth,
}

/// Drift probability: once past the temporal split point, this fraction of
/// questions carrying a victim expert's signature tag are won by the topic's
/// migrating expert instead.
const DRIFT_PROB: f64 = 0.5;

/// Generate the corpus. Deterministic: a fixed seed reproduces the corpus
/// byte for byte.
///
/// Corpus structure, per topic:
/// - two *shared* tags used by generic questions and as extra tags;
/// - overlapping *specialty* windows, one per expert, so peer topic vectors
///   overlap and similarity edges form;
/// - when a topic has at least four experts, one *victim* expert gets a
///   private signature tag and one *migrant* expert stays off the victim's
///   turf before the split point, then wins most signature-tag questions
///   after it. The migrant's history never matches those questions, so
///   content retrieval alone cannot surface them — only the graph side can.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<SyntheticCorpus> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let topics = spec.topics;
    let expert_ids: Vec<UserId> = (1..=spec.experts as u64).collect();
    let expert_topic = |e: UserId| ((e - 1) as usize) % topics;
    // Shuffle each topic's expert list so the community roles assigned
    // below (leader, victim, migrant) do not correlate with user ids.
    let topic_experts: Vec<Vec<UserId>> = (0..topics)
        .map(|t| {
            let mut experts: Vec<UserId> = expert_ids
                .iter()
                .copied()
                .filter(|&e| expert_topic(e) == t)
                .collect();
            for i in (1..experts.len()).rev() {
                let j = rng.random_range(0..=i);
                experts.swap(i, j);
            }
            experts
        })
        .collect();

    // Tag layout per topic: 2 shared tags, one private signature tag for the
    // victim when the drift roles exist, the rest are specialty tags.
    let per_topic = spec.tags / topics;
    if per_topic < 3 {
        return Err(Error::InvalidParam(
            "need at least 3 tags per topic".into(),
        ));
    }
    let tag_names: Vec<String> = (0..spec.tags).map(|i| format!("tag{i:03}")).collect();
    let tag_topic = |i: usize| i % topics;
    let topic_tags: Vec<Vec<usize>> = (0..topics)
        .map(|t| (0..spec.tags).filter(|&i| tag_topic(i) == t).collect())
        .collect();

    struct TopicLayout {
        shared: Vec<usize>,
        /// Specialty tags per expert (overlapping windows).
        specialty: BTreeMap<UserId, Vec<usize>>,
        /// (victim, migrant, signature tag) when the topic has the roles.
        drift: Option<(UserId, UserId, usize)>,
    }

    let mut layouts: Vec<TopicLayout> = Vec::new();
    for t in 0..topics {
        let tags = &topic_tags[t];
        let experts = &topic_experts[t];
        let shared: Vec<usize> = tags.iter().copied().take(2.min(tags.len())).collect();
        let has_roles = experts.len() >= 4 && tags.len() >= shared.len() + experts.len() + 1;
        let signature = if has_roles { Some(tags[shared.len()]) } else { None };
        let pool_start = shared.len() + usize::from(has_roles);
        let pool: Vec<usize> = tags[pool_start..].to_vec();

        // Overlapping windows: expert r owns pool[r*stride .. r*stride+width].
        let n = experts.len();
        let width = (pool.len() / n).max(1) + 1;
        let mut specialty = BTreeMap::new();
        for (r, &e) in experts.iter().enumerate() {
            let mut own: Vec<usize> = (0..width)
                .map(|j| pool[(r * pool.len() / n + j) % pool.len()])
                .collect();
            own.sort_unstable();
            own.dedup();
            if let (Some(sig), 2) = (signature, r) {
                own.push(sig); // the victim also owns their signature tag
            }
            specialty.insert(e, own);
        }
        let drift = match signature {
            Some(sig) => Some((experts[2], experts[3], sig)),
            None => None,
        };
        layouts.push(TopicLayout {
            shared,
            specialty,
            drift,
        });
    }

    // Prominence within a topic drives generic-question acceptance: the
    // first expert is the community leader.
    let prominence = |u: UserId| -> f64 {
        let t = expert_topic(u);
        let rank = topic_experts[t].iter().position(|&e| e == u).unwrap_or(0);
        match rank {
            0 => 8.0,
            1 => 2.0,
            _ => 1.0,
        }
    };

    let non_experts: Vec<UserId> = (spec.experts as u64 + 1..=spec.users as u64).collect();
    if non_experts.is_empty() {
        return Err(Error::InvalidParam(
            "need at least one non-expert user to ask questions".into(),
        ));
    }

    // Saturates as concentration → 1, where the owner always wins.
    let owner_weight = 2.0 * spec.concentration / (1.0 - spec.concentration + 1e-9);
    let split_point = (spec.questions as f64 * 0.8) as usize;
    let mut posts = Vec::new();
    let mut next_id: u64 = 1;
    let base_ts: i64 = 1_600_000_000;

    for q in 0..spec.questions {
        let topic = rng.random_range(0..topics);
        let layout = &layouts[topic];
        let experts = &topic_experts[topic];
        let post_split = q >= split_point;

        // Question kind: generic (shared tags, prominence lottery), drift
        // (signature tag, migrant wins), or specialty (owner's own tags).
        let generic = rng.random::<f64>() < spec.generic_fraction;
        let specialty_owner = experts[rng.random_range(0..experts.len())];
        let drift = !generic
            && post_split
            && layout.drift.map(|(v, _, _)| v) == Some(specialty_owner)
            && rng.random::<f64>() < DRIFT_PROB;

        let mut tags: Vec<usize> = Vec::new();
        let owner;
        let mut answerers: Vec<UserId>;
        let weights: Vec<f64>;

        if drift {
            let (victim, migrant, signature) = layout.drift.unwrap();
            tags.push(signature);
            owner = migrant;
            answerers = vec![victim, migrant];
            if rng.random::<f64>() < 0.3 {
                answerers.push(experts[0]);
            }
            weights = answerers
                .iter()
                .map(|&u| if u == migrant { 7.0 } else { 1.0 })
                .collect();
        } else if generic {
            // Prominence-weighted owner over the topic's experts.
            let total: f64 = experts.iter().map(|&e| prominence(e)).sum();
            let mut target = rng.random::<f64>() * total;
            let mut chosen = experts[experts.len() - 1];
            for &e in experts {
                target -= prominence(e);
                if target <= 0.0 {
                    chosen = e;
                    break;
                }
            }
            owner = chosen;
            for _ in 0..1 + rng.random_range(0..2usize) {
                tags.push(layout.shared[rng.random_range(0..layout.shared.len())]);
            }
            answerers = vec![owner];
            for &peer in experts {
                if peer != owner && rng.random::<f64>() < 0.5 {
                    answerers.push(peer);
                }
            }
            weights = answerers.iter().map(|&u| prominence(u)).collect();
        } else {
            owner = specialty_owner;
            let own = &layout.specialty[&owner];
            for _ in 0..1 + rng.random_range(0..2usize).min(own.len() - 1) {
                tags.push(own[rng.random_range(0..own.len())]);
            }
            if rng.random::<f64>() < 0.6 {
                tags.push(layout.shared[rng.random_range(0..layout.shared.len())]);
            }
            // One peer may answer, but the migrant stays off others' turf
            // before the split point.
            answerers = vec![owner];
            let migrant = layout.drift.map(|(_, m, _)| m);
            for &peer in experts {
                let quiet = !post_split && Some(peer) == migrant && peer != owner;
                if peer != owner && !quiet && rng.random::<f64>() < 0.35 {
                    answerers.push(peer);
                    break;
                }
            }
            weights = answerers
                .iter()
                .map(|&u| if u == owner { owner_weight } else { 1.0 })
                .collect();
        }

        // A casual non-expert may chime in (rarely accepted).
        let asker = non_experts[rng.random_range(0..non_experts.len())];
        let mut weights = weights;
        if rng.random::<f64>() < 0.4 {
            let casual = non_experts[rng.random_range(0..non_experts.len())];
            if casual != asker && !answerers.contains(&casual) {
                answerers.push(casual);
                weights.push(0.2);
            }
        }

        tags.sort_unstable();
        tags.dedup();
        let tag_strs: Vec<String> = tags.iter().map(|&i| tag_names[i].clone()).collect();
        let ts = base_ts + (q as i64) * 120;
        let question_id = next_id;
        next_id += 1;

        // Acceptance lottery.
        let total: f64 = weights.iter().sum();
        let mut target = rng.random::<f64>() * total;
        let mut accepted_idx = answerers.len() - 1;
        for (i, w) in weights.iter().enumerate() {
            target -= w;
            if target <= 0.0 {
                accepted_idx = i;
                break;
            }
        }

        // Titles and bodies carry only tag tokens, stopwords, and one
        // question-unique token, so text retrieval mirrors tag overlap
        // instead of matching on boilerplate.
        let title = format!("{} and {} here", tag_strs[0], tag_strs.last().unwrap());
        let body = format!(
            "<p>{} q{question_id}ref</p>",
            tag_strs.join(" and "),
        );

        let answer_ids: Vec<u64> = answerers
            .iter()
            .enumerate()
            .map(|(i, _)| next_id + i as u64)
            .collect();
        next_id += answerers.len() as u64;

        posts.push(RawPost {
            id: question_id,
            post_kind: PostKind::Question,
            owner_user_id: Some(asker),
            creation_ts: ts,
            title: Some(title),
            body,
            tags: tag_strs.clone(),
            accepted_answer_id: Some(answer_ids[accepted_idx]),
            parent_id: None,
        });
        for (i, (&answerer, &aid)) in answerers.iter().zip(&answer_ids).enumerate() {
            posts.push(RawPost {
                id: aid,
                post_kind: PostKind::Answer,
                owner_user_id: Some(answerer),
                creation_ts: ts + 60 * (i as i64 + 1),
                title: None,
                body: format!("<p>try {} q{aid}ans</p>", tag_strs[0]),
                tags: Vec::new(),
                accepted_answer_id: None,
                parent_id: Some(question_id),
            });
        }
    }

    // Reputation proportional to answering activity.
    let mut answer_counts: BTreeMap<UserId, i64> = BTreeMap::new();
    for p in &posts {
        if p.post_kind == PostKind::Answer {
            *answer_counts.entry(p.owner_user_id.unwrap()).or_insert(0) += 1;
        }
    }
    let reputations: Vec<(UserId, i64)> = (1..=spec.users as u64)
        .map(|u| (u, answer_counts.get(&u).copied().unwrap_or(0) * 10 + 1))
        .collect();

    let truth = GroundTruth {
        tag_topics: tag_names
            .iter()
            .enumerate()
            .map(|(i, n)| (n.clone(), tag_topic(i)))
            .collect(),
        expert_topics: expert_ids.iter().map(|&e| (e, expert_topic(e))).collect(),
        expert_specialties: layouts
            .iter()
            .flat_map(|l| {
                l.specialty.iter().map(|(&e, tags)| {
                    (e, tags.iter().map(|&i| tag_names[i].clone()).collect())
                })
            })
            .collect(),
    };

    Ok(SyntheticCorpus {
        posts,
        reputations,
        truth,
    })
}

/// Write the corpus: `<dir>/posts.jsonl`, `<dir>/users.jsonl`, and
/// `<dir>/ground_truth.json`.
pub fn write_synthetic(corpus: &SyntheticCorpus, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut posts = BufWriter::new(File::create(dir.join("posts.jsonl"))?);
    for p in &corpus.posts {
        serde_json::to_writer(&mut posts, p)?;
        posts.write_all(b"\n")?;
    }
    posts.flush()?;

    let mut users = BufWriter::new(File::create(dir.join("users.jsonl"))?);
    for (id, reputation) in &corpus.reputations {
        writeln!(users, "{{\"id\":{id},\"reputation\":{reputation}}}")?;
    }
    users.flush()?;

    let mut truth = File::create(dir.join("ground_truth.json"))?;
    serde_json::to_writer_pretty(&mut truth, &corpus.truth)?;
    truth.write_all(b"\n")?;
    Ok(())
}
