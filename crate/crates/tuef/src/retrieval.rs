//! BM25 retrieval over two indexes: question tags (TagIndex) and
//! title + body text (TextIndex), plus the alternating merge that turns the
//! two ranked question lists into a content-based expert ordering.
//!
//! Text tokenization lowercases, structurally removes `<...>` HTML spans
//! (keeping code content — identifiers are discriminative in programming
//! Q&A), splits on non-alphanumeric boundaries, and drops stopwords. No
//! stemming. Tag documents keep one token per tag verbatim.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::ingest::{Dataset, PostId, Question, UserId};
use crate::mlg::Layer;
use crate::stopwords::is_stopword;

pub const BM25_K1: f64 = 1.2;
pub const BM25_B: f64 = 0.75;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IndexKind {
    Tag,
    Text,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InvertedIndex {
    pub kind: IndexKind,
    pub remove_stopwords: bool,
    /// term → document frequency
    pub vocabulary: BTreeMap<String, u32>,
    /// term → postings sorted by question id
    pub postings: BTreeMap<String, Vec<(PostId, u32)>>,
    pub doc_lengths: BTreeMap<PostId, u32>,
    pub avg_doc_length: f64,
    /// question → owner of its accepted answer
    pub doc_expert: BTreeMap<PostId, UserId>,
    /// question → creation time, for newest-first tie-breaking
    pub doc_ts: BTreeMap<PostId, i64>,
}

/// BM25 hits: `(question id, score, expert id)` with non-increasing scores.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct RankedQuestions {
    pub hits: Vec<(PostId, f64, UserId)>,
}

/// Tokenizer knobs; the defaults match the shipped configuration
/// (stopwords removed from the text index, no stemming anywhere).
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct IndexConfig {
    pub remove_stopwords: bool,
}

impl Default for IndexConfig {
    fn default() -> Self {
        IndexConfig {
            remove_stopwords: true,
        }
    }
}

/// Remove `<...>` spans without regexes, replacing each span with a space so
/// adjacent words stay separated. An unterminated `<` keeps the rest as text.
pub fn strip_html(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    let mut rest = s;
    while let Some(start) = rest.find('<') {
        out.push_str(&rest[..start]);
        match rest[start..].find('>') {
            Some(end) => {
                out.push(' ');
                rest = &rest[start + end + 1..];
            }
            None => {
                out.push_str(&rest[start..]);
                return out;
            }
        }
    }
    out.push_str(rest);
    out
}

/// Lowercase and split on non-alphanumeric boundaries; optionally drop
/// stopwords.
pub fn tokenize_text(s: &str, remove_stopwords: bool) -> Vec<String> {
    strip_html(s)
        .to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .filter(|t| !(remove_stopwords && is_stopword(t)))
        .map(str::to_string)
        .collect()
}

impl InvertedIndex {
    fn new(kind: IndexKind, remove_stopwords: bool) -> InvertedIndex {
        InvertedIndex {
            kind,
            remove_stopwords,
            vocabulary: BTreeMap::new(),
            postings: BTreeMap::new(),
            doc_lengths: BTreeMap::new(),
            avg_doc_length: 0.0,
            doc_expert: BTreeMap::new(),
            doc_ts: BTreeMap::new(),
        }
    }

    fn add_document(&mut self, id: PostId, tokens: &[String], expert: UserId, ts: i64) {
        let mut tf: BTreeMap<&str, u32> = BTreeMap::new();
        for t in tokens {
            *tf.entry(t.as_str()).or_insert(0) += 1;
        }
        for (term, count) in tf {
            *self.vocabulary.entry(term.to_string()).or_insert(0) += 1;
            self.postings
                .entry(term.to_string())
                .or_default()
                .push((id, count));
        }
        self.doc_lengths.insert(id, tokens.len() as u32);
        self.doc_expert.insert(id, expert);
        self.doc_ts.insert(id, ts);
    }

    fn finalize(&mut self) {
        // Documents are added in ascending id order, so postings are sorted
        // already; keep the invariant explicit.
        for list in self.postings.values_mut() {
            list.sort_by_key(|(id, _)| *id);
        }
        let n = self.doc_lengths.len();
        self.avg_doc_length = if n == 0 {
            0.0
        } else {
            self.doc_lengths.values().map(|&l| l as f64).sum::<f64>() / n as f64
        };
    }

    /// The query token list for a question, matching this index's kind:
    /// concatenated tags for the tag index, title + body for the text index.
    pub fn query_tokens(&self, question: &Question) -> Vec<String> {
        match self.kind {
            IndexKind::Tag => question.tags.clone(),
            IndexKind::Text => {
                let text = format!("{} {}", question.title, question.body);
                tokenize_text(&text, self.remove_stopwords)
            }
        }
    }

    fn idf(&self, term: &str) -> f64 {
        let df = self.vocabulary.get(term).copied().unwrap_or(0) as f64;
        if df == 0.0 {
            return 0.0;
        }
        let n = self.doc_lengths.len() as f64;
        ((n - df + 0.5) / (df + 0.5) + 1.0).ln()
    }
}

/// Build the tag and text indexes over the cleaned training questions.
pub fn build_indexes(train: &Dataset) -> (InvertedIndex, InvertedIndex) {
    build_indexes_with(train, IndexConfig::default())
}

pub fn build_indexes_with(train: &Dataset, cfg: IndexConfig) -> (InvertedIndex, InvertedIndex) {
    let mut tag_index = InvertedIndex::new(IndexKind::Tag, false);
    let mut text_index = InvertedIndex::new(IndexKind::Text, cfg.remove_stopwords);
    for q in train.questions.values() {
        let Some(expert) = train.best_answerer(q.id) else {
            continue;
        };
        tag_index.add_document(q.id, &q.tags, expert, q.creation_ts);
        let text = format!("{} {}", q.title, q.body);
        let tokens = tokenize_text(&text, cfg.remove_stopwords);
        text_index.add_document(q.id, &tokens, expert, q.creation_ts);
    }
    tag_index.finalize();
    text_index.finalize();
    (tag_index, text_index)
}

/// Standard BM25 (k1 = 1.2, b = 0.75). Returns at most `top_n` questions with
/// positive scores; ties go to the newer question.
pub fn bm25_query(index: &InvertedIndex, query_tokens: &[String], top_n: usize) -> RankedQuestions {
    let mut scores: HashMap<PostId, f64> = HashMap::new();
    for token in query_tokens {
        let idf = index.idf(token);
        if idf == 0.0 {
            continue;
        }
        let Some(postings) = index.postings.get(token) else {
            continue;
        };
        for &(doc, tf) in postings {
            let len = index.doc_lengths[&doc] as f64;
            let tf = tf as f64;
            let denom = tf + BM25_K1 * (1.0 - BM25_B + BM25_B * len / index.avg_doc_length);
            *scores.entry(doc).or_insert(0.0) += idf * tf * (BM25_K1 + 1.0) / denom;
        }
    }
    let mut hits: Vec<(PostId, f64, UserId)> = scores
        .into_iter()
        .filter(|(_, s)| *s > 0.0)
        .map(|(doc, s)| (doc, s, index.doc_expert[&doc]))
        .collect();
    hits.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .unwrap()
            .then_with(|| index.doc_ts[&b.0].cmp(&index.doc_ts[&a.0]))
            .then_with(|| b.0.cmp(&a.0))
    });
    hits.truncate(top_n);
    RankedQuestions { hits }
}

/// Interleave the two ranked lists (tag list first by default), map each
/// question to the expert who best-answered it, keep only experts present in
/// the layer and flagged as experts, and deduplicate keeping the first
/// occurrence.
pub fn content_order(
    tag_results: &RankedQuestions,
    text_results: &RankedQuestions,
    layer: &Layer,
    tag_first: bool,
) -> Vec<UserId> {
    let (a, b) = if tag_first {
        (&tag_results.hits, &text_results.hits)
    } else {
        (&text_results.hits, &tag_results.hits)
    };
    let mut merged = Vec::with_capacity(a.len() + b.len());
    let mut i = 0;
    while i < a.len() || i < b.len() {
        if i < a.len() {
            merged.push(a[i].2);
        }
        if i < b.len() {
            merged.push(b[i].2);
        }
        i += 1;
    }
    let mut seen = std::collections::BTreeSet::new();
    merged
        .into_iter()
        .filter(|&u| {
            layer.contains(u) && layer.is_expert.get(&u).copied().unwrap_or(false)
        })
        .filter(|&u| seen.insert(u))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{clean, PostKind, RawPost};

    fn dataset(questions: &[(PostId, &[&str], &str, UserId)]) -> Dataset {
        // (id, tags, title+body text, accepted answerer)
        let mut raw = Vec::new();
        for &(id, tags, text, expert) in questions {
            raw.push(RawPost {
                id,
                post_kind: PostKind::Question,
                owner_user_id: Some(9999),
                creation_ts: id as i64,
                title: Some(text.to_string()),
                body: String::new(),
                tags: tags.iter().map(|t| t.to_string()).collect(),
                accepted_answer_id: Some(id + 1000),
                parent_id: None,
            });
            raw.push(RawPost {
                id: id + 1000,
                post_kind: PostKind::Answer,
                owner_user_id: Some(expert),
                creation_ts: id as i64 + 1,
                title: None,
                body: String::new(),
                tags: vec![],
                accepted_answer_id: None,
                parent_id: Some(id),
            });
        }
        clean(&raw).0
    }

    #[test]
    fn tag_document_length_equals_tag_count() {
        let ds = dataset(&[(1, &["python", "pandas"], "t", 2)]);
        let (tag, _) = build_indexes(&ds);
        assert_eq!(tag.doc_lengths[&1], 2);
    }

    #[test]
    fn document_frequency_counts_documents_not_occurrences() {
        let ds = dataset(&[
            (1, &["a"], "hello hello world", 2),
            (2, &["b"], "goodbye moon", 3),
        ]);
        let (_, text) = build_indexes(&ds);
        assert_eq!(text.vocabulary["hello"], 1);
        assert_eq!(text.postings["hello"], vec![(1, 2)]);
    }

    #[test]
    fn tokenizer_keeps_exception_names() {
        let tokens = tokenize_text("Fix NullPointerException in Java", true);
        assert!(tokens.contains(&"nullpointerexception".to_string()));
        assert!(tokens.contains(&"java".to_string()));
        assert!(!tokens.contains(&"in".to_string()));
    }

    #[test]
    fn html_is_stripped_code_content_kept() {
        let tokens = tokenize_text(
            "<p>use <code>Vec::truncate</code> here</p>",
            true,
        );
        assert!(tokens.contains(&"vec".to_string()));
        assert!(tokens.contains(&"truncate".to_string()));
        assert!(!tokens.iter().any(|t| t == "p" || t == "code"));
    }

    #[test]
    fn strip_html_unterminated_tag_kept_as_text() {
        assert_eq!(strip_html("a < b"), "a < b");
        assert_eq!(strip_html("x<em>y</em>z"), "x y z");
    }

    #[test]
    fn single_document_query_ranks_it_first() {
        let ds = dataset(&[(1, &["solo"], "unique token body", 2)]);
        let (tag, _) = build_indexes(&ds);
        let hits = bm25_query(&tag, &["solo".to_string()], 10);
        assert_eq!(hits.hits.len(), 1);
        assert_eq!(hits.hits[0].0, 1);
        assert!(hits.hits[0].1 > 0.0);
        assert_eq!(hits.hits[0].2, 2);
    }

    #[test]
    fn absent_query_term_yields_empty_result() {
        let ds = dataset(&[(1, &["a"], "x", 2)]);
        let (tag, _) = build_indexes(&ds);
        assert!(bm25_query(&tag, &["zzz".to_string()], 10).hits.is_empty());
    }

    /// Frozen oracle: scores computed independently from the BM25 formula
    /// (k1=1.2, b=0.75, idf = ln((N-df+0.5)/(df+0.5)+1)) on a 5-document
    /// corpus with query "rust lifetime".
    #[test]
    fn five_document_corpus_matches_hand_computed_table() {
        let ds = dataset(&[
            (1, &["x1"], "rust lifetime borrow", 11),
            (2, &["x2"], "rust async await tokio", 12),
            (3, &["x3"], "python pandas dataframe", 13),
            (4, &["x4"], "rust lifetime trait bound generic", 14),
            (5, &["x5"], "java spring bean", 15),
        ]);
        let (_, text) = build_indexes(&ds);
        let q = vec!["rust".to_string(), "lifetime".to_string()];
        let result = bm25_query(&text, &q, 10);
        let scores: BTreeMap<PostId, f64> =
            result.hits.iter().map(|&(d, s, _)| (d, s)).collect();
        let expected = [
            (1, 1.517962694531947),
            (2, 0.515561870266049),
            (4, 1.220322950506075),
        ];
        assert_eq!(scores.len(), expected.len());
        for (doc, want) in expected {
            let got = scores[&doc];
            assert!(
                (got - want).abs() < 1e-9,
                "doc {doc}: got {got:.15}, want {want:.15}"
            );
        }
        // Ranking order: doc1 > doc4 > doc2.
        let order: Vec<PostId> = result.hits.iter().map(|h| h.0).collect();
        assert_eq!(order, vec![1, 4, 2]);
    }

    #[test]
    fn unmatched_extra_term_never_changes_scores() {
        let ds = dataset(&[
            (1, &["a"], "alpha beta", 2),
            (2, &["b"], "alpha gamma", 3),
        ]);
        let (_, text) = build_indexes(&ds);
        let base = bm25_query(&text, &["alpha".to_string()], 10);
        let extended = bm25_query(
            &text,
            &["alpha".to_string(), "unseen".to_string()],
            10,
        );
        assert_eq!(base.hits.len(), extended.hits.len());
        for (a, b) in base.hits.iter().zip(&extended.hits) {
            assert_eq!(a.0, b.0);
            assert!((a.1 - b.1).abs() < 1e-15);
        }
    }

    #[test]
    fn ties_break_newer_first() {
        // Identical one-token docs; scores tie exactly, newer id wins.
        let ds = dataset(&[(1, &["t"], "borrow", 2), (2, &["t"], "borrow", 3)]);
        let (_, text) = build_indexes(&ds);
        let hits = bm25_query(&text, &["borrow".to_string()], 10).hits;
        assert_eq!(hits[0].0, 2);
        assert_eq!(hits[1].0, 1);
    }

    fn ranked(entries: &[(PostId, UserId)]) -> RankedQuestions {
        RankedQuestions {
            hits: entries
                .iter()
                .enumerate()
                .map(|(i, &(q, e))| (q, 100.0 - i as f64, e))
                .collect(),
        }
    }

    fn expert_layer(users: &[UserId]) -> Layer {
        Layer::from_edges(0, users.to_vec(), &[])
    }

    #[test]
    fn interleave_tag_first() {
        // tag experts [A=1, B=2], text experts [C=3] → [1, 3, 2]
        let tag = ranked(&[(10, 1), (11, 2)]);
        let text = ranked(&[(20, 3)]);
        let layer = expert_layer(&[1, 2, 3]);
        assert_eq!(content_order(&tag, &text, &layer, true), vec![1, 3, 2]);
    }

    #[test]
    fn interleave_deduplicates_keeping_first() {
        // tag [A=1, B=2], text [B=2, C=3] → [1, 2, 3]
        let tag = ranked(&[(10, 1), (11, 2)]);
        let text = ranked(&[(20, 2), (21, 3)]);
        let layer = expert_layer(&[1, 2, 3]);
        assert_eq!(content_order(&tag, &text, &layer, true), vec![1, 2, 3]);
    }

    #[test]
    fn interleave_of_empty_lists_is_empty() {
        let layer = expert_layer(&[1]);
        assert!(content_order(
            &RankedQuestions::default(),
            &RankedQuestions::default(),
            &layer,
            true
        )
        .is_empty());
    }

    #[test]
    fn content_order_filters_to_layer_experts() {
        let tag = ranked(&[(10, 1), (11, 4), (12, 2)]);
        let text = ranked(&[(20, 5)]);
        let mut layer = expert_layer(&[1, 2, 5]);
        layer.is_expert.insert(5, false); // in layer but not an expert
        let order = content_order(&tag, &text, &layer, true);
        assert_eq!(order, vec![1, 2]);
        let unique: std::collections::BTreeSet<_> = order.iter().collect();
        assert_eq!(unique.len(), order.len());
    }

    #[test]
    fn interleave_preserves_relative_order_within_sources() {
        let tag = ranked(&[(1, 1), (2, 2), (3, 3)]);
        let text = ranked(&[(4, 4), (5, 5)]);
        let layer = expert_layer(&[1, 2, 3, 4, 5]);
        let order = content_order(&tag, &text, &layer, true);
        let pos = |u: UserId| order.iter().position(|&x| x == u).unwrap();
        assert!(pos(1) < pos(2) && pos(2) < pos(3));
        assert!(pos(4) < pos(5));
    }
}
