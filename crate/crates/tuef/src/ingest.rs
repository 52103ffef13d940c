//! Parse, clean, and temporally split raw CQA post data.
//!
//! The canonical interchange format is JSON lines, one post per line with
//! snake_case keys. An adapter converts the Stack Exchange `Posts.xml` dump
//! format to the same [`RawPost`] records. Cleaning produces an immutable
//! [`Dataset`] whose questions all have an accepted answer from a user other
//! than the asker.

use std::collections::HashMap;
use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type PostId = u64;
pub type UserId = u64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PostKind {
    Question,
    Answer,
}

/// One record of the raw interchange format. Unknown input fields are ignored.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RawPost {
    pub id: PostId,
    pub post_kind: PostKind,
    pub owner_user_id: Option<UserId>,
    /// Creation time as UTC epoch seconds.
    pub creation_ts: i64,
    pub title: Option<String>,
    pub body: String,
    #[serde(default)]
    pub tags: Vec<String>,
    pub accepted_answer_id: Option<PostId>,
    pub parent_id: Option<PostId>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Question {
    pub id: PostId,
    pub owner_user_id: UserId,
    pub creation_ts: i64,
    pub title: String,
    pub body: String,
    pub tags: Vec<String>,
    pub accepted_answer_id: PostId,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Answer {
    pub id: PostId,
    pub owner_user_id: UserId,
    pub creation_ts: i64,
    pub parent_id: PostId,
    pub accepted: bool,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct UserStats {
    pub answers: u64,
    pub accepted: u64,
    pub reputation: i64,
    /// Creation times of this user's retained answers, ascending.
    pub answer_ts: Vec<i64>,
}

impl UserStats {
    /// Acceptance ratio, 0 for users without answers.
    pub fn ratio(&self) -> f64 {
        if self.answers == 0 {
            0.0
        } else {
            self.accepted as f64 / self.answers as f64
        }
    }
}

/// Cleaned corpus: every question has its accepted answer present, every
/// answer resolves to a retained question, and no question was best-answered
/// by its own asker. Immutable after construction.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Dataset {
    pub questions: BTreeMap<PostId, Question>,
    pub answers: BTreeMap<PostId, Answer>,
    pub users: BTreeMap<UserId, UserStats>,
    pub tag_universe: BTreeSet<String>,
}

impl Dataset {
    /// The user who wrote the accepted answer of `question_id`, if retained.
    pub fn best_answerer(&self, question_id: PostId) -> Option<UserId> {
        let q = self.questions.get(&question_id)?;
        self.answers
            .get(&q.accepted_answer_id)
            .map(|a| a.owner_user_id)
    }

    /// Reconstruct the raw posts this dataset retains (used to check that
    /// cleaning is idempotent).
    pub fn to_raw_posts(&self) -> Vec<RawPost> {
        let mut out = Vec::with_capacity(self.questions.len() + self.answers.len());
        for q in self.questions.values() {
            out.push(RawPost {
                id: q.id,
                post_kind: PostKind::Question,
                owner_user_id: Some(q.owner_user_id),
                creation_ts: q.creation_ts,
                title: Some(q.title.clone()),
                body: q.body.clone(),
                tags: q.tags.clone(),
                accepted_answer_id: Some(q.accepted_answer_id),
                parent_id: None,
            });
        }
        for a in self.answers.values() {
            out.push(RawPost {
                id: a.id,
                post_kind: PostKind::Answer,
                owner_user_id: Some(a.owner_user_id),
                creation_ts: a.creation_ts,
                title: None,
                body: String::new(),
                tags: Vec::new(),
                accepted_answer_id: None,
                parent_id: Some(a.parent_id),
            });
        }
        out
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SplitDataset {
    pub train: Dataset,
    pub test: Dataset,
    pub split_ts: i64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PostFormat {
    Jsonl,
    XmlDump,
}

/// Per-file parse outcome; malformed records are skipped, not fatal.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ParseReport {
    pub records: usize,
    pub parsed: usize,
    pub skipped: usize,
    pub skip_reasons: BTreeMap<String, usize>,
}

impl ParseReport {
    fn skip(&mut self, reason: &str) {
        self.skipped += 1;
        *self.skip_reasons.entry(reason.to_string()).or_insert(0) += 1;
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct CleanReport {
    pub input_posts: usize,
    pub retained_questions: usize,
    pub retained_answers: usize,
    pub dropped: BTreeMap<String, usize>,
}

impl CleanReport {
    fn drop_one(&mut self, reason: &str) {
        *self.dropped.entry(reason.to_string()).or_insert(0) += 1;
    }
}

// ---------------------------------------------------------------------------
// Parsing
// ---------------------------------------------------------------------------

#[derive(Deserialize)]
#[serde(untagged)]
enum TsValue {
    Int(i64),
    Str(String),
}

#[derive(Deserialize)]
struct RawPostWire {
    id: Option<PostId>,
    post_kind: Option<String>,
    owner_user_id: Option<UserId>,
    creation_ts: Option<TsValue>,
    title: Option<String>,
    body: Option<String>,
    #[serde(default)]
    tags: Vec<String>,
    accepted_answer_id: Option<PostId>,
    parent_id: Option<PostId>,
}

/// Parse `"2020-07-01T12:34:56[.123][Z]"` to UTC epoch seconds.
/// Sub-second digits are truncated.
fn parse_timestamp(s: &str) -> Option<i64> {
    let s = s.trim().trim_end_matches('Z');
    let (date, time) = s.split_once('T')?;
    let mut dp = date.split('-');
    let year: i64 = dp.next()?.parse().ok()?;
    let month: i64 = dp.next()?.parse().ok()?;
    let day: i64 = dp.next()?.parse().ok()?;
    if dp.next().is_some() || !(1..=12).contains(&month) || !(1..=31).contains(&day) {
        return None;
    }
    let time = time.split('.').next()?;
    let mut tp = time.split(':');
    let hour: i64 = tp.next()?.parse().ok()?;
    let minute: i64 = tp.next()?.parse().ok()?;
    let second: i64 = tp.next().unwrap_or("0").parse().ok()?;
    if !(0..24).contains(&hour) || !(0..60).contains(&minute) || !(0..62).contains(&second) {
        return None;
    }
    // Days-from-civil (Howard Hinnant's algorithm).
    let y = if month <= 2 { year - 1 } else { year };
    let era = if y >= 0 { y } else { y - 399 } / 400;
    let yoe = y - era * 400;
    let mp = (month + 9) % 12;
    let doy = (153 * mp + 2) / 5 + day - 1;
    let doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    let days = era * 146_097 + doe - 719_468;
    Some(days * 86_400 + hour * 3_600 + minute * 60 + second)
}

fn ts_value_to_epoch(v: &TsValue) -> Option<i64> {
    match v {
        TsValue::Int(i) => Some(*i),
        TsValue::Str(s) => parse_timestamp(s),
    }
}

/// Lowercase, trim, and split dump-form tag strings.
///
/// Accepts plain tag tokens, the `<a><b>` dump encoding, and the `|a|b|`
/// encoding used by newer dumps.
pub fn normalize_tags(raw: &[String]) -> Vec<String> {
    let mut out = Vec::new();
    for item in raw {
        if item.contains('<') || item.contains('|') {
            out.extend(parse_dump_tags(item));
        } else {
            let t = item.trim().to_lowercase();
            if !t.is_empty() {
                out.push(t);
            }
        }
    }
    out
}

fn parse_dump_tags(s: &str) -> Vec<String> {
    s.split(['<', '>', '|'])
        .map(|t| t.trim().to_lowercase())
        .filter(|t| !t.is_empty())
        .collect()
}

fn wire_to_post(wire: RawPostWire, report: &mut ParseReport) -> Option<RawPost> {
    let Some(id) = wire.id else {
        report.skip("missing_id");
        return None;
    };
    let kind = match wire.post_kind.as_deref() {
        Some("question") => PostKind::Question,
        Some("answer") => PostKind::Answer,
        _ => {
            report.skip("bad_post_kind");
            return None;
        }
    };
    let Some(creation_ts) = wire.creation_ts.as_ref().and_then(ts_value_to_epoch) else {
        report.skip("missing_creation_ts");
        return None;
    };
    report.parsed += 1;
    Some(RawPost {
        id,
        post_kind: kind,
        owner_user_id: wire.owner_user_id,
        creation_ts,
        title: wire.title,
        body: wire.body.unwrap_or_default(),
        tags: normalize_tags(&wire.tags),
        accepted_answer_id: wire.accepted_answer_id,
        parent_id: wire.parent_id,
    })
}

/// Parse a posts file in the declared format. Malformed records are skipped
/// and counted; an unreadable file is a fatal error.
pub fn parse_posts(path: &Path, format: PostFormat) -> Result<(Vec<RawPost>, ParseReport)> {
    let file = File::open(path).map_err(|e| Error::UnreadableFile {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    let reader = BufReader::new(file);
    let mut posts = Vec::new();
    let mut report = ParseReport::default();

    for line in reader.lines() {
        let line = line.map_err(|e| Error::UnreadableFile {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        match format {
            PostFormat::Jsonl => {
                report.records += 1;
                match serde_json::from_str::<RawPostWire>(trimmed) {
                    Ok(wire) => {
                        if let Some(post) = wire_to_post(wire, &mut report) {
                            posts.push(post);
                        }
                    }
                    Err(_) => report.skip("malformed_json"),
                }
            }
            PostFormat::XmlDump => {
                if !trimmed.starts_with("<row") {
                    continue;
                }
                report.records += 1;
                match xml_row_to_wire(trimmed) {
                    Some(wire) => {
                        if let Some(post) = wire_to_post(wire, &mut report) {
                            posts.push(post);
                        }
                    }
                    None => report.skip("other_post_type"),
                }
            }
        }
    }
    Ok((posts, report))
}

/// Parse an optional users file (JSONL with `id` and `reputation` fields).
pub fn parse_users(path: &Path) -> Result<BTreeMap<UserId, i64>> {
    #[derive(Deserialize)]
    struct UserWire {
        id: UserId,
        #[serde(default)]
        reputation: i64,
    }
    let file = File::open(path).map_err(|e| Error::UnreadableFile {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    let mut out = BTreeMap::new();
    for line in BufReader::new(file).lines() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if let Ok(u) = serde_json::from_str::<UserWire>(trimmed) {
            out.insert(u.id, u.reputation);
        }
    }
    Ok(out)
}

// -- XML dump adapter --------------------------------------------------------

fn xml_unescape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    let mut rest = s;
    while let Some(pos) = rest.find('&') {
        out.push_str(&rest[..pos]);
        rest = &rest[pos..];
        let Some(end) = rest.find(';') else {
            out.push_str(rest);
            return out;
        };
        let entity = &rest[1..end];
        match entity {
            "lt" => out.push('<'),
            "gt" => out.push('>'),
            "amp" => out.push('&'),
            "quot" => out.push('"'),
            "apos" => out.push('\''),
            _ => {
                let code = entity
                    .strip_prefix("#x")
                    .or_else(|| entity.strip_prefix("#X"))
                    .and_then(|h| u32::from_str_radix(h, 16).ok())
                    .or_else(|| entity.strip_prefix('#').and_then(|d| d.parse().ok()));
                match code.and_then(char::from_u32) {
                    Some(c) => out.push(c),
                    None => {
                        out.push('&');
                        out.push_str(entity);
                        out.push(';');
                    }
                }
            }
        }
        rest = &rest[end + 1..];
    }
    out.push_str(rest);
    out
}

fn xml_attrs(row: &str) -> HashMap<String, String> {
    let mut attrs = HashMap::new();
    let bytes = row.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        // attribute name
        while i < bytes.len() && !bytes[i].is_ascii_alphabetic() {
            i += 1;
        }
        let name_start = i;
        while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
            i += 1;
        }
        if i >= bytes.len() || name_start == i {
            break;
        }
        let name = &row[name_start..i];
        while i < bytes.len() && bytes[i].is_ascii_whitespace() {
            i += 1;
        }
        if i >= bytes.len() || bytes[i] != b'=' {
            continue;
        }
        i += 1;
        while i < bytes.len() && bytes[i].is_ascii_whitespace() {
            i += 1;
        }
        if i >= bytes.len() || bytes[i] != b'"' {
            continue;
        }
        i += 1;
        let val_start = i;
        while i < bytes.len() && bytes[i] != b'"' {
            i += 1;
        }
        if i >= bytes.len() {
            break;
        }
        attrs.insert(name.to_string(), xml_unescape(&row[val_start..i]));
        i += 1;
    }
    attrs
}

/// Convert one `<row .../>` element of `Posts.xml` into the wire format.
/// Returns `None` for post types other than question (1) and answer (2).
fn xml_row_to_wire(row: &str) -> Option<RawPostWire> {
    let attrs = xml_attrs(row);
    let kind = match attrs.get("PostTypeId").map(String::as_str) {
        Some("1") => "question",
        Some("2") => "answer",
        _ => return None,
    };
    let tags = attrs
        .get("Tags")
        .map(|t| vec![t.clone()])
        .unwrap_or_default();
    Some(RawPostWire {
        id: attrs.get("Id").and_then(|v| v.parse().ok()),
        post_kind: Some(kind.to_string()),
        owner_user_id: attrs.get("OwnerUserId").and_then(|v| v.parse().ok()),
        creation_ts: attrs.get("CreationDate").map(|v| TsValue::Str(v.clone())),
        title: attrs.get("Title").cloned(),
        body: attrs.get("Body").cloned(),
        tags,
        accepted_answer_id: attrs.get("AcceptedAnswerId").and_then(|v| v.parse().ok()),
        parent_id: attrs.get("ParentId").and_then(|v| v.parse().ok()),
    })
}

// ---------------------------------------------------------------------------
// Cleaning
// ---------------------------------------------------------------------------

/// Clean raw posts into a [`Dataset`], optionally attaching reputations from
/// a separate users file (missing users default to reputation 0).
pub fn clean_with_reputation(
    raw: &[RawPost],
    reputations: Option<&BTreeMap<UserId, i64>>,
) -> (Dataset, CleanReport) {
    let mut report = CleanReport {
        input_posts: raw.len(),
        ..CleanReport::default()
    };

    let mut questions: BTreeMap<PostId, &RawPost> = BTreeMap::new();
    let mut answers: BTreeMap<PostId, &RawPost> = BTreeMap::new();
    let mut seen_ids: BTreeSet<PostId> = BTreeSet::new();

    for post in raw {
        if !seen_ids.insert(post.id) {
            report.drop_one("duplicate_id");
            continue;
        }
        let Some(_owner) = post.owner_user_id else {
            report.drop_one("missing_owner");
            continue;
        };
        match post.post_kind {
            PostKind::Question => {
                if post.accepted_answer_id.is_none() {
                    report.drop_one("question_without_accepted_answer");
                    continue;
                }
                if post.tags.is_empty() {
                    report.drop_one("question_without_tags");
                    continue;
                }
                questions.insert(post.id, post);
            }
            PostKind::Answer => {
                if post.parent_id.is_none() {
                    report.drop_one("answer_without_parent");
                    continue;
                }
                answers.insert(post.id, post);
            }
        }
    }

    // Resolve accepted answers; drop questions whose accepted answer is
    // missing or written by the asker.
    let mut retained_questions: BTreeMap<PostId, Question> = BTreeMap::new();
    for (&qid, q) in &questions {
        let accepted_id = q.accepted_answer_id.unwrap();
        let accepted = match answers.get(&accepted_id) {
            Some(a) if a.parent_id == Some(qid) => a,
            _ => {
                report.drop_one("accepted_answer_missing");
                continue;
            }
        };
        if accepted.owner_user_id == q.owner_user_id {
            report.drop_one("asker_is_best_answerer");
            continue;
        }
        retained_questions.insert(
            qid,
            Question {
                id: qid,
                owner_user_id: q.owner_user_id.unwrap(),
                creation_ts: q.creation_ts,
                title: q.title.clone().unwrap_or_default(),
                body: q.body.clone(),
                tags: q.tags.clone(),
                accepted_answer_id: accepted_id,
            },
        );
    }

    let mut retained_answers: BTreeMap<PostId, Answer> = BTreeMap::new();
    for (&aid, a) in &answers {
        let parent = a.parent_id.unwrap();
        let Some(q) = retained_questions.get(&parent) else {
            report.drop_one("answer_to_dropped_question");
            continue;
        };
        retained_answers.insert(
            aid,
            Answer {
                id: aid,
                owner_user_id: a.owner_user_id.unwrap(),
                creation_ts: a.creation_ts,
                parent_id: parent,
                accepted: q.accepted_answer_id == aid,
            },
        );
    }

    report.retained_questions = retained_questions.len();
    report.retained_answers = retained_answers.len();
    let ds = assemble_dataset(retained_questions, retained_answers, reputations);
    (ds, report)
}

/// Clean raw posts with no reputation file.
pub fn clean(raw: &[RawPost]) -> (Dataset, CleanReport) {
    clean_with_reputation(raw, None)
}

/// Recompute user stats and the tag universe from retained posts.
fn assemble_dataset(
    questions: BTreeMap<PostId, Question>,
    answers: BTreeMap<PostId, Answer>,
    reputations: Option<&BTreeMap<UserId, i64>>,
) -> Dataset {
    let mut users: BTreeMap<UserId, UserStats> = BTreeMap::new();
    let mut tag_universe: BTreeSet<String> = BTreeSet::new();

    for q in questions.values() {
        users.entry(q.owner_user_id).or_default();
        for t in &q.tags {
            tag_universe.insert(t.clone());
        }
    }
    // Deterministic answer_ts order: sort answers by (ts, id) first.
    let mut by_time: Vec<&Answer> = answers.values().collect();
    by_time.sort_by_key(|a| (a.creation_ts, a.id));
    for a in by_time {
        let stats = users.entry(a.owner_user_id).or_default();
        stats.answers += 1;
        if a.accepted {
            stats.accepted += 1;
        }
        stats.answer_ts.push(a.creation_ts);
    }
    if let Some(reps) = reputations {
        for (uid, stats) in users.iter_mut() {
            stats.reputation = reps.get(uid).copied().unwrap_or(0);
        }
    }
    Dataset {
        questions,
        answers,
        users,
        tag_universe,
    }
}

// ---------------------------------------------------------------------------
// Temporal split
// ---------------------------------------------------------------------------

/// Split questions by time: the first `ceil(ratio * n)` questions ordered by
/// `(creation_ts, id)` go to train, the rest to test. Answers follow their
/// question; user stats are recomputed per split.
pub fn temporal_split(ds: &Dataset, ratio: f64) -> Result<SplitDataset> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::InvalidParam(format!(
            "split ratio must be in (0,1), got {ratio}"
        )));
    }
    let mut order: Vec<&Question> = ds.questions.values().collect();
    order.sort_by_key(|q| (q.creation_ts, q.id));
    let n = order.len();
    let n_train = ((ratio * n as f64).ceil() as usize).min(n);

    let mut answers_by_parent: BTreeMap<PostId, Vec<&Answer>> = BTreeMap::new();
    for a in ds.answers.values() {
        answers_by_parent.entry(a.parent_id).or_default().push(a);
    }

    let build = |qs: &[&Question]| -> Dataset {
        let questions: BTreeMap<PostId, Question> =
            qs.iter().map(|q| (q.id, (*q).clone())).collect();
        let mut answers: BTreeMap<PostId, Answer> = BTreeMap::new();
        for q in qs {
            if let Some(list) = answers_by_parent.get(&q.id) {
                for a in list {
                    answers.insert(a.id, (*a).clone());
                }
            }
        }
        let reps: BTreeMap<UserId, i64> = ds
            .users
            .iter()
            .map(|(id, s)| (*id, s.reputation))
            .collect();
        assemble_dataset(questions, answers, Some(&reps))
    };

    let train = build(&order[..n_train]);
    let test = build(&order[n_train..]);
    let split_ts = order
        .get(n_train)
        .map(|q| q.creation_ts)
        .unwrap_or_else(|| order.last().map(|q| q.creation_ts).unwrap_or(0));

    Ok(SplitDataset {
        train,
        test,
        split_ts,
    })
}

// ---------------------------------------------------------------------------
// Dataset directory I/O
// ---------------------------------------------------------------------------

fn write_jsonl<T: Serialize>(path: &Path, items: impl Iterator<Item = T>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for item in items {
        serde_json::to_writer(&mut w, &item)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let file = File::open(path)?;
    let mut out = Vec::new();
    for line in BufReader::new(file).lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line)?);
    }
    Ok(out)
}

/// Serialize a dataset as a directory of JSONL files.
pub fn save_dataset(ds: &Dataset, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    write_jsonl(&dir.join("questions.jsonl"), ds.questions.values())?;
    write_jsonl(&dir.join("answers.jsonl"), ds.answers.values())?;
    #[derive(Serialize)]
    struct UserRow<'a> {
        id: UserId,
        #[serde(flatten)]
        stats: &'a UserStats,
    }
    write_jsonl(
        &dir.join("users.jsonl"),
        ds.users.iter().map(|(id, stats)| UserRow { id: *id, stats }),
    )?;
    Ok(())
}

pub fn load_dataset(dir: &Path) -> Result<Dataset> {
    let questions: Vec<Question> = read_jsonl(&dir.join("questions.jsonl"))?;
    let answers: Vec<Answer> = read_jsonl(&dir.join("answers.jsonl"))?;
    #[derive(Deserialize)]
    struct UserRow {
        id: UserId,
        #[serde(flatten)]
        stats: UserStats,
    }
    let users: Vec<UserRow> = read_jsonl(&dir.join("users.jsonl"))?;
    let mut tag_universe = BTreeSet::new();
    for q in &questions {
        for t in &q.tags {
            tag_universe.insert(t.clone());
        }
    }
    Ok(Dataset {
        questions: questions.into_iter().map(|q| (q.id, q)).collect(),
        answers: answers.into_iter().map(|a| (a.id, a)).collect(),
        users: users.into_iter().map(|u| (u.id, u.stats)).collect(),
        tag_universe,
    })
}

/// Split manifest written next to the two dataset directories.
#[derive(Debug, Serialize, Deserialize)]
pub struct SplitManifest {
    pub split_ts: i64,
    pub train_questions: usize,
    pub train_answers: usize,
    pub test_questions: usize,
    pub test_answers: usize,
}

pub fn save_split(split: &SplitDataset, dir: &Path) -> Result<()> {
    save_dataset(&split.train, &dir.join("train"))?;
    save_dataset(&split.test, &dir.join("test"))?;
    let manifest = SplitManifest {
        split_ts: split.split_ts,
        train_questions: split.train.questions.len(),
        train_answers: split.train.answers.len(),
        test_questions: split.test.questions.len(),
        test_answers: split.test.answers.len(),
    };
    let mut f = File::create(dir.join("split_manifest.json"))?;
    serde_json::to_writer_pretty(&mut f, &manifest)?;
    f.write_all(b"\n")?;
    Ok(())
}

pub fn load_split(dir: &Path) -> Result<SplitDataset> {
    let train = load_dataset(&dir.join("train"))?;
    let test = load_dataset(&dir.join("test"))?;
    let manifest: SplitManifest =
        serde_json::from_reader(File::open(dir.join("split_manifest.json"))?)?;
    Ok(SplitDataset {
        train,
        test,
        split_ts: manifest.split_ts,
    })
}
