//! Learning-to-rank dataset: per-query candidate groups with one positive
//! label (the actual best answerer), plus the columnar text interchange
//! format (feature matrix + query-id sidecar).

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{extract_features, FeatureSet};
use crate::ingest::{Dataset, PostId, Question, UserId};
use crate::par;
use crate::selection::{select_candidates, SelectionConfig, SelectionContext};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LtrRow {
    pub expert_id: UserId,
    pub features: Vec<f64>,
    pub label: u8,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QueryGroup {
    pub query_id: PostId,
    pub rows: Vec<LtrRow>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct LtrDataset {
    pub feature_names: Vec<String>,
    pub groups: Vec<QueryGroup>,
}

impl LtrDataset {
    pub fn arity(&self) -> usize {
        self.feature_names.len()
    }

    pub fn n_samples(&self) -> usize {
        self.groups.iter().map(|g| g.rows.len()).sum()
    }

    /// Structural validation: consistent arity, at least two samples per
    /// group, exactly one positive label per group.
    pub fn validate(&self) -> Result<()> {
        for group in &self.groups {
            if group.rows.len() < 2 {
                return Err(Error::InvalidParam(format!(
                    "query {} has fewer than 2 candidates",
                    group.query_id
                )));
            }
            let positives = group.rows.iter().filter(|r| r.label > 0).count();
            if positives != 1 {
                return Err(Error::InvalidParam(format!(
                    "query {} has {positives} positive labels, expected exactly 1",
                    group.query_id
                )));
            }
            for row in &group.rows {
                if row.features.len() != self.arity() {
                    return Err(Error::ArityMismatch {
                        expected: self.arity(),
                        got: row.features.len(),
                    });
                }
            }
        }
        Ok(())
    }
}

/// Train/validation halves of the LtR data, split temporally by query order.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LtrSplit {
    pub train: LtrDataset,
    pub validation: LtrDataset,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct LtrBuildReport {
    pub input_queries: usize,
    pub retained: usize,
    /// Queries whose actual best answerer was not among the candidates.
    pub dropped_missing_answerer: usize,
    /// Queries left with fewer than two candidates.
    pub dropped_small_group: usize,
}

/// Run selection + feature extraction for each query, label the actual best
/// answerer 1, drop queries whose answerer was not selected, and split
/// 0.8/0.2 into train/validation preserving temporal order.
pub fn build_ltr_dataset(
    queries: &[&Question],
    labels_from: &Dataset,
    ctx: &SelectionContext,
    sel_cfg: &SelectionConfig,
    feature_set: FeatureSet,
) -> Result<(LtrSplit, LtrBuildReport)> {
    let mask = feature_set.mask();
    let feature_names = feature_set.names();

    let built: Vec<Result<Option<QueryGroup>>> = par::map_collect(queries, |q| {
        let Some(answerer) = labels_from.best_answerer(q.id) else {
            return Ok(None);
        };
        let output = select_candidates(q, ctx, sel_cfg)?;
        if !output.candidates.candidates.contains(&answerer) {
            return Ok(None);
        }
        let vectors = extract_features(
            q,
            &output.candidates,
            ctx,
            &output.tag_results,
            &output.text_results,
        );
        let rows: Vec<LtrRow> = vectors
            .into_iter()
            .map(|(u, fv)| LtrRow {
                expert_id: u,
                features: fv
                    .values
                    .iter()
                    .zip(mask)
                    .filter(|(_, keep)| *keep)
                    .map(|(v, _)| *v)
                    .collect(),
                label: u8::from(u == answerer),
            })
            .collect();
        Ok(Some(QueryGroup {
            query_id: q.id,
            rows,
        }))
    });

    let mut report = LtrBuildReport {
        input_queries: queries.len(),
        ..LtrBuildReport::default()
    };
    let mut groups = Vec::new();
    for item in built {
        match item? {
            Some(group) if group.rows.len() >= 2 => groups.push(group),
            Some(_) => report.dropped_small_group += 1,
            None => report.dropped_missing_answerer += 1,
        }
    }
    report.retained = groups.len();
    if groups.is_empty() {
        return Err(Error::DegenerateDataset(
            "no query retained its best answerer among the candidates".into(),
        ));
    }

    let n_train = ((groups.len() as f64) * 0.8).ceil() as usize;
    let validation_groups = groups.split_off(n_train.min(groups.len()));
    let split = LtrSplit {
        train: LtrDataset {
            feature_names: feature_names.clone(),
            groups,
        },
        validation: LtrDataset {
            feature_names,
            groups: validation_groups,
        },
    };
    split.train.validate()?;
    split.validation.validate()?;
    Ok((split, report))
}

/// Write the dataset as `<stem>.tsv` (header: Label, ExpertId, feature
/// names; one row per query-candidate pair) plus `<stem>.qid` (one query id
/// per data row).
pub fn save_ltr_dataset(ds: &LtrDataset, dir: &Path, stem: &str) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut data = BufWriter::new(File::create(dir.join(format!("{stem}.tsv")))?);
    let mut qid = BufWriter::new(File::create(dir.join(format!("{stem}.qid")))?);
    writeln!(data, "Label\tExpertId\t{}", ds.feature_names.join("\t"))?;
    for group in &ds.groups {
        for row in &group.rows {
            write!(data, "{}\t{}", row.label, row.expert_id)?;
            for v in &row.features {
                write!(data, "\t{v}")?;
            }
            writeln!(data)?;
            writeln!(qid, "{}", group.query_id)?;
        }
    }
    data.flush()?;
    qid.flush()?;
    Ok(())
}

pub fn load_ltr_dataset(dir: &Path, stem: &str) -> Result<LtrDataset> {
    let data = BufReader::new(File::open(dir.join(format!("{stem}.tsv")))?);
    let qid = BufReader::new(File::open(dir.join(format!("{stem}.qid")))?);
    let mut lines = data.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Artifact("empty LtR matrix file".into()))??;
    let mut columns = header.split('\t');
    if columns.next() != Some("Label") || columns.next() != Some("ExpertId") {
        return Err(Error::Artifact(
            "LtR matrix header must start with Label and ExpertId".into(),
        ));
    }
    let feature_names: Vec<String> = columns.map(str::to_string).collect();

    let mut groups: Vec<QueryGroup> = Vec::new();
    for (line, qid_line) in lines.zip(qid.lines()) {
        let line = line?;
        let query_id: PostId = qid_line?
            .trim()
            .parse()
            .map_err(|_| Error::Artifact("bad query id in sidecar".into()))?;
        let mut parts = line.split('\t');
        let label: u8 = parts
            .next()
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| Error::Artifact("bad label".into()))?;
        let expert_id: UserId = parts
            .next()
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| Error::Artifact("bad expert id".into()))?;
        let features: Vec<f64> = parts
            .map(|v| {
                v.parse()
                    .map_err(|_| Error::Artifact(format!("bad feature value `{v}`")))
            })
            .collect::<Result<_>>()?;
        if features.len() != feature_names.len() {
            return Err(Error::ArityMismatch {
                expected: feature_names.len(),
                got: features.len(),
            });
        }
        let row = LtrRow {
            expert_id,
            features,
            label,
        };
        match groups.last_mut() {
            Some(last) if last.query_id == query_id => last.rows.push(row),
            _ => groups.push(QueryGroup {
                query_id,
                rows: vec![row],
            }),
        }
    }
    Ok(LtrDataset {
        feature_names,
        groups,
    })
}
