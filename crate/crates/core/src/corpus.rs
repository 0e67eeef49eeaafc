//! Scored preference corpora: loading, validation, summary statistics and
//! affine rescaling of judge scores.
//!
//! Input is JSONL, one object per line:
//!
//! ```text
//! {"id": "a1", "prompt": "...", "chosen": "...", "rejected": "...",
//!  "score_chosen": 9, "score_rejected": 8,
//!  "attributes_chosen": [8, 9, 7], "attributes_rejected": [5, 6, 4]}
//! ```
//!
//! `id` and the attribute arrays are optional. Missing ids become the
//! zero-based line index.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Number, Value};

use crate::par::*;

/// Number of uniform histogram bins used by [`stats`].
pub const HISTOGRAM_BINS: usize = 10;

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: malformed JSON: {message}")]
    Malformed { line: usize, message: String },
    #[error("line {line}: missing required field `{field}`")]
    MissingField { line: usize, field: &'static str },
    #[error("line {line}: field `{field}` {message}")]
    InvalidField {
        line: usize,
        field: &'static str,
        message: String,
    },
    #[error("line {line}: field `{field}` = {value} is outside the score scale [{min}, {max}]")]
    OutOfRange {
        line: usize,
        field: &'static str,
        value: f64,
        min: f64,
        max: f64,
    },
    #[error("line {line}: attribute dimension mismatch: {message}")]
    AttributeMismatch { line: usize, message: String },
    #[error("line {line}: duplicate id `{id}` (first seen on line {first_line})")]
    DuplicateId { line: usize, id: String, first_line: usize },
    #[error("line {line}: record `{id}` has score_chosen < score_rejected")]
    OrderViolation { line: usize, id: String },
    #[error("invalid score scale [{min}, {max}]: min must be strictly below max")]
    InvalidScale { min: f64, max: f64 },
}

/// Closed interval of valid judge scores. The upper end is the goal used at
/// inference time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawScale")]
pub struct RewardScale {
    min_score: f64,
    max_score: f64,
}

#[derive(Deserialize)]
struct RawScale {
    min_score: f64,
    max_score: f64,
}

impl TryFrom<RawScale> for RewardScale {
    type Error = CorpusError;
    fn try_from(raw: RawScale) -> Result<Self, Self::Error> {
        RewardScale::new(raw.min_score, raw.max_score)
    }
}

impl RewardScale {
    pub fn new(min_score: f64, max_score: f64) -> Result<Self, CorpusError> {
        if !(min_score.is_finite() && max_score.is_finite() && min_score < max_score) {
            return Err(CorpusError::InvalidScale {
                min: min_score,
                max: max_score,
            });
        }
        Ok(Self { min_score, max_score })
    }

    pub fn min_score(&self) -> f64 {
        self.min_score
    }

    pub fn max_score(&self) -> f64 {
        self.max_score
    }

    /// The goal a trained policy is conditioned on at inference: the top of
    /// the scale.
    pub fn optimal_goal(&self) -> f64 {
        self.max_score
    }

    pub fn width(&self) -> f64 {
        self.max_score - self.min_score
    }

    pub fn contains(&self, s: f64) -> bool {
        s >= self.min_score && s <= self.max_score
    }
}

impl Default for RewardScale {
    /// The 1–10 judge scale.
    fn default() -> Self {
        Self {
            min_score: 1.0,
            max_score: 10.0,
        }
    }
}

/// One scored preference pair.
#[derive(Debug, Clone, PartialEq)]
pub struct PreferenceRecord {
    pub id: String,
    pub prompt: String,
    pub chosen: String,
    pub rejected: String,
    pub chosen_score: f64,
    pub rejected_score: f64,
    pub attributes_chosen: Option<Vec<f64>>,
    pub attributes_rejected: Option<Vec<f64>>,
}

impl PreferenceRecord {
    pub fn new(
        id: impl Into<String>,
        prompt: impl Into<String>,
        chosen: impl Into<String>,
        rejected: impl Into<String>,
        chosen_score: f64,
        rejected_score: f64,
    ) -> Self {
        Self {
            id: id.into(),
            prompt: prompt.into(),
            chosen: chosen.into(),
            rejected: rejected.into(),
            chosen_score,
            rejected_score,
            attributes_chosen: None,
            attributes_rejected: None,
        }
    }

    pub fn with_attributes(mut self, chosen: Vec<f64>, rejected: Vec<f64>) -> Self {
        self.attributes_chosen = Some(chosen);
        self.attributes_rejected = Some(rejected);
        self
    }

    pub fn gap(&self) -> f64 {
        self.chosen_score - self.rejected_score
    }

    pub fn is_tie(&self) -> bool {
        self.chosen_score == self.rejected_score
    }

    pub fn attribute_dimension(&self) -> Option<usize> {
        self.attributes_chosen.as_ref().map(Vec::len)
    }

    /// Exchange the two responses together with their scores and attributes.
    pub fn swap_sides(&mut self) {
        std::mem::swap(&mut self.chosen, &mut self.rejected);
        std::mem::swap(&mut self.chosen_score, &mut self.rejected_score);
        std::mem::swap(&mut self.attributes_chosen, &mut self.attributes_rejected);
    }

    /// Render as one JSONL line (no trailing newline). Integral scores are
    /// written without a fractional part.
    pub fn to_json_line(&self) -> String {
        let mut obj = Map::new();
        obj.insert("id".into(), Value::String(self.id.clone()));
        obj.insert("prompt".into(), Value::String(self.prompt.clone()));
        obj.insert("chosen".into(), Value::String(self.chosen.clone()));
        obj.insert("rejected".into(), Value::String(self.rejected.clone()));
        obj.insert("score_chosen".into(), score_value(self.chosen_score));
        obj.insert("score_rejected".into(), score_value(self.rejected_score));
        if let Some(a) = &self.attributes_chosen {
            obj.insert("attributes_chosen".into(), score_array(a));
        }
        if let Some(a) = &self.attributes_rejected {
            obj.insert("attributes_rejected".into(), score_array(a));
        }
        Value::Object(obj).to_string()
    }
}

/// JSON number for a score: integers stay integers so that integral input
/// round-trips byte for byte.
pub fn score_value(s: f64) -> Value {
    if s.fract() == 0.0 && s.abs() < 9.0e15 {
        Value::Number(Number::from(s as i64))
    } else {
        Number::from_f64(s).map(Value::Number).unwrap_or(Value::Null)
    }
}

fn score_array(xs: &[f64]) -> Value {
    Value::Array(xs.iter().map(|&x| score_value(x)).collect())
}

/// Serialize a corpus to JSONL, one record per line, trailing newline after
/// every record.
pub fn to_jsonl(records: &[PreferenceRecord]) -> String {
    let mut out = String::new();
    for r in records {
        let _ = writeln!(out, "{}", r.to_json_line());
    }
    out
}

/// How [`load_corpus`] treats records whose chosen score is below the
/// rejected score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OrderPolicy {
    /// Reject the file.
    #[default]
    Strict,
    /// Swap the pair so the scores are consistent and count the swap.
    Lenient,
    /// Keep records as they are; callers run [`validate`] themselves.
    Report,
}

/// A loaded corpus with source line numbers (1-based) for each record.
#[derive(Debug, Clone, Default)]
pub struct Corpus {
    pub records: Vec<PreferenceRecord>,
    pub lines: Vec<usize>,
    /// Number of pairs swapped under [`OrderPolicy::Lenient`].
    pub swapped: usize,
}

/// Read and parse a JSONL corpus from disk.
pub fn load_corpus(path: impl AsRef<Path>, scale: RewardScale, order: OrderPolicy) -> Result<Corpus, CorpusError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_corpus(&text, scale, order)
}

/// Parse JSONL text. Lines are parsed in parallel; the result, including
/// which error is reported, matches a sequential top-to-bottom pass.
pub fn parse_corpus(text: &str, scale: RewardScale, order: OrderPolicy) -> Result<Corpus, CorpusError> {
    let lines: Vec<&str> = text.lines().collect();
    let parsed: Vec<Result<Option<PreferenceRecord>, CorpusError>> = lines
        .par_iter()
        .enumerate()
        .map(|(idx, line)| parse_line(idx, line, &scale))
        .collect();

    let mut corpus = Corpus::default();
    let mut seen: HashMap<String, usize> = HashMap::new();
    let mut dimension: Option<(usize, usize)> = None;
    for (idx, item) in parsed.into_iter().enumerate() {
        let line = idx + 1;
        let Some(mut record) = item? else { continue };
        if let Some(&first_line) = seen.get(&record.id) {
            return Err(CorpusError::DuplicateId {
                line,
                id: record.id,
                first_line,
            });
        }
        if let Some(k) = record.attribute_dimension() {
            match dimension {
                None => dimension = Some((k, line)),
                Some((expected, first)) if expected != k => {
                    return Err(CorpusError::AttributeMismatch {
                        line,
                        message: format!("{k} attributes, but line {first} established dimension {expected}"),
                    })
                }
                _ => {}
            }
        }
        if record.chosen_score < record.rejected_score {
            match order {
                OrderPolicy::Strict => return Err(CorpusError::OrderViolation { line, id: record.id }),
                OrderPolicy::Lenient => {
                    record.swap_sides();
                    corpus.swapped += 1;
                }
                OrderPolicy::Report => {}
            }
        }
        seen.insert(record.id.clone(), line);
        corpus.records.push(record);
        corpus.lines.push(line);
    }
    Ok(corpus)
}

fn parse_line(idx: usize, text: &str, scale: &RewardScale) -> Result<Option<PreferenceRecord>, CorpusError> {
    if text.trim().is_empty() {
        return Ok(None);
    }
    let line = idx + 1;
    let value: Value = serde_json::from_str(text).map_err(|e| CorpusError::Malformed {
        line,
        message: e.to_string(),
    })?;
    let Value::Object(obj) = value else {
        return Err(CorpusError::Malformed {
            line,
            message: "expected a JSON object".into(),
        });
    };

    let text_field = |field: &'static str| -> Result<String, CorpusError> {
        match obj.get(field) {
            None | Some(Value::Null) => Err(CorpusError::MissingField { line, field }),
            Some(Value::String(s)) => Ok(s.clone()),
            Some(_) => Err(CorpusError::InvalidField {
                line,
                field,
                message: "must be a string".into(),
            }),
        }
    };
    let score_field = |field: &'static str| -> Result<f64, CorpusError> {
        let s = match obj.get(field) {
            None | Some(Value::Null) => return Err(CorpusError::MissingField { line, field }),
            Some(v) => number(v).ok_or_else(|| CorpusError::InvalidField {
                line,
                field,
                message: "must be a number".into(),
            })?,
        };
        check_range(line, field, s, scale)?;
        Ok(s)
    };
    let attr_field = |field: &'static str| -> Result<Option<Vec<f64>>, CorpusError> {
        let items = match obj.get(field) {
            None | Some(Value::Null) => return Ok(None),
            Some(Value::Array(items)) => items,
            Some(_) => {
                return Err(CorpusError::InvalidField {
                    line,
                    field,
                    message: "must be an array of numbers".into(),
                })
            }
        };
        let mut out = Vec::with_capacity(items.len());
        for item in items {
            let s = number(item).ok_or_else(|| CorpusError::InvalidField {
                line,
                field,
                message: "must be an array of numbers".into(),
            })?;
            check_range(line, field, s, scale)?;
            out.push(s);
        }
        Ok(Some(out))
    };

    let id = match obj.get("id") {
        None | Some(Value::Null) => idx.to_string(),
        Some(Value::String(s)) => s.clone(),
        Some(Value::Number(n)) => n.to_string(),
        Some(_) => {
            return Err(CorpusError::InvalidField {
                line,
                field: "id",
                message: "must be a string".into(),
            })
        }
    };
    let prompt = text_field("prompt")?;
    let chosen = text_field("chosen")?;
    let rejected = text_field("rejected")?;
    let chosen_score = score_field("score_chosen")?;
    let rejected_score = score_field("score_rejected")?;
    let attributes_chosen = attr_field("attributes_chosen")?;
    let attributes_rejected = attr_field("attributes_rejected")?;

    match (&attributes_chosen, &attributes_rejected) {
        (None, None) => {}
        (Some(a), Some(b)) => {
            if a.is_empty() {
                return Err(CorpusError::AttributeMismatch {
                    line,
                    message: "attribute vectors must have at least one component".into(),
                });
            }
            if a.len() != b.len() {
                return Err(CorpusError::AttributeMismatch {
                    line,
                    message: format!("chosen has {} attributes, rejected has {}", a.len(), b.len()),
                });
            }
        }
        _ => {
            return Err(CorpusError::AttributeMismatch {
                line,
                message: "attributes must be given for both responses or neither".into(),
            })
        }
    }

    Ok(Some(PreferenceRecord {
        id,
        prompt,
        chosen,
        rejected,
        chosen_score,
        rejected_score,
        attributes_chosen,
        attributes_rejected,
    }))
}

fn number(v: &Value) -> Option<f64> {
    v.as_f64().filter(|x| x.is_finite())
}

fn check_range(line: usize, field: &'static str, value: f64, scale: &RewardScale) -> Result<(), CorpusError> {
    if scale.contains(value) {
        Ok(())
    } else {
        Err(CorpusError::OutOfRange {
            line,
            field,
            value,
            min: scale.min_score,
            max: scale.max_score,
        })
    }
}

/// Counts of problems found in an in-memory corpus.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub record_count: usize,
    pub ties: usize,
    pub order_violations: usize,
    pub out_of_range: usize,
    pub duplicates: usize,
    /// Positions (not line numbers) of records with chosen < rejected.
    pub order_violation_indices: Vec<usize>,
}

impl ValidationReport {
    /// No order violations, range violations or duplicate ids. Ties are
    /// allowed.
    pub fn is_clean(&self) -> bool {
        self.order_violations == 0 && self.out_of_range == 0 && self.duplicates == 0
    }
}

/// Inspect records without modifying them.
pub fn validate(records: &[PreferenceRecord], scale: &RewardScale) -> ValidationReport {
    let mut report = ValidationReport {
        record_count: records.len(),
        ..Default::default()
    };
    let mut seen: HashMap<&str, ()> = HashMap::with_capacity(records.len());
    for (i, r) in records.iter().enumerate() {
        if r.is_tie() {
            report.ties += 1;
        }
        if r.chosen_score < r.rejected_score {
            report.order_violations += 1;
            report.order_violation_indices.push(i);
        }
        let attrs = r.attributes_chosen.iter().chain(r.attributes_rejected.iter()).flatten();
        let in_range = scale.contains(r.chosen_score)
            && scale.contains(r.rejected_score)
            && attrs.into_iter().all(|&a| scale.contains(a));
        if !in_range {
            report.out_of_range += 1;
        }
        if seen.insert(r.id.as_str(), ()).is_some() {
            report.duplicates += 1;
        }
    }
    report
}

/// Histogram over a closed interval split into [`HISTOGRAM_BINS`] uniform,
/// right-closed bins. The first bin also holds the lower endpoint.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Histogram {
    pub lower: f64,
    pub upper: f64,
    pub counts: Vec<u64>,
}

impl Histogram {
    pub fn new(lower: f64, upper: f64) -> Self {
        Self {
            lower,
            upper,
            counts: vec![0; HISTOGRAM_BINS],
        }
    }

    pub fn bin_of(&self, v: f64) -> usize {
        let pos = (v - self.lower) * HISTOGRAM_BINS as f64 / (self.upper - self.lower);
        (pos.ceil() as i64 - 1).clamp(0, HISTOGRAM_BINS as i64 - 1) as usize
    }

    pub fn add(&mut self, v: f64) {
        let b = self.bin_of(v);
        self.counts[b] += 1;
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorpusStats {
    pub record_count: usize,
    pub score_histogram_chosen: Histogram,
    pub score_histogram_rejected: Histogram,
    pub gap_histogram: Histogram,
    pub tie_count: usize,
    pub attribute_dimension: Option<usize>,
}

/// Score and gap histograms. Gaps are binned over `[0, scale width]`.
pub fn stats(records: &[PreferenceRecord], scale: &RewardScale) -> CorpusStats {
    let mut chosen = Histogram::new(scale.min_score, scale.max_score);
    let mut rejected = Histogram::new(scale.min_score, scale.max_score);
    let mut gaps = Histogram::new(0.0, scale.width());
    let mut tie_count = 0;
    for r in records {
        chosen.add(r.chosen_score);
        rejected.add(r.rejected_score);
        gaps.add(r.gap());
        if r.is_tie() {
            tie_count += 1;
        }
    }
    let mut dims = records.iter().filter_map(PreferenceRecord::attribute_dimension);
    let attribute_dimension = dims.next().filter(|&k| dims.all(|d| d == k));
    CorpusStats {
        record_count: records.len(),
        score_histogram_chosen: chosen,
        score_histogram_rejected: rejected,
        gap_histogram: gaps,
        tie_count,
        attribute_dimension,
    }
}

/// Affine map of one score from `from` onto `to`. Endpoints map exactly.
pub fn rescale_score(s: f64, from: &RewardScale, to: &RewardScale) -> f64 {
    if from == to {
        s
    } else if s == from.min_score {
        to.min_score
    } else if s == from.max_score {
        to.max_score
    } else {
        to.min_score + (s - from.min_score) * to.width() / from.width()
    }
}

/// Rescale every score (and attribute) of every record from one scale to
/// another.
pub fn rescale(records: &[PreferenceRecord], from: &RewardScale, to: &RewardScale) -> Vec<PreferenceRecord> {
    let map = |s: f64| rescale_score(s, from, to);
    records
        .par_iter()
        .map(|r| PreferenceRecord {
            chosen_score: map(r.chosen_score),
            rejected_score: map(r.rejected_score),
            attributes_chosen: r
                .attributes_chosen
                .as_ref()
                .map(|a| a.iter().copied().map(map).collect()),
            attributes_rejected: r
                .attributes_rejected
                .as_ref()
                .map(|a| a.iter().copied().map(map).collect()),
            ..r.clone()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scale() -> RewardScale {
        RewardScale::new(1.0, 10.0).unwrap()
    }

    fn parse(text: &str) -> Result<Corpus, CorpusError> {
        parse_corpus(text, scale(), OrderPolicy::Strict)
    }

    #[test]
    fn single_line_with_gap_one() {
        let c = parse(r#"{"prompt":"p","chosen":"a","rejected":"b","score_chosen":9,"score_rejected":8}"#).unwrap();
        assert_eq!(c.records.len(), 1);
        assert_eq!(c.records[0].gap(), 1.0);
        assert_eq!(c.records[0].id, "0");
    }

    #[test]
    fn empty_file_is_empty_corpus() {
        assert!(parse("").unwrap().records.is_empty());
    }

    #[test]
    fn score_above_scale_names_line_and_field() {
        let text = concat!(
            r#"{"prompt":"p","chosen":"a","rejected":"b","score_chosen":9,"score_rejected":8}"#,
            "\n",
            r#"{"prompt":"p","chosen":"a","rejected":"b","score_chosen":11,"score_rejected":8}"#
        );
        let err = parse(text).unwrap_err();
        match &err {
            CorpusError::OutOfRange { line, field, .. } => {
                assert_eq!(*line, 2);
                assert_eq!(*field, "score_chosen");
            }
            other => panic!("unexpected {other:?}"),
        }
        let msg = err.to_string();
        assert!(msg.contains("line 2") && msg.contains("score_chosen"));
    }

    #[test]
    fn malformed_and_missing_fields() {
        let err = parse("{\"prompt\": \n").unwrap_err();
        assert!(matches!(err, CorpusError::Malformed { line: 1, .. }));
        let err = parse(r#"{"prompt":"p","chosen":"a","score_chosen":9,"score_rejected":8}"#).unwrap_err();
        assert!(matches!(err, CorpusError::MissingField { field: "rejected", .. }));
        let err =
            parse(r#"{"prompt":"p","chosen":"a","rejected":"b","score_chosen":"9","score_rejected":8}"#).unwrap_err();
        assert!(matches!(
            err,
            CorpusError::InvalidField {
                field: "score_chosen",
                ..
            }
        ));
    }

    #[test]
    fn first_error_is_reported_by_line_order() {
        let good = r#"{"prompt":"p","chosen":"a","rejected":"b","score_chosen":9,"score_rejected":8}"#;
        let mut text = String::new();
        for i in 0..200 {
            if i == 57 || i == 150 {
                text.push_str("not json\n");
            } else {
                text.push_str(&good.replace("\"prompt\"", &format!("\"id\":\"r{i}\",\"prompt\"")));
                text.push('\n');
            }
        }
        let err = parse(&text).unwrap_err();
        assert!(matches!(err, CorpusError::Malformed { line: 58, .. }), "{err}");
    }

    #[test]
    fn duplicate_explicit_id() {
        let text = concat!(
            r#"{"id":"x","prompt":"p","chosen":"a","rejected":"b","score_chosen":9,"score_rejected":8}"#,
            "\n",
            r#"{"id":"x","prompt":"q","chosen":"a","rejected":"b","score_chosen":9,"score_rejected":8}"#
        );
        let err = parse(text).unwrap_err();
        assert!(matches!(
            err,
            CorpusError::DuplicateId {
                line: 2,
                first_line: 1,
                ..
            }
        ));
    }

    #[test]
    fn attribute_dimension_checks() {
        let err = parse(
            r#"{"prompt":"p","chosen":"a","rejected":"b","score_chosen":9,"score_rejected":8,"attributes_chosen":[1,2],"attributes_rejected":[1]}"#,
        )
        .unwrap_err();
        assert!(matches!(err, CorpusError::AttributeMismatch { line: 1, .. }));
        let err = parse(
            r#"{"prompt":"p","chosen":"a","rejected":"b","score_chosen":9,"score_rejected":8,"attributes_chosen":[1,2]}"#,
        )
        .unwrap_err();
        assert!(matches!(err, CorpusError::AttributeMismatch { .. }));
        let err = parse(
            r#"{"prompt":"p","chosen":"a","rejected":"b","score_chosen":9,"score_rejected":8,"attributes_chosen":[1,12],"attributes_rejected":[1,2]}"#,
        )
        .unwrap_err();
        assert!(matches!(
            err,
            CorpusError::OutOfRange {
                field: "attributes_chosen",
                ..
            }
        ));
    }

    #[test]
    fn order_policies() {
        let text = r#"{"prompt":"p","chosen":"a","rejected":"b","score_chosen":3,"score_rejected":7}"#;
        let err = parse_corpus(text, scale(), OrderPolicy::Strict).unwrap_err();
        assert!(matches!(err, CorpusError::OrderViolation { line: 1, .. }));

        let c = parse_corpus(text, scale(), OrderPolicy::Lenient).unwrap();
        assert_eq!(c.swapped, 1);
        assert_eq!(c.records[0].chosen, "b");
        assert_eq!(c.records[0].chosen_score, 7.0);
        assert_eq!(validate(&c.records, &scale()).order_violations, 0);

        let c = parse_corpus(text, scale(), OrderPolicy::Report).unwrap();
        let report = validate(&c.records, &scale());
        assert_eq!(report.order_violations, 1);
        assert_eq!(report.order_violation_indices, vec![0]);
    }

    #[test]
    fn validate_counts() {
        let ok = PreferenceRecord::new("a", "p", "x", "y", 9.0, 8.0);
        assert!(validate(std::slice::from_ref(&ok), &scale()).is_clean());
        assert_eq!(validate(std::slice::from_ref(&ok), &scale()).ties, 0);

        let tie = PreferenceRecord::new("b", "p", "x", "y", 5.0, 5.0);
        assert_eq!(validate(&[tie], &scale()).ties, 1);

        let inverted = PreferenceRecord::new("c", "p", "x", "y", 3.0, 7.0);
        assert_eq!(validate(&[inverted], &scale()).order_violations, 1);

        let far = PreferenceRecord::new("d", "p", "x", "y", 30.0, 7.0);
        let dup = PreferenceRecord::new("a", "p", "x", "y", 9.0, 8.0);
        let report = validate(&[ok, far, dup], &scale());
        assert_eq!(report.out_of_range, 1);
        assert_eq!(report.duplicates, 1);
    }

    #[test]
    fn stats_histograms() {
        let r = PreferenceRecord::new("a", "p", "x", "y", 9.0, 8.0);
        let s = stats(std::slice::from_ref(&r), &scale());
        assert_eq!(s.record_count, 1);
        assert_eq!(s.gap_histogram.total(), 1);
        let bin = s.gap_histogram.counts.iter().position(|&c| c == 1).unwrap();
        // width 0.9, so a gap of 1 lands in (0.9, 1.8]
        assert_eq!(bin, 1);
        assert_eq!(s.score_histogram_chosen.counts[8], 1);

        let two = stats(&[r.clone(), r.clone()], &scale());
        assert_eq!(two.record_count, 2);

        let attr = r.with_attributes(vec![8.0, 9.0, 7.0, 8.0, 9.0], vec![5.0, 6.0, 4.0, 5.0, 6.0]);
        assert_eq!(stats(&[attr], &scale()).attribute_dimension, Some(5));
    }

    #[test]
    fn histogram_edges_are_right_closed() {
        let h = Histogram::new(1.0, 10.0);
        assert_eq!(h.bin_of(1.0), 0);
        assert_eq!(h.bin_of(1.9), 0);
        assert_eq!(h.bin_of(1.91), 1);
        assert_eq!(h.bin_of(10.0), 9);
    }

    #[test]
    fn rescale_examples() {
        let from = scale();
        let to100 = RewardScale::new(1.0, 100.0).unwrap();
        let to5 = RewardScale::new(1.0, 5.0).unwrap();
        assert_eq!(rescale_score(10.0, &from, &to100), 100.0);
        assert_eq!(rescale_score(1.0, &from, &to5), 1.0);
        // 1 + 4.5 * 99 / 9
        assert_eq!(rescale_score(5.5, &from, &to100), 50.5);
    }

    #[test]
    fn degenerate_target_scale_is_rejected() {
        assert!(matches!(
            RewardScale::new(5.0, 5.0),
            Err(CorpusError::InvalidScale { .. })
        ));
        assert!(RewardScale::new(6.0, 5.0).is_err());
        assert!(serde_json::from_str::<RewardScale>(r#"{"min_score":3,"max_score":1}"#).is_err());
    }

    #[test]
    fn rescale_touches_attributes() {
        let r = PreferenceRecord::new("a", "p", "x", "y", 10.0, 1.0).with_attributes(vec![10.0, 5.5], vec![1.0, 1.0]);
        let out = rescale(&[r], &scale(), &RewardScale::new(1.0, 100.0).unwrap());
        assert_eq!(out[0].attributes_chosen.as_deref(), Some(&[100.0, 50.5][..]));
        assert_eq!(out[0].rejected_score, 1.0);
    }

    #[test]
    fn serialization_keeps_integral_scores() {
        let line = r#"{"id":"a","prompt":"p\né","chosen":"x","rejected":"y","score_chosen":9,"score_rejected":7.5}"#;
        let c = parse(line).unwrap();
        let back = c.records[0].to_json_line();
        let again = parse(&back).unwrap();
        assert_eq!(again.records, c.records);
        assert!(back.contains(r#""score_chosen":9,"#));
        assert!(back.contains(r#""score_rejected":7.5"#));
    }
}
