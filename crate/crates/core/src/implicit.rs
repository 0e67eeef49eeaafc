//! Implicit rewards from sequence log-probabilities and implicit-reward
//! rescored corpora.
//!
//! The implicit reward of a response is `β (log π(y|x) − log π_ref(y|x))`.
//! Raw values across a corpus are clipped to empirical percentiles and mapped
//! affinely onto a score scale, after which each pair is re-ranked so the
//! higher-scoring response is the chosen one.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::corpus::{PreferenceRecord, RewardScale};
use crate::numeric::percentile_sorted;
use crate::par::*;

/// DPO regularization strength used when none is given.
pub const DEFAULT_BETA: f64 = 0.01;

#[derive(Debug, thiserror::Error)]
pub enum ImplicitError {
    #[error("beta must be positive, got {0}")]
    NonPositiveBeta(f64),
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("logprob line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("logprob line {line}: duplicate entry for id `{id}` side {side}")]
    Duplicate { line: usize, id: String, side: Side },
    #[error("missing {side} log-probabilities for record `{id}`")]
    Missing { id: String, side: Side },
    #[error("invalid clip percentiles ({low}, {high}): need 0 <= low < high <= 100")]
    InvalidClip { low: f64, high: f64 },
    #[error("degenerate corpus: clipped implicit rewards span a zero-width range at {value}")]
    Degenerate { value: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Chosen,
    Rejected,
}

impl std::fmt::Display for Side {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Side::Chosen => "chosen",
            Side::Rejected => "rejected",
        })
    }
}

/// Summed response log-probabilities (nats) under the trained and the
/// reference model.
#[derive(Debug, Clone, PartialEq)]
pub struct LogprobRecord {
    pub id: String,
    pub side: Side,
    pub logp_policy: f64,
    pub logp_ref: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ImplicitScore {
    pub id: String,
    pub side: Side,
    pub value: f64,
    pub rescaled_value: f64,
}

/// `beta * (logp_policy - logp_ref)`.
pub fn implicit_reward(beta: f64, logp_policy: f64, logp_ref: f64) -> Result<f64, ImplicitError> {
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(ImplicitError::NonPositiveBeta(beta));
    }
    Ok(beta * (logp_policy - logp_ref))
}

/// Percentile pair, in percent, that bounds the raw implicit rewards before
/// the affine map.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ClipPercentiles {
    low: f64,
    high: f64,
}

impl ClipPercentiles {
    pub fn new(low: f64, high: f64) -> Result<Self, ImplicitError> {
        if !(0.0..100.0).contains(&low) || !(high > low && high <= 100.0) {
            return Err(ImplicitError::InvalidClip { low, high });
        }
        Ok(Self { low, high })
    }

    pub fn low(&self) -> f64 {
        self.low
    }

    pub fn high(&self) -> f64 {
        self.high
    }
}

impl Default for ClipPercentiles {
    fn default() -> Self {
        Self { low: 1.0, high: 99.0 }
    }
}

/// Parse logprob JSONL: `{"id", "side", "logp_policy", "logp_ref"}` per line.
pub fn parse_logprobs(text: &str) -> Result<Vec<LogprobRecord>, ImplicitError> {
    let lines: Vec<&str> = text.lines().collect();
    let parsed: Vec<Result<Option<LogprobRecord>, ImplicitError>> = lines
        .par_iter()
        .enumerate()
        .map(|(i, l)| parse_logprob_line(i + 1, l))
        .collect();
    let mut out = Vec::new();
    let mut seen: HashMap<(String, Side), ()> = HashMap::new();
    for (i, item) in parsed.into_iter().enumerate() {
        let Some(rec) = item? else { continue };
        if seen.insert((rec.id.clone(), rec.side), ()).is_some() {
            return Err(ImplicitError::Duplicate {
                line: i + 1,
                id: rec.id,
                side: rec.side,
            });
        }
        out.push(rec);
    }
    Ok(out)
}

pub fn load_logprobs(path: impl AsRef<Path>) -> Result<Vec<LogprobRecord>, ImplicitError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| ImplicitError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_logprobs(&text)
}

fn parse_logprob_line(line: usize, text: &str) -> Result<Option<LogprobRecord>, ImplicitError> {
    if text.trim().is_empty() {
        return Ok(None);
    }
    let err = |message: String| ImplicitError::Parse { line, message };
    let v: Value = serde_json::from_str(text).map_err(|e| err(e.to_string()))?;
    let id = match v.get("id") {
        Some(Value::String(s)) => s.clone(),
        Some(Value::Number(n)) => n.to_string(),
        _ => return Err(err("missing or non-string `id`".into())),
    };
    let side = match v.get("side").and_then(Value::as_str) {
        Some("chosen") => Side::Chosen,
        Some("rejected") => Side::Rejected,
        _ => return Err(err("`side` must be \"chosen\" or \"rejected\"".into())),
    };
    let logp = |field: &str| -> Result<f64, ImplicitError> {
        let x = v
            .get(field)
            .and_then(Value::as_f64)
            .filter(|x| x.is_finite())
            .ok_or_else(|| err(format!("missing or non-numeric `{field}`")))?;
        if x > 0.0 {
            return Err(err(format!("`{field}` = {x} is positive; expected a log-probability")));
        }
        Ok(x)
    };
    Ok(Some(LogprobRecord {
        id,
        side,
        logp_policy: logp("logp_policy")?,
        logp_ref: logp("logp_ref")?,
    }))
}

#[derive(Debug, Clone, PartialEq)]
pub struct IraOutput {
    pub records: Vec<PreferenceRecord>,
    pub scores: Vec<ImplicitScore>,
    /// Pairs whose order was reversed by the implicit rewards.
    pub flips: usize,
    /// Raw values that fell outside the clip percentiles.
    pub clipped: usize,
    pub clip_bounds: (f64, f64),
}

/// Replace each record's scores with rescaled implicit rewards and re-rank
/// the pair.
pub fn build_ira_corpus(
    records: &[PreferenceRecord],
    logprobs: &[LogprobRecord],
    beta: f64,
    target: &RewardScale,
    clip: ClipPercentiles,
) -> Result<IraOutput, ImplicitError> {
    implicit_reward(beta, 0.0, 0.0)?;
    let index: HashMap<(&str, Side), &LogprobRecord> = logprobs.iter().map(|l| ((l.id.as_str(), l.side), l)).collect();

    let raw: Vec<Result<(f64, f64), ImplicitError>> = records
        .par_iter()
        .map(|r| {
            let get = |side| {
                index
                    .get(&(r.id.as_str(), side))
                    .ok_or_else(|| ImplicitError::Missing { id: r.id.clone(), side })
            };
            let c = get(Side::Chosen)?;
            let l = get(Side::Rejected)?;
            Ok((beta * (c.logp_policy - c.logp_ref), beta * (l.logp_policy - l.logp_ref)))
        })
        .collect();
    let raw: Vec<(f64, f64)> = raw.into_iter().collect::<Result<_, _>>()?;

    if raw.is_empty() {
        return Ok(IraOutput {
            records: Vec::new(),
            scores: Vec::new(),
            flips: 0,
            clipped: 0,
            clip_bounds: (0.0, 0.0),
        });
    }

    let mut all: Vec<f64> = raw.iter().flat_map(|&(a, b)| [a, b]).collect();
    all.sort_by(f64::total_cmp);
    let lo = percentile_sorted(&all, clip.low);
    let hi = percentile_sorted(&all, clip.high);
    if hi.is_nan() || hi <= lo {
        return Err(ImplicitError::Degenerate { value: lo });
    }
    let map = |x: f64| -> f64 {
        let c = x.clamp(lo, hi);
        if c == lo {
            target.min_score()
        } else if c == hi {
            target.max_score()
        } else {
            (target.min_score() + (c - lo) * target.width() / (hi - lo)).clamp(target.min_score(), target.max_score())
        }
    };

    let mut out = IraOutput {
        records: Vec::with_capacity(records.len()),
        scores: Vec::with_capacity(2 * records.len()),
        flips: 0,
        clipped: all.iter().filter(|&&x| x < lo || x > hi).count(),
        clip_bounds: (lo, hi),
    };
    for (r, &(rc, rl)) in records.iter().zip(&raw) {
        let (sc, sl) = (map(rc), map(rl));
        out.scores.push(ImplicitScore {
            id: r.id.clone(),
            side: Side::Chosen,
            value: rc,
            rescaled_value: sc,
        });
        out.scores.push(ImplicitScore {
            id: r.id.clone(),
            side: Side::Rejected,
            value: rl,
            rescaled_value: sl,
        });
        let mut next = PreferenceRecord {
            chosen_score: sc,
            rejected_score: sl,
            ..r.clone()
        };
        if sc < sl {
            next.swap_sides();
            out.flips += 1;
        }
        out.records.push(next);
    }
    Ok(out)
}
