//! Goal-conditioned relabeling of scored preference pairs.
//!
//! A pair with scores `(r_w, r_l)` becomes two pairs: under the goal `r_w`
//! the original order is kept, under the goal `r_l` it is reversed. The
//! relabeled reward of a response under goal `g` is `-(g - r)^2`, so the
//! preferred response of each new pair scores 0 and the other `-(r_w - r_l)^2`.
//!
//! The ablation variants (chosen-goal only, first half only, filtering on the
//! rejected goal, attribute-vector goals) are built from the same relabeling
//! step.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::corpus::{score_value, PreferenceRecord};
use crate::par::*;

/// Placeholder substituted by the goal in a [`PromptTemplate`].
pub const GOAL_PLACEHOLDER: &str = "{g}";

/// Separator between a prefixed goal instruction and the user prompt.
pub const PREFIX_SEPARATOR: &str = "\n\n";

/// Built-in training instruction.
pub const DEFAULT_TEMPLATE: &str = "You are a helpful assistant. Please generate responses of score {g}.";

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AugmentError {
    #[error("record `{id}` is a tie (both responses score {score}); no strict preference under either goal")]
    Tie { id: String, score: f64 },
    #[error("record `{id}` has identical attribute vectors")]
    VectorTie { id: String },
    #[error("record `{id}` has no attribute vectors")]
    MissingAttributes { id: String },
    #[error("goal has dimension {goal} but the score has dimension {score}")]
    DimensionMismatch { goal: usize, score: usize },
    #[error("template must contain exactly one `{{g}}` placeholder, found {found}")]
    Placeholder { found: usize },
}

impl AugmentError {
    pub fn is_tie(&self) -> bool {
        matches!(self, AugmentError::Tie { .. } | AugmentError::VectorTie { .. })
    }
}

/// Target quality a policy is conditioned on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Goal {
    Scalar(f64),
    Vector(Vec<f64>),
}

impl Goal {
    pub fn components(&self) -> &[f64] {
        match self {
            Goal::Scalar(x) => std::slice::from_ref(x),
            Goal::Vector(v) => v,
        }
    }

    pub fn dimension(&self) -> usize {
        self.components().len()
    }

    /// Scalar summary used by threshold filters: the value itself, or the
    /// mean component of a vector goal.
    pub fn level(&self) -> f64 {
        match self {
            Goal::Scalar(x) => *x,
            Goal::Vector(v) => v.iter().sum::<f64>() / v.len() as f64,
        }
    }

    /// Decimal rendering: integral values without a fractional part, other
    /// values in their shortest exact form; vector components joined by `", "`.
    pub fn render(&self) -> String {
        match self {
            Goal::Scalar(x) => format_score(*x),
            Goal::Vector(v) => {
                let mut out = String::new();
                for (i, x) in v.iter().enumerate() {
                    if i > 0 {
                        out.push_str(", ");
                    }
                    out.push_str(&format_score(*x));
                }
                out
            }
        }
    }

    fn to_json(&self) -> Value {
        match self {
            Goal::Scalar(x) => score_value(*x),
            Goal::Vector(v) => Value::Array(v.iter().map(|&x| score_value(x)).collect()),
        }
    }
}

fn format_score(x: f64) -> String {
    let mut s = String::new();
    if x == 0.0 {
        s.push('0');
    } else {
        let _ = write!(s, "{x}");
    }
    s
}

/// `-‖g - r‖²`. Zero exactly when the score attains the goal.
pub fn goal_reward(goal: &Goal, score: &[f64]) -> Result<f64, AugmentError> {
    let g = goal.components();
    if g.len() != score.len() {
        return Err(AugmentError::DimensionMismatch {
            goal: g.len(),
            score: score.len(),
        });
    }
    let sq: f64 = g.iter().zip(score).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(0.0 - sq)
}

/// Where the goal instruction goes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Placement {
    /// A separate system message.
    #[default]
    System,
    /// Prepended to the user prompt.
    Prefix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PromptTemplate {
    training_template: String,
    inference_template: String,
    placement: Placement,
}

impl PromptTemplate {
    /// `training` must contain exactly one `{g}`. The inference template is
    /// the same text with the goal fixed to `optimal_goal`.
    pub fn new(training: impl Into<String>, placement: Placement, optimal_goal: f64) -> Result<Self, AugmentError> {
        let training_template = training.into();
        let found = training_template.matches(GOAL_PLACEHOLDER).count();
        if found != 1 {
            return Err(AugmentError::Placeholder { found });
        }
        let inference_template = training_template.replace(GOAL_PLACEHOLDER, &Goal::Scalar(optimal_goal).render());
        Ok(Self {
            training_template,
            inference_template,
            placement,
        })
    }

    pub fn training_template(&self) -> &str {
        &self.training_template
    }

    pub fn inference_template(&self) -> &str {
        &self.inference_template
    }

    pub fn placement(&self) -> Placement {
        self.placement
    }

    /// Prompt used at inference, conditioned on the optimal goal.
    pub fn render_inference(&self, prompt: &str) -> RenderedPrompt {
        self.place(self.inference_template.clone(), prompt)
    }

    fn place(&self, instruction: String, prompt: &str) -> RenderedPrompt {
        match self.placement {
            Placement::System => RenderedPrompt {
                system: Some(instruction),
                prompt: prompt.to_string(),
            },
            Placement::Prefix => RenderedPrompt {
                system: None,
                prompt: format!("{instruction}{PREFIX_SEPARATOR}{prompt}"),
            },
        }
    }
}

/// A goal-conditioned prompt: either a system message plus the untouched user
/// prompt, or one concatenated prompt.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RenderedPrompt {
    pub system: Option<String>,
    pub prompt: String,
}

/// Substitute `goal` into the training template and place it.
pub fn render_prompt(template: &PromptTemplate, prompt: &str, goal: &Goal) -> RenderedPrompt {
    let instruction = template.training_template.replace(GOAL_PLACEHOLDER, &goal.render());
    template.place(instruction, prompt)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GoalSource {
    Chosen,
    Rejected,
}

impl GoalSource {
    pub fn suffix(self) -> &'static str {
        match self {
            GoalSource::Chosen => "#w",
            GoalSource::Rejected => "#l",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedRecord {
    pub id: String,
    pub parent_id: String,
    pub goal: Goal,
    pub goal_source: GoalSource,
    pub conditioned_prompt: RenderedPrompt,
    pub chosen: String,
    pub rejected: String,
    pub reward_chosen: f64,
    pub reward_rejected: f64,
}

impl AugmentedRecord {
    pub fn to_json_line(&self) -> String {
        let mut obj = Map::new();
        obj.insert("id".into(), Value::String(self.id.clone()));
        obj.insert("parent_id".into(), Value::String(self.parent_id.clone()));
        obj.insert("goal".into(), self.goal.to_json());
        let source = match self.goal_source {
            GoalSource::Chosen => "chosen",
            GoalSource::Rejected => "rejected",
        };
        obj.insert("goal_source".into(), Value::String(source.into()));
        obj.insert("prompt".into(), Value::String(self.conditioned_prompt.prompt.clone()));
        if let Some(system) = &self.conditioned_prompt.system {
            obj.insert("system".into(), Value::String(system.clone()));
        }
        obj.insert("chosen".into(), Value::String(self.chosen.clone()));
        obj.insert("rejected".into(), Value::String(self.rejected.clone()));
        obj.insert("reward_chosen".into(), score_value(self.reward_chosen));
        obj.insert("reward_rejected".into(), score_value(self.reward_rejected));
        Value::Object(obj).to_string()
    }
}

pub fn to_jsonl(records: &[AugmentedRecord]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&r.to_json_line());
        out.push('\n');
    }
    out
}

/// What the goal is built from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GoalKind {
    /// The scalar judge scores.
    #[default]
    Scalar,
    /// The per-response attribute vectors.
    Attributes,
}

fn side_scores(record: &PreferenceRecord, kind: GoalKind) -> Result<(Vec<f64>, Vec<f64>), AugmentError> {
    match kind {
        GoalKind::Scalar => {
            if record.is_tie() {
                return Err(AugmentError::Tie {
                    id: record.id.clone(),
                    score: record.chosen_score,
                });
            }
            Ok((vec![record.chosen_score], vec![record.rejected_score]))
        }
        GoalKind::Attributes => {
            let (Some(a), Some(b)) = (&record.attributes_chosen, &record.attributes_rejected) else {
                return Err(AugmentError::MissingAttributes { id: record.id.clone() });
            };
            if a.len() != b.len() {
                return Err(AugmentError::DimensionMismatch {
                    goal: a.len(),
                    score: b.len(),
                });
            }
            if a == b {
                return Err(AugmentError::VectorTie { id: record.id.clone() });
            }
            Ok((a.clone(), b.clone()))
        }
    }
}

fn make_goal(components: &[f64], kind: GoalKind) -> Goal {
    match kind {
        GoalKind::Scalar => Goal::Scalar(components[0]),
        GoalKind::Attributes => Goal::Vector(components.to_vec()),
    }
}

/// Relabel one pair under one goal. The preferred response is the one
/// closer to the goal; an exact tie goes to the parent's chosen response.
fn relabel(
    record: &PreferenceRecord,
    goal: Goal,
    source: GoalSource,
    scores: (&[f64], &[f64]),
    template: &PromptTemplate,
) -> Result<AugmentedRecord, AugmentError> {
    let reward_w = goal_reward(&goal, scores.0)?;
    let reward_l = goal_reward(&goal, scores.1)?;
    let (chosen, rejected, reward_chosen, reward_rejected) = if reward_w >= reward_l {
        (&record.chosen, &record.rejected, reward_w, reward_l)
    } else {
        (&record.rejected, &record.chosen, reward_l, reward_w)
    };
    Ok(AugmentedRecord {
        id: format!("{}{}", record.id, source.suffix()),
        parent_id: record.id.clone(),
        conditioned_prompt: render_prompt(template, &record.prompt, &goal),
        goal,
        goal_source: source,
        chosen: chosen.clone(),
        rejected: rejected.clone(),
        reward_chosen,
        reward_rejected,
    })
}

fn augment_pair(
    record: &PreferenceRecord,
    template: &PromptTemplate,
    kind: GoalKind,
) -> Result<[AugmentedRecord; 2], AugmentError> {
    let (w, l) = side_scores(record, kind)?;
    let first = relabel(record, make_goal(&w, kind), GoalSource::Chosen, (&w, &l), template)?;
    let second = relabel(record, make_goal(&l, kind), GoalSource::Rejected, (&w, &l), template)?;
    Ok([first, second])
}

/// Both relabeled pairs of a scored record: goal = chosen score first, then
/// goal = rejected score with the order reversed.
pub fn augment_full(
    record: &PreferenceRecord,
    template: &PromptTemplate,
) -> Result<[AugmentedRecord; 2], AugmentError> {
    augment_pair(record, template, GoalKind::Scalar)
}

/// Only the chosen-goal half of [`augment_full`].
pub fn augment_chosen_only(
    record: &PreferenceRecord,
    template: &PromptTemplate,
) -> Result<AugmentedRecord, AugmentError> {
    let (w, l) = side_scores(record, GoalKind::Scalar)?;
    relabel(
        record,
        make_goal(&w, GoalKind::Scalar),
        GoalSource::Chosen,
        (&w, &l),
        template,
    )
}

/// [`augment_full`] with attribute-vector goals.
pub fn augment_multi_attribute(
    record: &PreferenceRecord,
    template: &PromptTemplate,
) -> Result<[AugmentedRecord; 2], AugmentError> {
    augment_pair(record, template, GoalKind::Attributes)
}

/// Record emitted for a tie under `--keep-ties`: chosen-goal only, parent
/// order, both rewards zero.
fn tie_record(record: &PreferenceRecord, template: &PromptTemplate, kind: GoalKind) -> AugmentedRecord {
    let components = match kind {
        GoalKind::Scalar => vec![record.chosen_score],
        GoalKind::Attributes => record.attributes_chosen.clone().unwrap_or_default(),
    };
    let goal = make_goal(&components, kind);
    AugmentedRecord {
        id: format!("{}{}", record.id, GoalSource::Chosen.suffix()),
        parent_id: record.id.clone(),
        conditioned_prompt: render_prompt(template, &record.prompt, &goal),
        goal,
        goal_source: GoalSource::Chosen,
        chosen: record.chosen.clone(),
        rejected: record.rejected.clone(),
        reward_chosen: 0.0,
        reward_rejected: 0.0,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AugmentMode {
    /// Two records per pair.
    #[default]
    Full,
    /// The chosen-goal record of each pair.
    ChosenOnly,
    /// Both records for the first ⌈N/2⌉ pairs; the rest are discarded.
    Half,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct AugmentOptions {
    pub mode: AugmentMode,
    pub goals: GoalKind,
    pub keep_ties: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct AugmentOutput {
    pub records: Vec<AugmentedRecord>,
    pub inputs: usize,
    pub ties_dropped: usize,
    pub ties_kept: usize,
}

/// Augment a corpus. Records are processed in parallel; output order is
/// parent order with the chosen-goal record before the rejected-goal one.
pub fn augment_corpus(
    records: &[PreferenceRecord],
    template: &PromptTemplate,
    options: AugmentOptions,
) -> Result<AugmentOutput, AugmentError> {
    let selected = match options.mode {
        AugmentMode::Half => &records[..records.len().div_ceil(2)],
        _ => records,
    };
    let per_record: Vec<Result<Vec<AugmentedRecord>, AugmentError>> = selected
        .par_iter()
        .map(|r| match options.mode {
            AugmentMode::ChosenOnly => {
                let (w, l) = side_scores(r, options.goals)?;
                relabel(r, make_goal(&w, options.goals), GoalSource::Chosen, (&w, &l), template).map(|a| vec![a])
            }
            AugmentMode::Full | AugmentMode::Half => augment_pair(r, template, options.goals).map(Vec::from),
        })
        .collect();

    let mut out = AugmentOutput {
        inputs: records.len(),
        ..Default::default()
    };
    for (record, result) in selected.iter().zip(per_record) {
        match result {
            Ok(items) => out.records.extend(items),
            Err(e) if e.is_tie() => {
                if options.keep_ties {
                    out.ties_kept += 1;
                    out.records.push(tie_record(record, template, options.goals));
                } else {
                    out.ties_dropped += 1;
                }
            }
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

/// Half-corpus augmentation with ties dropped.
pub fn augment_half(
    records: &[PreferenceRecord],
    template: &PromptTemplate,
) -> Result<Vec<AugmentedRecord>, AugmentError> {
    let options = AugmentOptions {
        mode: AugmentMode::Half,
        ..Default::default()
    };
    augment_corpus(records, template, options).map(|o| o.records)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RejectedFilter {
    /// Drop rejected-goal records whose goal is at or above the threshold.
    DropHigh,
    /// Drop rejected-goal records whose goal is below the threshold.
    DropLow,
}

/// Filter rejected-goal records by their goal level. Chosen-goal records
/// always pass; order is preserved.
pub fn filter_by_rejected_reward(
    augmented: Vec<AugmentedRecord>,
    mode: RejectedFilter,
    threshold: f64,
) -> Vec<AugmentedRecord> {
    augmented
        .into_iter()
        .filter(|r| {
            if r.goal_source == GoalSource::Chosen {
                return true;
            }
            let level = r.goal.level();
            match mode {
                RejectedFilter::DropHigh => level < threshold,
                RejectedFilter::DropLow => level >= threshold,
            }
        })
        .collect()
}
