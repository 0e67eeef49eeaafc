//! Tabular goal-conditioned preference laboratory.
//!
//! A [`ToyWorld`] is a finite set of prompts, responses and goals with a known
//! true reward. Preferences are sampled from a goal-conditioned Bradley–Terry
//! model, a softmax [`PolicyTable`] is trained on them by full-batch gradient
//! descent on the DPO objective, and the result is compared against the
//! closed-form KL-regularized optimum.

use thiserror::Error;

pub mod data;
pub mod experiments;
pub mod objective;
pub mod oracle;
pub mod policy;
pub mod train;
pub mod world;

pub use data::{bt_sample_preferences, relabel_by_true_reward, unconditioned, GoalMode, ToyPreferenceSet, ToyTuple};
pub use objective::{dpo_loss, gradient, objective_value, sft_regularizer, GradientTable, Objective, TrainConfig};
pub use oracle::{closed_form_policy, closed_form_rows, gap, greedy_policy, value};
pub use policy::{total_variation, PolicyTable};
pub use train::{train, train_from, train_observed};
pub use world::{RefSpec, ToyWorld, WorldSpec};

#[derive(Debug, Error)]
pub enum ToyError {
    #[error("invalid world: {0}")]
    InvalidWorld(String),
    #[error("invalid data: {0}")]
    InvalidData(String),
    #[error("true reward {reward} is not one of the world's goals")]
    GoalNotInWorld { reward: f64 },
    #[error("prompt {prompt} has fewer than two responses")]
    TooFewResponses { prompt: usize },
    #[error("preference set is empty")]
    EmptyDataset,
    #[error("non-finite loss at step {step}")]
    NonFinite { step: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("no rejected response has true reward >= {threshold}")]
    EmptySelection { threshold: f64 },
    #[error("scaling fit needs at least 3 distinct sizes, got {found}")]
    TooFewSizes { found: usize },
}
