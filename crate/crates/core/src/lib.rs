//! Reward-augmented preference data tooling.
//!
//! The crate has two halves:
//!
//! * a data pipeline ([`corpus`], [`augment`], [`implicit`]) that turns scored
//!   preference pairs into goal-conditioned pairs, where each pair is relabeled
//!   once under the chosen response's score and once under the rejected
//!   response's score;
//! * a tabular laboratory ([`toylab`]) that trains goal-conditioned softmax
//!   policies with DPO on small finite worlds and compares them against the
//!   closed-form KL-regularized optimum.
//!
//! Data-parallel loops go through [`par`], which is backed by rayon when the
//! `parallel` feature is enabled and by plain iterators otherwise. Every
//! parallel path produces the same output as the sequential one.

pub mod augment;
pub mod corpus;
pub mod implicit;
pub mod numeric;
pub mod par;
pub mod toylab;

pub use augment::{AugmentedRecord, Goal, GoalSource, PromptTemplate};
pub use corpus::{PreferenceRecord, RewardScale};
