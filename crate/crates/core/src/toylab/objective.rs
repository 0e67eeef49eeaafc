//! Goal-conditioned DPO loss with label smoothing, the SFT regularizer on the
//! optimal goal, and their exact gradients with respect to the logits.
//!
//! For a tuple `(x, y_w, y_l, g)` the margin is
//!
//! ```text
//! Δ = β [ (log π(y_w|x,g) − log π_ref(y_w|x,g)) − (log π(y_l|x,g) − log π_ref(y_l|x,g)) ]
//! ```
//!
//! and the smoothed loss is `−(1−ε) log σ(Δ) − ε log σ(−Δ)`. With softmax
//! logits the normalizer cancels inside `Δ`, so only the winner and loser
//! logits receive gradient. The regularizer is
//! `η β E_{x~d0, y~π_sft}[−log π(y|x,g*)]`.

use serde::Serialize;

use super::data::{ToyPreferenceSet, ToyTuple};
use super::policy::PolicyTable;
use super::world::ToyWorld;
use super::ToyError;
use crate::numeric::{sigmoid, softplus};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrainConfig {
    pub beta: f64,
    pub eta: f64,
    pub label_smoothing: f64,
    pub learning_rate: f64,
    pub steps: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            beta: 0.1,
            eta: 0.0,
            label_smoothing: 0.0,
            learning_rate: 0.5,
            steps: 2000,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), ToyError> {
        let bad = |m: &str| Err(ToyError::InvalidConfig(m.to_string()));
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return bad("beta must be positive");
        }
        if !(self.eta >= 0.0 && self.eta.is_finite()) {
            return bad("eta must be non-negative");
        }
        if !(0.0..0.5).contains(&self.label_smoothing) {
            return bad("label_smoothing must lie in [0, 0.5)");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        Ok(())
    }
}

/// Gradient with the same `[x][g][y]` shape as the logits.
pub type GradientTable = Vec<Vec<Vec<f64>>>;

fn margin(policy: &PolicyTable, world: &ToyWorld, t: &ToyTuple, beta: f64) -> f64 {
    let theta = policy.row_logits(t.prompt, t.goal);
    let reference = world.ref_row(t.prompt, t.goal);
    let log_ratio_ref = reference[t.winner].ln() - reference[t.loser].ln();
    beta * ((theta[t.winner] - theta[t.loser]) - log_ratio_ref)
}

fn smoothed_loss(delta: f64, eps: f64) -> f64 {
    let hard = softplus(-delta);
    if eps == 0.0 {
        hard
    } else {
        (1.0 - eps) * hard + eps * softplus(delta)
    }
}

/// `d loss / d Δ`.
fn smoothed_slope(delta: f64, eps: f64) -> f64 {
    -(1.0 - eps) * sigmoid(-delta) + eps * sigmoid(delta)
}

fn dpo_weighted(policy: &PolicyTable, world: &ToyWorld, data: &[(ToyTuple, f64)], beta: f64, eps: f64) -> f64 {
    data.iter()
        .map(|(t, w)| w * smoothed_loss(margin(policy, world, t, beta), eps))
        .sum()
}

/// Mean smoothed DPO loss over the tuples. `label_smoothing = 0` is plain DPO.
pub fn dpo_loss(
    policy: &PolicyTable,
    world: &ToyWorld,
    data: &ToyPreferenceSet,
    beta: f64,
    label_smoothing: f64,
) -> Result<f64, ToyError> {
    if data.is_empty() {
        return Err(ToyError::EmptyDataset);
    }
    Ok(dpo_weighted(policy, world, &data.weighted(), beta, label_smoothing))
}

/// `η β Σ_x d0(x) Σ_y π_sft(y|x) (−log π(y|x,g*))`, summed exactly.
pub fn sft_regularizer(policy: &PolicyTable, world: &ToyWorld, eta: f64, beta: f64) -> f64 {
    if eta == 0.0 {
        return 0.0;
    }
    let g = world.optimal_goal();
    let mut total = 0.0;
    for (x, &d) in world.prompt_dist().iter().enumerate() {
        let logp = policy.log_probs(x, g);
        let ce: f64 = world
            .sft_row(x)
            .iter()
            .zip(&logp)
            .filter(|(s, _)| **s > 0.0)
            .map(|(s, lp)| -s * lp)
            .sum();
        total += d * ce;
    }
    eta * beta * total
}

/// DPO loss plus SFT regularizer for a fixed dataset.
#[derive(Debug, Clone)]
pub struct Objective<'a> {
    world: &'a ToyWorld,
    data: Vec<(ToyTuple, f64)>,
    beta: f64,
    eta: f64,
    label_smoothing: f64,
}

impl<'a> Objective<'a> {
    pub fn new(world: &'a ToyWorld, data: &ToyPreferenceSet, config: &TrainConfig) -> Result<Self, ToyError> {
        config.validate()?;
        if data.is_empty() {
            return Err(ToyError::EmptyDataset);
        }
        data.check(world)?;
        Ok(Self {
            world,
            data: data.weighted(),
            beta: config.beta,
            eta: config.eta,
            label_smoothing: config.label_smoothing,
        })
    }

    pub fn value(&self, policy: &PolicyTable) -> f64 {
        dpo_weighted(policy, self.world, &self.data, self.beta, self.label_smoothing)
            + sft_regularizer(policy, self.world, self.eta, self.beta)
    }

    pub fn gradient(&self, policy: &PolicyTable) -> GradientTable {
        self.value_and_gradient(policy).1
    }

    pub fn value_and_gradient(&self, policy: &PolicyTable) -> (f64, GradientTable) {
        let world = self.world;
        let mut grad: GradientTable = policy
            .logits()
            .iter()
            .map(|block| block.iter().map(|row| vec![0.0; row.len()]).collect())
            .collect();

        let mut loss = 0.0;
        for (t, w) in &self.data {
            let delta = margin(policy, world, t, self.beta);
            loss += w * smoothed_loss(delta, self.label_smoothing);
            let s = w * self.beta * smoothed_slope(delta, self.label_smoothing);
            let row = &mut grad[t.prompt][t.goal];
            row[t.winner] += s;
            row[t.loser] -= s;
        }

        if self.eta != 0.0 {
            let g = world.optimal_goal();
            let scale = self.eta * self.beta;
            for (x, &d) in world.prompt_dist().iter().enumerate() {
                let logp = policy.log_probs(x, g);
                let sft = world.sft_row(x);
                let mut ce = 0.0;
                for y in 0..logp.len() {
                    if sft[y] > 0.0 {
                        ce -= sft[y] * logp[y];
                    }
                    grad[x][g][y] += scale * d * (logp[y].exp() - sft[y]);
                }
                loss += scale * d * ce;
            }
        }
        (loss, grad)
    }
}

/// Exact gradient of the training objective with respect to the logits.
pub fn gradient(
    policy: &PolicyTable,
    world: &ToyWorld,
    data: &ToyPreferenceSet,
    config: &TrainConfig,
) -> Result<GradientTable, ToyError> {
    Ok(Objective::new(world, data, config)?.gradient(policy))
}

/// Training objective value: DPO loss plus SFT regularizer.
pub fn objective_value(
    policy: &PolicyTable,
    world: &ToyWorld,
    data: &ToyPreferenceSet,
    config: &TrainConfig,
) -> Result<f64, ToyError> {
    Ok(Objective::new(world, data, config)?.value(policy))
}
