//! Closed-form optima and the value on the optimal goal.

use super::policy::PolicyTable;
use super::world::ToyWorld;

/// `π(y) ∝ ref(y) exp(R(y)/β)` for one row, shifted by the row maximum.
pub fn closed_form_rows(rewards: &[f64], ref_row: &[f64], beta: f64) -> Vec<f64> {
    assert!(beta > 0.0, "beta must be positive");
    let max = rewards.iter().map(|r| r / beta).fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = rewards
        .iter()
        .zip(ref_row)
        .map(|(r, p)| p * (r / beta - max).exp())
        .collect();
    let z: f64 = weights.iter().sum();
    weights.into_iter().map(|w| w / z).collect()
}

/// Closed-form KL-regularized optimum for a reward table `[x][g][y]` and a
/// reference table of the same shape. Logits are the log-probabilities.
pub fn closed_form_policy(rewards: &[Vec<Vec<f64>>], reference: &[Vec<Vec<f64>>], beta: f64) -> PolicyTable {
    let logits = rewards
        .iter()
        .zip(reference)
        .map(|(rb, pb)| {
            rb.iter()
                .zip(pb)
                .map(|(r, p)| closed_form_rows(r, p, beta).into_iter().map(f64::ln).collect())
                .collect()
        })
        .collect();
    PolicyTable::from_logits(logits)
}

/// Closed-form optimum of the world's own goal-conditioned reward.
pub fn world_optimum(world: &ToyWorld, beta: f64) -> PolicyTable {
    closed_form_policy(&world.goal_reward_table(), world.ref_policy(), beta)
}

/// Deterministic argmax of the goal reward in every context; ties share mass.
pub fn greedy_policy(world: &ToyWorld) -> PolicyTable {
    let logits = world
        .goal_reward_table()
        .into_iter()
        .map(|block| {
            block
                .into_iter()
                .map(|row| {
                    let best = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    row.iter()
                        .map(|&r| if r == best { 0.0 } else { f64::NEG_INFINITY })
                        .collect()
                })
                .collect()
        })
        .collect();
    PolicyTable::from_logits(logits)
}

/// `J(π) = Σ_x d0(x) Σ_y π(y|x,g*) R*(x,y,g*)`.
pub fn value(policy: &PolicyTable, world: &ToyWorld) -> f64 {
    let g = world.optimal_goal();
    world
        .prompt_dist()
        .iter()
        .enumerate()
        .map(|(x, d)| {
            let p = policy.probs(x, g);
            d * (0..p.len()).map(|y| p[y] * world.goal_reward(x, y, g)).sum::<f64>()
        })
        .sum()
}

/// `J(optimal) − J(policy)`, accumulated as one sum of probability differences.
pub fn gap(policy: &PolicyTable, optimal: &PolicyTable, world: &ToyWorld) -> f64 {
    let g = world.optimal_goal();
    world
        .prompt_dist()
        .iter()
        .enumerate()
        .map(|(x, d)| {
            let p = policy.probs(x, g);
            let q = optimal.probs(x, g);
            d * (0..p.len())
                .map(|y| (q[y] - p[y]) * world.goal_reward(x, y, g))
                .sum::<f64>()
        })
        .sum()
}
