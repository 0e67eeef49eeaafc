use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::world::ToyWorld;
use super::ToyError;
use crate::numeric::sigmoid;

/// `(prompt, winner, loser, goal)` by index into the world.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct ToyTuple {
    pub prompt: usize,
    pub winner: usize,
    pub loser: usize,
    pub goal: usize,
}

impl ToyTuple {
    pub fn new(prompt: usize, winner: usize, loser: usize, goal: usize) -> Self {
        Self {
            prompt,
            winner,
            loser,
            goal,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ToyPreferenceSet {
    pub tuples: Vec<ToyTuple>,
}

impl ToyPreferenceSet {
    pub fn new(tuples: Vec<ToyTuple>) -> Self {
        Self { tuples }
    }

    pub fn len(&self) -> usize {
        self.tuples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tuples.is_empty()
    }

    /// Check every index against the world and that winner ≠ loser.
    pub fn check(&self, world: &ToyWorld) -> Result<(), ToyError> {
        for (i, t) in self.tuples.iter().enumerate() {
            let ok = t.prompt < world.num_prompts()
                && t.goal < world.num_goals()
                && t.winner < world.num_responses(t.prompt)
                && t.loser < world.num_responses(t.prompt)
                && t.winner != t.loser;
            if !ok {
                return Err(ToyError::InvalidData(format!(
                    "tuple {i} does not fit the world: {t:?}"
                )));
            }
        }
        Ok(())
    }

    /// Collapse duplicates into weights that sum to one, in tuple order.
    pub fn weighted(&self) -> Vec<(ToyTuple, f64)> {
        let mut counts: BTreeMap<ToyTuple, u64> = BTreeMap::new();
        for t in &self.tuples {
            *counts.entry(*t).or_default() += 1;
        }
        let n = self.tuples.len() as f64;
        counts.into_iter().map(|(t, c)| (t, c as f64 / n)).collect()
    }
}

/// How goals are attached to sampled pairs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum GoalMode {
    /// Every tuple is conditioned on the optimal goal.
    Optimal,
    /// Each unlabeled pair yields two tuples, one per response, with the
    /// goal set to that response's true reward.
    PerResponse,
}

/// Goal index of a response's true reward.
fn reward_goal(world: &ToyWorld, x: usize, y: usize) -> Result<usize, ToyError> {
    let r = world.true_reward(x, y);
    world.goal_index(r).ok_or(ToyError::GoalNotInWorld { reward: r })
}

/// Sample `n` Bradley–Terry comparisons under the goal-conditioned true reward.
pub fn bt_sample_preferences(
    world: &ToyWorld,
    n: usize,
    seed: u64,
    mode: GoalMode,
) -> Result<ToyPreferenceSet, ToyError> {
    for x in 0..world.num_prompts() {
        if world.num_responses(x) < 2 {
            return Err(ToyError::TooFewResponses { prompt: x });
        }
    }
    let mut cumulative = Vec::with_capacity(world.num_prompts());
    let mut acc = 0.0;
    for &p in world.prompt_dist() {
        acc += p;
        cumulative.push(acc);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let capacity = match mode {
        GoalMode::Optimal => n,
        GoalMode::PerResponse => 2 * n,
    };
    let mut tuples = Vec::with_capacity(capacity);
    for _ in 0..n {
        let u: f64 = rng.random::<f64>() * acc;
        let x = cumulative
            .iter()
            .position(|&c| u < c)
            .unwrap_or(world.num_prompts() - 1);
        let m = world.num_responses(x);
        let a = rng.random_range(0..m);
        let mut b = rng.random_range(0..m - 1);
        if b >= a {
            b += 1;
        }
        let goals = match mode {
            GoalMode::Optimal => vec![world.optimal_goal()],
            GoalMode::PerResponse => vec![reward_goal(world, x, a)?, reward_goal(world, x, b)?],
        };
        for g in goals {
            let p_a = sigmoid(world.goal_reward(x, a, g) - world.goal_reward(x, b, g));
            let (w, l) = if rng.random::<f64>() < p_a { (a, b) } else { (b, a) };
            tuples.push(ToyTuple::new(x, w, l, g));
        }
    }
    Ok(ToyPreferenceSet { tuples })
}

/// Deterministic goal relabeling of labeled pairs: `(x, y_w, y_l)` becomes
/// `(x, y_w, y_l, g = r*(x, y_w))` followed by `(x, y_l, y_w, g = r*(x, y_l))`.
pub fn relabel_by_true_reward(world: &ToyWorld, pairs: &[(usize, usize, usize)]) -> Result<ToyPreferenceSet, ToyError> {
    let mut tuples = Vec::with_capacity(2 * pairs.len());
    for &(x, w, l) in pairs {
        tuples.push(ToyTuple::new(x, w, l, reward_goal(world, x, w)?));
        tuples.push(ToyTuple::new(x, l, w, reward_goal(world, x, l)?));
    }
    Ok(ToyPreferenceSet { tuples })
}

/// Labeled pairs conditioned on the optimal goal only.
pub fn unconditioned(world: &ToyWorld, pairs: &[(usize, usize, usize)]) -> ToyPreferenceSet {
    let g = world.optimal_goal();
    ToyPreferenceSet {
        tuples: pairs.iter().map(|&(x, w, l)| ToyTuple::new(x, w, l, g)).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::toylab::world::{oracle_world, table1_world, ToyWorld, WorldSpec};

    #[test]
    fn per_response_mode_doubles() {
        let w = oracle_world();
        let d = bt_sample_preferences(&w, 100, 1, GoalMode::PerResponse).unwrap();
        assert_eq!(d.len(), 200);
        d.check(&w).unwrap();
        for pair in d.tuples.chunks(2) {
            assert_eq!(pair[0].prompt, pair[1].prompt);
            let mut a = [pair[0].winner, pair[0].loser];
            let mut b = [pair[1].winner, pair[1].loser];
            a.sort();
            b.sort();
            assert_eq!(a, b);
        }
        let d = bt_sample_preferences(&w, 100, 1, GoalMode::Optimal).unwrap();
        assert_eq!(d.len(), 100);
        assert!(d.tuples.iter().all(|t| t.goal == w.optimal_goal()));
    }

    #[test]
    fn sampling_is_seeded() {
        let w = oracle_world();
        let a = bt_sample_preferences(&w, 50, 9, GoalMode::PerResponse).unwrap();
        let b = bt_sample_preferences(&w, 50, 9, GoalMode::PerResponse).unwrap();
        let c = bt_sample_preferences(&w, 50, 10, GoalMode::PerResponse).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn equal_rewards_give_fair_coin() {
        let w = ToyWorld::new(WorldSpec::single_prompt(&["a", "b"], &[5.0, 5.0], 10.0)).unwrap();
        let d = bt_sample_preferences(&w, 20_000, 4, GoalMode::Optimal).unwrap();
        let a_wins = d.tuples.iter().filter(|t| t.winner == 0).count() as f64 / 20_000.0;
        // binomial sd is ~0.0035
        assert!((a_wins - 0.5).abs() < 0.02, "{a_wins}");
    }

    #[test]
    fn huge_reward_gap_is_deterministic() {
        let w = ToyWorld::new(WorldSpec::single_prompt(&["a", "b"], &[100.0, 0.0], 100.0)).unwrap();
        let d = bt_sample_preferences(&w, 1000, 4, GoalMode::Optimal).unwrap();
        assert!(d.tuples.iter().all(|t| t.winner == 0));
    }

    #[test]
    fn single_response_prompt_is_an_error() {
        let w = ToyWorld::new(WorldSpec::single_prompt(&["a"], &[5.0], 10.0)).unwrap();
        assert!(matches!(
            bt_sample_preferences(&w, 1, 0, GoalMode::Optimal),
            Err(ToyError::TooFewResponses { prompt: 0 })
        ));
    }

    #[test]
    fn deterministic_relabeling() {
        let w = table1_world();
        let d = relabel_by_true_reward(&w, &[(0, 0, 1)]).unwrap();
        assert_eq!(d.tuples, vec![ToyTuple::new(0, 0, 1, 1), ToyTuple::new(0, 1, 0, 0)]);
    }

    #[test]
    fn weights_sum_to_one() {
        let d = ToyPreferenceSet::new(vec![
            ToyTuple::new(0, 0, 1, 0),
            ToyTuple::new(0, 0, 1, 0),
            ToyTuple::new(0, 1, 0, 0),
        ]);
        let w = d.weighted();
        assert_eq!(w.len(), 2);
        assert!((w.iter().map(|p| p.1).sum::<f64>() - 1.0).abs() < 1e-15);
    }
}
