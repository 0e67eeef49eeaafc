//! Full-batch gradient descent on the training objective.

use super::data::ToyPreferenceSet;
use super::objective::{Objective, TrainConfig};
use super::policy::PolicyTable;
use super::world::ToyWorld;
use super::ToyError;

/// Train from zero logits.
pub fn train(world: &ToyWorld, data: &ToyPreferenceSet, config: &TrainConfig) -> Result<PolicyTable, ToyError> {
    train_from(world, data, config, PolicyTable::zeros(world))
}

/// Train from a given initial table.
pub fn train_from(
    world: &ToyWorld,
    data: &ToyPreferenceSet,
    config: &TrainConfig,
    init: PolicyTable,
) -> Result<PolicyTable, ToyError> {
    train_observed(world, data, config, init, |_, _| {})
}

/// Train and call `observe(step, policy)` before the first update and after
/// every update, so it sees `steps + 1` tables.
pub fn train_observed(
    world: &ToyWorld,
    data: &ToyPreferenceSet,
    config: &TrainConfig,
    init: PolicyTable,
    mut observe: impl FnMut(usize, &PolicyTable),
) -> Result<PolicyTable, ToyError> {
    if !init.matches(world) {
        return Err(ToyError::InvalidConfig("initial table does not match the world".into()));
    }
    let objective = Objective::new(world, data, config)?;
    let mut policy = init;
    observe(0, &policy);
    for step in 0..config.steps {
        let (loss, grad) = objective.value_and_gradient(&policy);
        if !loss.is_finite() {
            return Err(ToyError::NonFinite { step });
        }
        let lr = config.learning_rate;
        policy.for_each_mut(|(x, g, y), v| *v -= lr * grad[x][g][y]);
        observe(step + 1, &policy);
    }
    Ok(policy)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::toylab::data::{relabel_by_true_reward, ToyTuple};
    use crate::toylab::world::table1_world;

    #[test]
    fn zero_steps_is_uniform() {
        let w = table1_world();
        let d = ToyPreferenceSet::new(vec![ToyTuple::new(0, 0, 1, 2)]);
        let config = TrainConfig {
            steps: 0,
            ..Default::default()
        };
        assert_eq!(train(&w, &d, &config).unwrap(), PolicyTable::zeros(&w));
    }

    #[test]
    fn observer_sees_every_step() {
        let w = table1_world();
        let d = relabel_by_true_reward(&w, &[(0, 0, 1)]).unwrap();
        let config = TrainConfig {
            steps: 7,
            ..Default::default()
        };
        let mut seen = Vec::new();
        train_observed(&w, &d, &config, PolicyTable::zeros(&w), |s, _| seen.push(s)).unwrap();
        assert_eq!(seen, (0..=7).collect::<Vec<_>>());
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let w = table1_world();
        let d = ToyPreferenceSet::new(vec![ToyTuple::new(0, 0, 1, 2)]);
        let bad = PolicyTable::from_logits(vec![vec![vec![0.0; 2]]]);
        assert!(train_from(&w, &d, &TrainConfig::default(), bad).is_err());
    }
}
