use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::Serialize;

use super::world::ToyWorld;
use crate::numeric::{log_softmax, softmax};

/// Tabular softmax policy: one logit per `(prompt, goal, response)`.
///
/// Logits may be `-inf` for responses a deterministic policy never emits.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PolicyTable {
    logits: Vec<Vec<Vec<f64>>>,
}

impl PolicyTable {
    /// Zero logits everywhere: the uniform policy.
    pub fn zeros(world: &ToyWorld) -> Self {
        Self {
            logits: (0..world.num_prompts())
                .map(|x| vec![vec![0.0; world.num_responses(x)]; world.num_goals()])
                .collect(),
        }
    }

    pub fn from_logits(logits: Vec<Vec<Vec<f64>>>) -> Self {
        Self { logits }
    }

    /// Independent `N(0, sigma^2)` logits.
    pub fn gaussian(world: &ToyWorld, sigma: f64, rng: &mut impl Rng) -> Self {
        let normal = Normal::new(0.0, sigma).expect("sigma must be finite and non-negative");
        let mut table = Self::zeros(world);
        for block in &mut table.logits {
            for row in block {
                for v in row {
                    *v = normal.sample(rng);
                }
            }
        }
        table
    }

    /// Same shape as `world`.
    pub fn matches(&self, world: &ToyWorld) -> bool {
        self.logits.len() == world.num_prompts()
            && self.logits.iter().enumerate().all(|(x, block)| {
                block.len() == world.num_goals() && block.iter().all(|row| row.len() == world.num_responses(x))
            })
    }

    pub fn logits(&self) -> &[Vec<Vec<f64>>] {
        &self.logits
    }

    pub fn logits_mut(&mut self) -> &mut [Vec<Vec<f64>>] {
        &mut self.logits
    }

    pub fn row_logits(&self, x: usize, g: usize) -> &[f64] {
        &self.logits[x][g]
    }

    pub fn probs(&self, x: usize, g: usize) -> Vec<f64> {
        softmax(&self.logits[x][g])
    }

    pub fn log_probs(&self, x: usize, g: usize) -> Vec<f64> {
        log_softmax(&self.logits[x][g])
    }

    pub fn prob(&self, x: usize, g: usize, y: usize) -> f64 {
        self.probs(x, g)[y]
    }

    /// Probability table `[x][g][y]`.
    pub fn probability_table(&self) -> Vec<Vec<Vec<f64>>> {
        self.logits
            .iter()
            .map(|block| block.iter().map(|row| softmax(row)).collect())
            .collect()
    }

    /// Iterate over every logit mutably together with its index.
    pub(crate) fn for_each_mut(&mut self, mut f: impl FnMut((usize, usize, usize), &mut f64)) {
        for (x, block) in self.logits.iter_mut().enumerate() {
            for (g, row) in block.iter_mut().enumerate() {
                for (y, v) in row.iter_mut().enumerate() {
                    f((x, g, y), v);
                }
            }
        }
    }
}

/// Total-variation distance between two distributions over the same support.
pub fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}
