use serde::{Deserialize, Serialize};

use super::oracle::closed_form_rows;
use super::ToyError;

/// Tolerance for user-supplied distributions before they are renormalized.
const INPUT_SUM_TOLERANCE: f64 = 1e-6;

/// A finite goal-conditioned preference world.
///
/// Goals are shared by all prompts. The optimal goal is `r_max`, which must be
/// one of the goals. Reference probabilities are stored per `(prompt, goal)`
/// context.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyWorld {
    prompts: Vec<String>,
    responses: Vec<Vec<String>>,
    goals: Vec<f64>,
    optimal_goal: usize,
    true_reward: Vec<Vec<f64>>,
    ref_policy: Vec<Vec<Vec<f64>>>,
    sft_policy: Vec<Vec<f64>>,
    prompt_dist: Vec<f64>,
}

/// Reference policy in a world file: one row per prompt shared by every
/// goal, or one row per `(prompt, goal)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RefSpec {
    PerPrompt(Vec<Vec<f64>>),
    PerContext(Vec<Vec<Vec<f64>>>),
}

/// JSON world specification.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldSpec {
    pub prompts: Vec<String>,
    pub responses: Vec<Vec<String>>,
    /// `reward[x][y]`, each in `[0, r_max]`.
    pub reward: Vec<Vec<f64>>,
    pub r_max: f64,
    /// Defaults to the distinct rewards plus `r_max`, ascending.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub goals: Option<Vec<f64>>,
    /// Defaults to uniform.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ref_policy: Option<RefSpec>,
    /// `sft[x][y]` at the optimal goal. Defaults to the β = 1 closed-form
    /// policy for the true goal-conditioned reward.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sft_policy: Option<Vec<Vec<f64>>>,
    /// Defaults to uniform.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d0: Option<Vec<f64>>,
}

impl WorldSpec {
    /// One prompt, uniform reference, default goals.
    pub fn single_prompt(responses: &[&str], reward: &[f64], r_max: f64) -> Self {
        Self {
            prompts: vec!["x".into()],
            responses: vec![responses.iter().map(|s| s.to_string()).collect()],
            reward: vec![reward.to_vec()],
            r_max,
            goals: None,
            ref_policy: None,
            sft_policy: None,
            d0: None,
        }
    }
}

fn invalid(msg: impl Into<String>) -> ToyError {
    ToyError::InvalidWorld(msg.into())
}

fn normalized_row(row: &[f64], what: &str, strictly_positive: bool) -> Result<Vec<f64>, ToyError> {
    if row.iter().any(|p| !p.is_finite() || *p < 0.0) {
        return Err(invalid(format!("{what} has a negative or non-finite entry")));
    }
    if strictly_positive && row.iter().any(|&p| p <= 0.0) {
        return Err(invalid(format!("{what} must be strictly positive")));
    }
    let sum: f64 = row.iter().sum();
    if (sum - 1.0).abs() > INPUT_SUM_TOLERANCE {
        return Err(invalid(format!("{what} sums to {sum}, not 1")));
    }
    Ok(row.iter().map(|p| p / sum).collect())
}

impl ToyWorld {
    pub fn new(spec: WorldSpec) -> Result<Self, ToyError> {
        let n_prompts = spec.prompts.len();
        if n_prompts == 0 {
            return Err(invalid("world has no prompts"));
        }
        if spec.responses.len() != n_prompts || spec.reward.len() != n_prompts {
            return Err(invalid("responses and reward must have one row per prompt"));
        }
        if !(spec.r_max.is_finite() && spec.r_max > 0.0) {
            return Err(invalid("r_max must be positive"));
        }
        for (x, (names, rewards)) in spec.responses.iter().zip(&spec.reward).enumerate() {
            if names.is_empty() {
                return Err(invalid(format!("prompt {x} has no responses")));
            }
            if names.len() != rewards.len() {
                return Err(invalid(format!("prompt {x}: reward row length differs from responses")));
            }
            if rewards.iter().any(|r| !(0.0..=spec.r_max).contains(r)) {
                return Err(invalid(format!("prompt {x}: rewards must lie in [0, r_max]")));
            }
        }

        let goals = match spec.goals {
            Some(g) => g,
            None => {
                let mut g: Vec<f64> = spec.reward.iter().flatten().copied().collect();
                g.push(spec.r_max);
                g.sort_by(f64::total_cmp);
                g.dedup();
                g
            }
        };
        if goals.iter().any(|g| !g.is_finite()) {
            return Err(invalid("goals must be finite"));
        }
        let optimal_goal = goals
            .iter()
            .position(|&g| g == spec.r_max)
            .ok_or_else(|| invalid("goals must include r_max"))?;

        let ref_policy = match spec.ref_policy {
            None => spec
                .responses
                .iter()
                .map(|ys| vec![vec![1.0 / ys.len() as f64; ys.len()]; goals.len()])
                .collect(),
            Some(RefSpec::PerPrompt(rows)) => {
                if rows.len() != n_prompts {
                    return Err(invalid("ref_policy needs one row per prompt"));
                }
                let mut out = Vec::with_capacity(n_prompts);
                for (x, row) in rows.iter().enumerate() {
                    if row.len() != spec.responses[x].len() {
                        return Err(invalid(format!("ref_policy row {x} has the wrong length")));
                    }
                    let row = normalized_row(row, &format!("ref_policy row {x}"), true)?;
                    out.push(vec![row; goals.len()]);
                }
                out
            }
            Some(RefSpec::PerContext(table)) => {
                if table.len() != n_prompts {
                    return Err(invalid("ref_policy needs one block per prompt"));
                }
                let mut out = Vec::with_capacity(n_prompts);
                for (x, block) in table.iter().enumerate() {
                    if block.len() != goals.len() {
                        return Err(invalid(format!("ref_policy block {x} needs one row per goal")));
                    }
                    let mut rows = Vec::with_capacity(goals.len());
                    for (g, row) in block.iter().enumerate() {
                        if row.len() != spec.responses[x].len() {
                            return Err(invalid(format!("ref_policy[{x}][{g}] has the wrong length")));
                        }
                        rows.push(normalized_row(row, &format!("ref_policy[{x}][{g}]"), true)?);
                    }
                    out.push(rows);
                }
                out
            }
        };

        let prompt_dist = match spec.d0 {
            None => vec![1.0 / n_prompts as f64; n_prompts],
            Some(d) => {
                if d.len() != n_prompts {
                    return Err(invalid("d0 needs one entry per prompt"));
                }
                normalized_row(&d, "d0", false)?
            }
        };

        let mut world = ToyWorld {
            prompts: spec.prompts,
            responses: spec.responses,
            goals,
            optimal_goal,
            true_reward: spec.reward,
            ref_policy,
            sft_policy: Vec::new(),
            prompt_dist,
        };

        world.sft_policy = match spec.sft_policy {
            Some(rows) => {
                if rows.len() != n_prompts {
                    return Err(invalid("sft_policy needs one row per prompt"));
                }
                rows.iter()
                    .enumerate()
                    .map(|(x, row)| {
                        if row.len() != world.responses[x].len() {
                            return Err(invalid(format!("sft_policy row {x} has the wrong length")));
                        }
                        normalized_row(row, &format!("sft_policy row {x}"), false)
                    })
                    .collect::<Result<_, _>>()?
            }
            None => world.default_sft_policy(),
        };
        Ok(world)
    }

    /// Closed-form β = 1 policy for the true reward at the optimal goal.
    fn default_sft_policy(&self) -> Vec<Vec<f64>> {
        let g = self.optimal_goal;
        (0..self.num_prompts())
            .map(|x| {
                let rewards: Vec<f64> = (0..self.num_responses(x)).map(|y| self.goal_reward(x, y, g)).collect();
                closed_form_rows(&rewards, &self.ref_policy[x][g], 1.0)
            })
            .collect()
    }

    /// Replace the reference policy of every context.
    pub fn with_ref_policy(mut self, table: Vec<Vec<Vec<f64>>>) -> Result<Self, ToyError> {
        if table.len() != self.num_prompts() {
            return Err(invalid("reference table needs one block per prompt"));
        }
        for (x, block) in table.iter().enumerate() {
            if block.len() != self.goals.len() {
                return Err(invalid("reference table needs one row per goal"));
            }
            for row in block {
                if row.len() != self.num_responses(x) || row.iter().any(|&p| p.is_nan() || p <= 0.0) {
                    return Err(invalid("reference rows must be strictly positive"));
                }
                let s: f64 = row.iter().sum();
                if (s - 1.0).abs() > 1e-12 {
                    return Err(invalid("reference rows must sum to 1"));
                }
            }
        }
        self.ref_policy = table;
        Ok(self)
    }

    pub fn num_prompts(&self) -> usize {
        self.prompts.len()
    }

    pub fn num_responses(&self, x: usize) -> usize {
        self.responses[x].len()
    }

    pub fn num_goals(&self) -> usize {
        self.goals.len()
    }

    pub fn prompts(&self) -> &[String] {
        &self.prompts
    }

    pub fn responses(&self, x: usize) -> &[String] {
        &self.responses[x]
    }

    pub fn goals(&self) -> &[f64] {
        &self.goals
    }

    /// Index of the optimal goal `r_max`.
    pub fn optimal_goal(&self) -> usize {
        self.optimal_goal
    }

    pub fn r_max(&self) -> f64 {
        self.goals[self.optimal_goal]
    }

    pub fn goal_index(&self, value: f64) -> Option<usize> {
        self.goals.iter().position(|&g| (g - value).abs() <= 1e-12)
    }

    pub fn true_reward(&self, x: usize, y: usize) -> f64 {
        self.true_reward[x][y]
    }

    /// `-(g - r*(x, y))^2` for goal index `g`.
    pub fn goal_reward(&self, x: usize, y: usize, g: usize) -> f64 {
        let d = self.goals[g] - self.true_reward[x][y];
        0.0 - d * d
    }

    /// `R*[x][g][y]`.
    pub fn goal_reward_table(&self) -> Vec<Vec<Vec<f64>>> {
        (0..self.num_prompts())
            .map(|x| {
                (0..self.num_goals())
                    .map(|g| (0..self.num_responses(x)).map(|y| self.goal_reward(x, y, g)).collect())
                    .collect()
            })
            .collect()
    }

    pub fn ref_policy(&self) -> &[Vec<Vec<f64>>] {
        &self.ref_policy
    }

    pub fn ref_row(&self, x: usize, g: usize) -> &[f64] {
        &self.ref_policy[x][g]
    }

    pub fn sft_row(&self, x: usize) -> &[f64] {
        &self.sft_policy[x]
    }

    pub fn prompt_dist(&self) -> &[f64] {
        &self.prompt_dist
    }

    /// All `(prompt, goal)` contexts in row-major order.
    pub fn contexts(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.num_prompts()).flat_map(move |x| (0..self.num_goals()).map(move |g| (x, g)))
    }
}

/// One prompt with responses rewarded 9 and 8; goals {8, 9, 10}.
pub fn table1_world() -> ToyWorld {
    ToyWorld::new(WorldSpec::single_prompt(&["y1", "y2"], &[9.0, 8.0], 10.0)).expect("static world is valid")
}

/// One prompt with responses rewarded 9, 1 and 0; goals {0, 1, 9, 10}.
pub fn table2_world() -> ToyWorld {
    ToyWorld::new(WorldSpec::single_prompt(&["y1", "y2", "y3"], &[9.0, 1.0, 0.0], 10.0)).expect("static world is valid")
}

/// Two prompts, three responses each, goals {0, 1, 2}. Each prompt's rewards
/// are a permutation of the goals so every context receives data under
/// per-response goal labeling.
pub fn oracle_world() -> ToyWorld {
    ToyWorld::new(WorldSpec {
        prompts: vec!["x0".into(), "x1".into()],
        responses: vec![
            vec!["a0".into(), "a1".into(), "a2".into()],
            vec!["b0".into(), "b1".into(), "b2".into()],
        ],
        reward: vec![vec![2.0, 1.0, 0.0], vec![0.0, 2.0, 1.0]],
        r_max: 2.0,
        goals: None,
        ref_policy: None,
        sft_policy: None,
        d0: None,
    })
    .expect("static world is valid")
}

/// Eight prompts with four responses each. Every prompt has one response at
/// `r_max` = 10; the others sit at 9.5, 9 or 8.5, so preferences under the
/// optimal goal are informative but noisy.
pub fn scaling_world() -> ToyWorld {
    const LEVELS: [[f64; 4]; 8] = [
        [10.0, 9.5, 9.0, 8.5],
        [9.5, 10.0, 8.5, 9.0],
        [9.0, 8.5, 10.0, 9.5],
        [8.5, 9.0, 9.5, 10.0],
        [10.0, 9.0, 9.5, 8.5],
        [9.5, 8.5, 9.0, 10.0],
        [9.0, 10.0, 8.5, 9.5],
        [8.5, 9.5, 10.0, 9.0],
    ];
    let prompts: Vec<String> = (0..LEVELS.len()).map(|i| format!("x{i}")).collect();
    let responses = (0..LEVELS.len())
        .map(|i| (0..4).map(|j| format!("x{i}y{j}")).collect())
        .collect();
    ToyWorld::new(WorldSpec {
        prompts,
        responses,
        reward: LEVELS.iter().map(|r| r.to_vec()).collect(),
        r_max: 10.0,
        goals: None,
        ref_policy: None,
        sft_policy: None,
        d0: None,
    })
    .expect("static world is valid")
}
