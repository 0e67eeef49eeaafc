//! Built-in experiments on the tabular worlds, each returning a [`Report`]
//! with probability rows, scalar metrics and named pass/fail checks.

use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::data::{bt_sample_preferences, relabel_by_true_reward, unconditioned, GoalMode};
use super::objective::TrainConfig;
use super::oracle::{closed_form_policy, gap, greedy_policy, world_optimum};
use super::policy::{total_variation, PolicyTable};
use super::train::{train, train_from, train_observed};
use super::world::{oracle_world, scaling_world, table1_world, table2_world, ToyWorld};
use super::ToyError;
use crate::numeric::softmax;
use crate::par::*;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProbabilityRow {
    pub label: String,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Metric {
    pub name: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub experiment: String,
    pub columns: Vec<String>,
    pub rows: Vec<ProbabilityRow>,
    pub metrics: Vec<Metric>,
    pub checks: Vec<Check>,
}

impl Report {
    fn new(experiment: &str, columns: Vec<String>) -> Self {
        Self {
            experiment: experiment.to_string(),
            columns,
            rows: Vec::new(),
            metrics: Vec::new(),
            checks: Vec::new(),
        }
    }

    fn row(&mut self, label: impl Into<String>, values: Vec<f64>) {
        self.rows.push(ProbabilityRow {
            label: label.into(),
            values,
        });
    }

    fn metric(&mut self, name: impl Into<String>, value: f64) {
        self.metrics.push(Metric {
            name: name.into(),
            value,
        });
    }

    fn check(&mut self, name: impl Into<String>, passed: bool, detail: impl Into<String>) {
        self.checks.push(Check {
            name: name.into(),
            passed,
            detail: detail.into(),
        });
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failed_checks(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }

    /// Aligned plain-text rendering.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{}", self.experiment);
        if !self.rows.is_empty() {
            let label_w = self
                .rows
                .iter()
                .map(|r| r.label.chars().count())
                .max()
                .unwrap_or(0)
                .max(6);
            let col_w = self.columns.iter().map(|c| c.len()).max().unwrap_or(0).max(8);
            let _ = write!(out, "\n{:<label_w$}", "");
            for c in &self.columns {
                let _ = write!(out, "  {c:>col_w$}");
            }
            out.push('\n');
            for row in &self.rows {
                let _ = write!(out, "{:<label_w$}", row.label);
                for v in &row.values {
                    let _ = write!(out, "  {v:>col_w$.4}");
                }
                out.push('\n');
            }
        }
        if !self.metrics.is_empty() {
            out.push('\n');
            let w = self.metrics.iter().map(|m| m.name.len()).max().unwrap_or(0);
            for m in &self.metrics {
                let _ = writeln!(out, "{:<w$}  {}", m.name, fmt_metric(m.value));
            }
        }
        if !self.checks.is_empty() {
            out.push('\n');
            let w = self.checks.iter().map(|c| c.name.len()).max().unwrap_or(0);
            for c in &self.checks {
                let status = if c.passed { "PASS" } else { "FAIL" };
                let _ = writeln!(out, "{status}  {:<w$}  {}", c.name, c.detail);
            }
        }
        out
    }
}

fn fmt_metric(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{v:.0}")
    } else if v.abs() < 1e-3 || v.abs() >= 1e6 {
        format!("{v:.6e}")
    } else {
        format!("{v:.6}")
    }
}

fn response_columns(world: &ToyWorld, x: usize) -> Vec<String> {
    world.responses(x).to_vec()
}

fn goal_label(world: &ToyWorld, g: usize) -> String {
    format!("pi(y|x,g={})", world.goals()[g])
}

/// Table 1: one prompt, `y1 ≻ y2` with true rewards 9 and 8.
pub fn table1_experiment(config: &TrainConfig) -> Result<Report, ToyError> {
    let world = table1_world();
    let pairs = [(0, 0, 1)];
    let gs = world.optimal_goal();

    let plain_data = unconditioned(&world, &pairs);
    let mut monotone = true;
    let mut last = f64::INFINITY;
    let mut worst_rise = 0.0f64;
    let plain = train_observed(&world, &plain_data, config, PolicyTable::zeros(&world), |_, p| {
        let y2 = p.prob(0, gs, 1);
        if y2 > last {
            monotone = false;
            worst_rise = worst_rise.max(y2 - last);
        }
        last = y2;
    })?;

    let aug = train(&world, &relabel_by_true_reward(&world, &pairs)?, config)?;
    let g9 = world.goal_index(9.0).expect("goal 9");
    let g8 = world.goal_index(8.0).expect("goal 8");

    let mut report = Report::new("table1", response_columns(&world, 0));
    let plain_p = plain.probs(0, gs);
    report.row("pi(y|x)", plain_p.clone());
    let p9 = aug.probs(0, g9);
    let p8 = aug.probs(0, g8);
    report.row(goal_label(&world, g9), p9.clone());
    report.row(goal_label(&world, g8), p8.clone());
    report.row(goal_label(&world, gs), aug.probs(0, gs));

    report.check(
        "plain_y2_below_0.05",
        plain_p[1] < 0.05,
        format!("pi(y2|x) = {:.6}", plain_p[1]),
    );
    report.check(
        "augmented_g9_y1_above_0.9",
        p9[0] > 0.9,
        format!("pi(y1|x,g=9) = {:.6}", p9[0]),
    );
    report.check(
        "augmented_g8_y2_above_0.9",
        p8[1] > 0.9,
        format!("pi(y2|x,g=8) = {:.6}", p8[1]),
    );
    report.check(
        "plain_y2_monotone",
        monotone,
        format!("largest step increase {worst_rise:e}"),
    );
    Ok(report)
}

/// Settings for the Table 2 experiment.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Table2Config {
    pub train: TrainConfig,
    /// Number of random initializations for plain DPO.
    pub inits: usize,
    /// Standard deviation of the initial logits.
    pub init_sigma: f64,
}

impl Default for Table2Config {
    fn default() -> Self {
        Self {
            train: TrainConfig::default(),
            inits: 5,
            init_sigma: 1.0,
        }
    }
}

/// Table 2: responses rewarded 9, 1 and 0 with `y1 ≻ y3` and `y2 ≻ y3`.
///
/// Plain DPO is started from seeded Gaussian logits and regularized toward
/// that starting policy, so the data pins down only `y3` and leaves the
/// `y1`/`y2` split at its initial value.
pub fn table2_experiment(config: &Table2Config) -> Result<Report, ToyError> {
    if config.inits == 0 || !(config.init_sigma > 0.0 && config.init_sigma.is_finite()) {
        return Err(ToyError::InvalidConfig(
            "table2 needs at least one init and a positive sigma".into(),
        ));
    }
    let world = table2_world();
    let pairs = [(0, 0, 2), (0, 1, 2)];
    let gs = world.optimal_goal();
    let plain_data = unconditioned(&world, &pairs);

    let mut report = Report::new("table2", response_columns(&world, 0));
    let mut y2 = Vec::with_capacity(config.inits);
    let mut y3_max = 0.0f64;
    for i in 0..config.inits {
        let seed = config.train.seed.wrapping_add(i as u64);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let init = PolicyTable::gaussian(&world, config.init_sigma, &mut rng);
        let reference: Vec<Vec<Vec<f64>>> = init
            .logits()
            .iter()
            .map(|block| block.iter().map(|row| softmax(row)).collect())
            .collect();
        let seeded = world.clone().with_ref_policy(reference)?;
        let plain = train_from(&seeded, &plain_data, &config.train, init)?;
        let p = plain.probs(0, gs);
        y2.push(p[1]);
        y3_max = y3_max.max(p[2]);
        report.row(format!("pi(y|x) seed {seed}"), p);
    }

    let aug = train(&world, &relabel_by_true_reward(&world, &pairs)?, &config.train)?;
    let mut goal_ok = Vec::new();
    for (y, r) in [(0usize, 9.0), (1, 1.0), (2, 0.0)] {
        let g = world.goal_index(r).expect("reward is a goal");
        let p = aug.probs(0, g);
        goal_ok.push((y, r, p[y]));
        report.row(goal_label(&world, g), p);
    }

    let lo = y2.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = y2.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mean = y2.iter().sum::<f64>() / y2.len() as f64;
    let var = y2.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / y2.len() as f64;
    report.metric("plain_y2_mean", mean);
    report.metric("plain_y2_variance", var);
    report.metric("plain_y2_range", hi - lo);
    report.metric("plain_y3_max", y3_max);

    report.check(
        "plain_y3_below_0.05",
        y3_max < 0.05,
        format!("max pi(y3|x) over inits = {y3_max:.6}"),
    );
    report.check(
        "plain_y2_range_above_0.2",
        hi - lo > 0.2,
        format!("pi(y2|x) spans [{lo:.4}, {hi:.4}]"),
    );
    for (y, r, p) in goal_ok {
        report.check(
            format!("augmented_g{r}_y{}_above_0.9", y + 1),
            p > 0.9,
            format!("pi(y{}|x,g={r}) = {p:.6}", y + 1),
        );
    }
    Ok(report)
}

/// Mean log-probability of high-reward rejected responses under a policy and
/// under a reference, both conditioned on the optimal goal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct UnlearningMetric {
    pub selected: usize,
    pub policy_mean: f64,
    pub reference_mean: f64,
}

impl UnlearningMetric {
    pub fn difference(&self) -> f64 {
        self.policy_mean - self.reference_mean
    }
}

/// Averages `log π(y_l|x,g*)` over labeled pairs `(x, y_w, y_l)` whose
/// rejected response has true reward at least `threshold`.
pub fn unlearning_metric(
    policy: &PolicyTable,
    reference: &PolicyTable,
    world: &ToyWorld,
    pairs: &[(usize, usize, usize)],
    threshold: f64,
) -> Result<UnlearningMetric, ToyError> {
    let g = world.optimal_goal();
    let selected: Vec<_> = pairs
        .iter()
        .filter(|&&(x, _, l)| world.true_reward(x, l) >= threshold)
        .collect();
    if selected.is_empty() {
        return Err(ToyError::EmptySelection { threshold });
    }
    let mean =
        |p: &PolicyTable| selected.iter().map(|&&(x, _, l)| p.log_probs(x, g)[l]).sum::<f64>() / selected.len() as f64;
    Ok(UnlearningMetric {
        selected: selected.len(),
        policy_mean: mean(policy),
        reference_mean: mean(reference),
    })
}

/// Unlearning on the Table 1 world: the rejected `y2` has reward 8.
pub fn unlearning_experiment(config: &TrainConfig, threshold: f64) -> Result<Report, ToyError> {
    let world = table1_world();
    let pairs = [(0, 0, 1)];
    let base = PolicyTable::zeros(&world);
    let plain = train(&world, &unconditioned(&world, &pairs), config)?;
    let aug = train(&world, &relabel_by_true_reward(&world, &pairs)?, config)?;
    let m_plain = unlearning_metric(&plain, &base, &world, &pairs, threshold)?;
    let m_aug = unlearning_metric(&aug, &base, &world, &pairs, threshold)?;

    let mut report = Report::new("unlearning", response_columns(&world, 0));
    let gs = world.optimal_goal();
    report.row("base pi(y|x)", base.probs(0, gs));
    report.row("plain pi(y|x)", plain.probs(0, gs));
    report.row("augmented pi(y|x,g*)", aug.probs(0, gs));
    report.metric("selected", m_plain.selected as f64);
    report.metric("base_mean_logp", m_plain.reference_mean);
    report.metric("plain_mean_logp", m_plain.policy_mean);
    report.metric("augmented_mean_logp", m_aug.policy_mean);
    let margin = m_aug.policy_mean - m_plain.policy_mean;
    report.metric("augmented_minus_plain", margin);

    report.check(
        "augmented_exceeds_plain_by_1_nat",
        margin >= 1.0,
        format!("{margin:.4} nats"),
    );
    report.check(
        "plain_not_above_base",
        m_plain.policy_mean <= m_plain.reference_mean,
        format!("{:.4} vs {:.4}", m_plain.policy_mean, m_plain.reference_mean),
    );
    report.check(
        "augmented_not_above_base",
        m_aug.policy_mean <= m_aug.reference_mean,
        format!("{:.4} vs {:.4}", m_aug.policy_mean, m_aug.reference_mean),
    );
    Ok(report)
}

/// Settings for oracle recovery.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleConfig {
    pub train: TrainConfig,
    pub samples: usize,
    pub tolerance: f64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            train: TrainConfig {
                beta: 1.0,
                eta: 0.0,
                label_smoothing: 0.0,
                learning_rate: 10.0,
                steps: 4000,
                seed: 0,
            },
            samples: 8192,
            tolerance: 0.1,
        }
    }
}

/// Trains on Bradley–Terry samples with per-response goals and measures the
/// total-variation distance to the closed-form optimum in every context.
pub fn oracle_experiment(config: &OracleConfig) -> Result<Report, ToyError> {
    oracle_experiment_on(&oracle_world(), config)
}

pub fn oracle_experiment_on(world: &ToyWorld, config: &OracleConfig) -> Result<Report, ToyError> {
    let data = bt_sample_preferences(world, config.samples, config.train.seed, GoalMode::PerResponse)?;
    let learned = train(world, &data, &config.train)?;
    let target = world_optimum(world, config.train.beta);

    let mut report = Report::new("oracle", vec!["learned_tv".into()]);
    let mut worst = 0.0f64;
    for (x, g) in world.contexts() {
        let tv = total_variation(&learned.probs(x, g), &target.probs(x, g));
        worst = worst.max(tv);
        report.row(format!("{} g={}", world.prompts()[x], world.goals()[g]), vec![tv]);
    }
    report.metric("samples", config.samples as f64);
    report.metric("tuples", data.len() as f64);
    report.metric("max_tv", worst);
    report.check(
        format!("max_tv_below_{}", config.tolerance),
        worst < config.tolerance,
        format!("max per-context TV = {worst:.6}"),
    );
    Ok(report)
}

/// How β and η are set per sample size.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BetaSchedule {
    /// `β = 1/√N`, `η = η₀/√N` and learning rate `lr₀·N`.
    InverseSqrt,
    /// β, η and the learning rate are taken from the train config.
    Fixed,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalingConfig {
    pub sizes: Vec<usize>,
    pub seeds: Vec<u64>,
    pub train: TrainConfig,
    pub schedule: BetaSchedule,
    /// β of the closed-form baseline; `None` compares against the greedy
    /// optimum, which is the β₀ → 0 limit.
    pub baseline_beta: Option<f64>,
}

impl Default for ScalingConfig {
    fn default() -> Self {
        Self {
            sizes: (6..=12).map(|k| 1usize << k).collect(),
            seeds: (0..5).collect(),
            train: TrainConfig {
                beta: 1.0,
                eta: 1.0,
                label_smoothing: 0.0,
                learning_rate: 2.0,
                steps: 2000,
                seed: 0,
            },
            schedule: BetaSchedule::InverseSqrt,
            baseline_beta: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScalingRun {
    pub n: usize,
    pub seed: u64,
    pub beta: f64,
    pub gap: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScalingPoint {
    pub n: usize,
    pub mean_gap: f64,
    pub std_gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalingResult {
    pub runs: Vec<ScalingRun>,
    pub points: Vec<ScalingPoint>,
    pub slope: f64,
    pub report: Report,
}

impl ScalingResult {
    /// `N,seed,gap` lines with a header.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("N,seed,gap\n");
        for r in &self.runs {
            let _ = writeln!(out, "{},{},{:e}", r.n, r.seed, r.gap);
        }
        out
    }
}

/// Least-squares slope of `ln y` on `ln x`.
pub fn log_log_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

/// Seed for the data of one `(N, seed)` run.
fn run_seed(seed: u64, n: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ n as u64
}

fn run_config(config: &ScalingConfig, n: usize, seed: u64) -> TrainConfig {
    let mut t = config.train;
    t.seed = seed;
    if config.schedule == BetaSchedule::InverseSqrt {
        let root = (n as f64).sqrt();
        t.beta = 1.0 / root;
        t.eta = config.train.eta / root;
        t.learning_rate = config.train.learning_rate * n as f64;
    }
    t
}

/// Suboptimality gap against sample size on the default scaling world.
pub fn scaling_experiment(config: &ScalingConfig) -> Result<ScalingResult, ToyError> {
    scaling_experiment_on(&scaling_world(), config)
}

pub fn scaling_experiment_on(world: &ToyWorld, config: &ScalingConfig) -> Result<ScalingResult, ToyError> {
    let mut distinct = config.sizes.clone();
    distinct.dedup();
    if distinct.len() < 3 {
        return Err(ToyError::TooFewSizes { found: distinct.len() });
    }
    if config.sizes.windows(2).any(|w| w[0] >= w[1]) || config.sizes[0] == 0 {
        return Err(ToyError::InvalidConfig(
            "sizes must be positive and strictly increasing".into(),
        ));
    }
    if config.seeds.is_empty() {
        return Err(ToyError::InvalidConfig("at least one seed is required".into()));
    }
    if let Some(b) = config.baseline_beta {
        if !(b > 0.0 && b.is_finite()) {
            return Err(ToyError::InvalidConfig("baseline beta must be positive".into()));
        }
    }
    config.train.validate()?;

    let optimal = match config.baseline_beta {
        None => greedy_policy(world),
        Some(b) => closed_form_policy(&world.goal_reward_table(), world.ref_policy(), b),
    };

    let jobs: Vec<(usize, u64)> = config
        .sizes
        .iter()
        .flat_map(|&n| config.seeds.iter().map(move |&s| (n, s)))
        .collect();
    let runs: Vec<Result<ScalingRun, ToyError>> = jobs
        .into_par_iter()
        .map(|(n, seed)| {
            let t = run_config(config, n, seed);
            let data = bt_sample_preferences(world, n, run_seed(seed, n), GoalMode::PerResponse)?;
            let learned = train(world, &data, &t)?;
            Ok(ScalingRun {
                n,
                seed,
                beta: t.beta,
                gap: gap(&learned, &optimal, world),
            })
        })
        .collect();
    let runs: Vec<ScalingRun> = runs.into_iter().collect::<Result<_, _>>()?;

    let k = config.seeds.len();
    let points: Vec<ScalingPoint> = runs
        .chunks(k)
        .map(|chunk| {
            let mean = chunk.iter().map(|r| r.gap).sum::<f64>() / k as f64;
            let var = if k > 1 {
                chunk.iter().map(|r| (r.gap - mean).powi(2)).sum::<f64>() / (k - 1) as f64
            } else {
                0.0
            };
            ScalingPoint {
                n: chunk[0].n,
                mean_gap: mean,
                std_gap: var.sqrt(),
            }
        })
        .collect();

    let mut report = Report::new("scaling", vec!["mean_gap".into(), "std_gap".into()]);
    for p in &points {
        report.row(format!("N={}", p.n), vec![p.mean_gap, p.std_gap]);
    }

    let positive = points.iter().all(|p| p.mean_gap > 0.0);
    let slope = if positive {
        let xs: Vec<f64> = points.iter().map(|p| p.n as f64).collect();
        let ys: Vec<f64> = points.iter().map(|p| p.mean_gap).collect();
        log_log_slope(&xs, &ys)
    } else {
        f64::NAN
    };
    report.metric("slope", slope);

    let mut worst: Option<(usize, f64)> = None;
    for w in points.windows(2) {
        let pooled = ((w[0].std_gap.powi(2) + w[1].std_gap.powi(2)) / 2.0).sqrt();
        let excess = w[1].mean_gap - w[0].mean_gap - pooled;
        if excess > 0.0 && worst.is_none_or(|(_, e)| excess > e) {
            worst = Some((w[1].n, excess));
        }
    }
    report.check(
        "positive_gaps",
        positive,
        if positive {
            "every mean gap is positive".to_string()
        } else {
            "a mean gap is zero or negative; slope undefined".to_string()
        },
    );
    report.check("slope_at_most_-0.3", slope <= -0.3, format!("fitted slope {slope:.4}"));
    report.check(
        "gap_non_increasing_within_pooled_std",
        worst.is_none(),
        match worst {
            None => "every step within one pooled std".to_string(),
            Some((n, e)) => format!("rise at N={n} exceeds pooled std by {e:e}"),
        },
    );

    Ok(ScalingResult {
        runs,
        points,
        slope,
        report,
    })
}
