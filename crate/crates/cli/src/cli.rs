use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

#[derive(Debug, Parser)]
#[command(
    name = "rapref",
    version,
    about = "Reward-augmented preference data tools and a tabular DPO lab"
)]
pub struct Cli {
    /// Config file of `key = value` lines; flags given on the command line win.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Worker threads for data-parallel loops [default: all cores]. Outputs do not depend on it.
    #[arg(long, global = true, value_name = "N")]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check a scored corpus and print a JSON report.
    #[command(args_override_self = true)]
    Validate(ValidateArgs),
    /// Print score and gap histograms as JSON.
    #[command(args_override_self = true)]
    Stats(StatsArgs),
    /// Map every score affinely onto another scale.
    #[command(args_override_self = true)]
    Rescale(RescaleArgs),
    /// Build a goal-conditioned corpus by reward augmentation.
    #[command(args_override_self = true)]
    Augment(AugmentArgs),
    /// Rescore pairs with DPO implicit rewards.
    #[command(args_override_self = true)]
    Ira(IraArgs),
    /// Run a tabular experiment and write its reports.
    #[command(args_override_self = true)]
    Toy(ToyArgs),
}

fn positive_f64(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(format!("must be a positive number, got {s}"))
    }
}

fn finite_f64(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(format!("must be finite, got {s}"))
    }
}

/// Input corpus and its score scale.
#[derive(Debug, Clone, Args, Serialize)]
pub struct CorpusArgs {
    /// Scored preference corpus (JSONL).
    #[arg(long, value_name = "FILE")]
    pub input: PathBuf,

    /// Lowest valid score.
    #[arg(long, default_value_t = 1.0, value_parser = finite_f64)]
    pub scale_min: f64,

    /// Highest valid score; also the goal used at inference.
    #[arg(long, default_value_t = 10.0, value_parser = finite_f64)]
    pub scale_max: f64,

    /// Reject records whose chosen score is below the rejected score [default].
    #[arg(long, overrides_with = "lenient")]
    #[serde(skip)]
    pub strict: bool,

    /// Swap such records instead and count the swaps.
    #[arg(long, overrides_with = "strict")]
    pub lenient: bool,

    /// Seed recorded in the manifest; this subcommand draws no random numbers.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ValidateArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub corpus: CorpusArgs,

    /// Also write the report to this file (with a manifest).
    #[arg(long, value_name = "FILE")]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct StatsArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub corpus: CorpusArgs,

    /// Also write the statistics to this file (with a manifest).
    #[arg(long, value_name = "FILE")]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct RescaleArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub corpus: CorpusArgs,

    /// Rescaled corpus (JSONL).
    #[arg(long, value_name = "FILE")]
    pub output: PathBuf,

    /// Lowest score of the target scale.
    #[arg(long, value_parser = finite_f64)]
    pub to_min: f64,

    /// Highest score of the target scale.
    #[arg(long, value_parser = finite_f64)]
    pub to_max: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModeArg {
    /// Two records per pair, one per response's score.
    Full,
    /// Only the chosen-score record of each pair.
    ChosenOnly,
    /// Full augmentation of the first half of the corpus.
    Half,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum GoalsArg {
    /// The scalar judge scores.
    Scalar,
    /// The per-response attribute vectors.
    Attributes,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum FilterArg {
    /// Drop rejected-goal records with goal >= threshold.
    DropHigh,
    /// Drop rejected-goal records with goal < threshold.
    DropLow,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum PlacementArg {
    /// Separate `system` field.
    System,
    /// Prepended to the prompt.
    Prefix,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct AugmentArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub corpus: CorpusArgs,

    /// Augmented corpus (JSONL).
    #[arg(long, value_name = "FILE")]
    pub output: PathBuf,

    #[arg(long, value_enum, default_value_t = ModeArg::Full)]
    pub mode: ModeArg,

    /// What goals are built from.
    #[arg(long, value_enum, default_value_t = GoalsArg::Scalar)]
    pub goals: GoalsArg,

    /// Emit tied pairs as a single chosen-goal record with zero rewards instead of dropping them.
    #[arg(long)]
    pub keep_ties: bool,

    /// Filter rejected-goal records by goal value [default: no filter].
    #[arg(long, value_enum, requires = "filter_threshold")]
    pub filter: Option<FilterArg>,

    /// Threshold for --filter.
    #[arg(long, value_parser = finite_f64, requires = "filter")]
    pub filter_threshold: Option<f64>,

    /// Training template with one `{g}` placeholder [default: $RAPREF_TEMPLATE_DIR/training.txt, else built in].
    #[arg(long, value_name = "FILE")]
    pub template: Option<PathBuf>,

    /// Where the goal instruction goes.
    #[arg(long, value_enum, default_value_t = PlacementArg::System)]
    pub placement: PlacementArg,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct IraArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub corpus: CorpusArgs,

    /// Log-probabilities (JSONL with id, side, logp_policy, logp_ref).
    #[arg(long, value_name = "FILE")]
    pub logprobs: PathBuf,

    /// Rescored corpus (JSONL).
    #[arg(long, value_name = "FILE")]
    pub output: PathBuf,

    /// DPO β of the implicit reward.
    #[arg(long, default_value_t = rapref_core::implicit::DEFAULT_BETA, value_parser = positive_f64)]
    pub beta: f64,

    /// Lower clip percentile.
    #[arg(long, default_value_t = 1.0, value_parser = finite_f64)]
    pub clip_low: f64,

    /// Upper clip percentile.
    #[arg(long, default_value_t = 99.0, value_parser = finite_f64)]
    pub clip_high: f64,

    /// Lowest score of the output scale.
    #[arg(long, default_value_t = 1.0, value_parser = finite_f64)]
    pub target_min: f64,

    /// Highest score of the output scale.
    #[arg(long, default_value_t = 10.0, value_parser = finite_f64)]
    pub target_max: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    /// One prompt, y1 ≻ y2 with rewards 9 and 8.
    Table1,
    /// Rewards 9, 1, 0 with y1 ≻ y3 and y2 ≻ y3; plain runs from random inits.
    Table2,
    /// Suboptimality gap against sample size.
    Scaling,
    /// Log-probability of a high-reward rejected response.
    Unlearning,
    /// Distance from the closed-form optimum after training on sampled data.
    Oracle,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScheduleArg {
    /// β = 1/√N, η = η₀/√N, learning rate lr₀·N.
    InverseSqrt,
    /// β, η and learning rate as given.
    Fixed,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ToyArgs {
    #[arg(value_enum)]
    pub experiment: Experiment,

    /// Directory for report.json, report.txt, scaling.csv and manifest.json.
    #[arg(long, value_name = "DIR")]
    pub output_dir: PathBuf,

    /// Seed for sampling and random initializations.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    /// DPO β [default: 0.1; oracle 1.0; scaling: base for the fixed schedule, 1.0].
    #[arg(long, value_parser = positive_f64)]
    pub beta: Option<f64>,

    /// SFT regularizer weight η [default: 0; scaling 1.0, divided by √N under the inverse-sqrt schedule].
    #[arg(long)]
    pub eta: Option<f64>,

    /// Label smoothing ε in [0, 0.5); 0 is plain DPO, 0.3 is a common choice.
    #[arg(long, default_value_t = 0.0)]
    pub label_smoothing: f64,

    /// Learning rate [default: 0.5; oracle 10; scaling 2, multiplied by N under the inverse-sqrt schedule].
    #[arg(long, value_parser = positive_f64)]
    pub learning_rate: Option<f64>,

    /// Gradient steps [default: 2000; oracle 4000].
    #[arg(long)]
    pub steps: Option<usize>,

    /// World JSON for oracle and scaling [default: built-in world].
    #[arg(long, value_name = "FILE")]
    pub world: Option<PathBuf>,

    /// table2: number of random initializations.
    #[arg(long, default_value_t = 5)]
    pub inits: usize,

    /// table2: standard deviation of the initial logits.
    #[arg(long, default_value_t = 1.0, value_parser = positive_f64)]
    pub init_sigma: f64,

    /// unlearning: minimum true reward of a selected rejected response.
    #[arg(long, default_value_t = 5.0, value_parser = finite_f64)]
    pub threshold: f64,

    /// oracle: number of sampled pairs.
    #[arg(long, default_value_t = 8192)]
    pub samples: usize,

    /// oracle: largest allowed per-context total-variation distance.
    #[arg(long, default_value_t = 0.1, value_parser = positive_f64)]
    pub tolerance: f64,

    /// scaling: comma-separated sample sizes.
    #[arg(long, value_delimiter = ',', default_value = "64,128,256,512,1024,2048,4096")]
    pub sizes: Vec<usize>,

    /// scaling: number of seeds, starting at --seed.
    #[arg(long, default_value_t = 5)]
    pub seeds: u64,

    /// scaling: how β, η and the learning rate depend on N.
    #[arg(long, value_enum, default_value_t = ScheduleArg::InverseSqrt)]
    pub schedule: ScheduleArg,

    /// scaling: β of the closed-form baseline [default: greedy optimum].
    #[arg(long, value_parser = positive_f64)]
    pub baseline_beta: Option<f64>,
}
