use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::json;

use rapref_core::augment::{
    augment_corpus, filter_by_rejected_reward, to_jsonl as augmented_jsonl, AugmentMode, AugmentOptions, GoalKind,
    Placement, PromptTemplate, RejectedFilter, DEFAULT_TEMPLATE,
};
use rapref_core::corpus::{self, parse_corpus, rescale, Corpus, OrderPolicy, RewardScale};
use rapref_core::implicit::{build_ira_corpus, parse_logprobs, ClipPercentiles};
use rapref_core::toylab::experiments::{
    oracle_experiment_on, scaling_experiment_on, table1_experiment, table2_experiment, unlearning_experiment,
    BetaSchedule, OracleConfig, Report, ScalingConfig, Table2Config,
};
use rapref_core::toylab::world::{oracle_world, scaling_world};
use rapref_core::toylab::{ToyWorld, TrainConfig, WorldSpec};

use crate::cli::{
    AugmentArgs, CorpusArgs, Experiment, FilterArg, GoalsArg, IraArgs, ModeArg, PlacementArg, RescaleArgs, ScheduleArg,
    StatsArgs, ToyArgs, ValidateArgs,
};
use crate::error::CliError;
use crate::manifest::{manifest_path, read, write_atomic, RunManifest};

/// Environment variable naming a directory whose `training.txt` is the
/// default augmentation template.
pub const TEMPLATE_DIR_ENV: &str = "RAPREF_TEMPLATE_DIR";

/// Files that shaped an invocation besides its own flags.
#[derive(Debug, Default)]
pub struct Context {
    pub config: Option<(PathBuf, Vec<u8>)>,
}

impl Context {
    fn manifest(&self, subcommand: &str, seed: u64, flags: &impl Serialize) -> RunManifest {
        let mut m = RunManifest::new(subcommand, seed, flags);
        if let Some((path, bytes)) = &self.config {
            m.input(path, bytes);
        }
        m
    }
}

fn pretty(value: &impl Serialize) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report serializes");
    s.push('\n');
    s
}

fn utf8(path: &Path, bytes: Vec<u8>) -> Result<String, CliError> {
    String::from_utf8(bytes).map_err(|_| CliError::Invalid(format!("{}: not valid UTF-8", path.display())))
}

fn scale_of(args: &CorpusArgs) -> Result<RewardScale, CliError> {
    Ok(RewardScale::new(args.scale_min, args.scale_max)?)
}

fn policy_of(args: &CorpusArgs) -> OrderPolicy {
    if args.lenient {
        OrderPolicy::Lenient
    } else {
        OrderPolicy::Strict
    }
}

/// Read and parse the input corpus, recording it in the manifest.
fn load(args: &CorpusArgs, order: OrderPolicy, manifest: &mut RunManifest) -> Result<(Corpus, RewardScale), CliError> {
    let scale = scale_of(args)?;
    let bytes = read(&args.input)?;
    manifest.input(&args.input, &bytes);
    let text = utf8(&args.input, bytes)?;
    Ok((parse_corpus(&text, scale, order)?, scale))
}

/// Write `bytes` to `output` and its manifest next to it.
fn emit(output: &Path, bytes: &[u8], mut manifest: RunManifest) -> Result<(), CliError> {
    manifest.output(output);
    write_atomic(output, bytes)?;
    write_atomic(&manifest_path(output), manifest.to_json().as_bytes())
}

pub fn validate(args: &ValidateArgs, ctx: &Context) -> Result<(), CliError> {
    let mut manifest = ctx.manifest("validate", args.corpus.seed, args);
    let order = if args.corpus.lenient {
        OrderPolicy::Lenient
    } else {
        OrderPolicy::Report
    };
    let (loaded, scale) = load(&args.corpus, order, &mut manifest)?;
    let report = corpus::validate(&loaded.records, &scale);
    let lines: Vec<usize> = report
        .order_violation_indices
        .iter()
        .map(|&i| loaded.lines[i])
        .collect();
    let ok = report.is_clean();
    let out = json!({
        "mode": if args.corpus.lenient { "lenient" } else { "strict" },
        "ok": ok,
        "record_count": report.record_count,
        "ties": report.ties,
        "order_violations": report.order_violations,
        "order_violation_lines": lines,
        "out_of_range": report.out_of_range,
        "duplicates": report.duplicates,
        "swapped": loaded.swapped,
    });
    let text = pretty(&out);
    print!("{text}");
    if let Some(path) = &args.output {
        emit(path, text.as_bytes(), manifest)?;
    }
    if ok {
        Ok(())
    } else {
        let where_ = lines.iter().map(|l| l.to_string()).collect::<Vec<_>>().join(", ");
        Err(CliError::Invalid(format!(
            "{} order violation(s) on line(s) {where_}",
            report.order_violations
        )))
    }
}

pub fn stats(args: &StatsArgs, ctx: &Context) -> Result<(), CliError> {
    let mut manifest = ctx.manifest("stats", args.corpus.seed, args);
    let (loaded, scale) = load(&args.corpus, policy_of(&args.corpus), &mut manifest)?;
    let text = pretty(&corpus::stats(&loaded.records, &scale));
    print!("{text}");
    if let Some(path) = &args.output {
        emit(path, text.as_bytes(), manifest)?;
    }
    Ok(())
}

pub fn rescale_cmd(args: &RescaleArgs, ctx: &Context) -> Result<(), CliError> {
    let mut manifest = ctx.manifest("rescale", args.corpus.seed, args);
    let to = RewardScale::new(args.to_min, args.to_max)?;
    let (loaded, from) = load(&args.corpus, policy_of(&args.corpus), &mut manifest)?;
    let out = rescale(&loaded.records, &from, &to);
    emit(&args.output, corpus::to_jsonl(&out).as_bytes(), manifest)?;
    println!(
        "{}",
        json!({"records": out.len(), "swapped": loaded.swapped, "output": args.output.display().to_string()})
    );
    Ok(())
}

/// The template file to use, if any: the flag, else the environment default.
fn template_source(flag: Option<&Path>) -> Option<PathBuf> {
    if let Some(p) = flag {
        return Some(p.to_path_buf());
    }
    std::env::var_os(TEMPLATE_DIR_ENV)
        .filter(|d| !d.is_empty())
        .map(|d| PathBuf::from(d).join("training.txt"))
}

pub fn augment(args: &AugmentArgs, ctx: &Context) -> Result<(), CliError> {
    let mut resolved = args.clone();
    resolved.template = template_source(args.template.as_deref());
    let mut manifest = ctx.manifest("augment", args.corpus.seed, &resolved);

    let training = match &resolved.template {
        Some(path) => {
            let bytes = read(path)?;
            manifest.input(path, &bytes);
            utf8(path, bytes)?.trim_end_matches(['\n', '\r']).to_string()
        }
        None => DEFAULT_TEMPLATE.to_string(),
    };
    let (loaded, scale) = load(&args.corpus, policy_of(&args.corpus), &mut manifest)?;
    let placement = match args.placement {
        PlacementArg::System => Placement::System,
        PlacementArg::Prefix => Placement::Prefix,
    };
    let template = PromptTemplate::new(training, placement, scale.optimal_goal())?;
    let options = AugmentOptions {
        mode: match args.mode {
            ModeArg::Full => AugmentMode::Full,
            ModeArg::ChosenOnly => AugmentMode::ChosenOnly,
            ModeArg::Half => AugmentMode::Half,
        },
        goals: match args.goals {
            GoalsArg::Scalar => GoalKind::Scalar,
            GoalsArg::Attributes => GoalKind::Attributes,
        },
        keep_ties: args.keep_ties,
    };
    let out = augment_corpus(&loaded.records, &template, options)?;
    let produced = out.records.len();
    let records = match (args.filter, args.filter_threshold) {
        (Some(f), Some(t)) => {
            let mode = match f {
                FilterArg::DropHigh => RejectedFilter::DropHigh,
                FilterArg::DropLow => RejectedFilter::DropLow,
            };
            filter_by_rejected_reward(out.records, mode, t)
        }
        _ => out.records,
    };
    emit(&args.output, augmented_jsonl(&records).as_bytes(), manifest)?;
    println!(
        "{}",
        json!({
            "inputs": out.inputs,
            "outputs": records.len(),
            "ties_dropped": out.ties_dropped,
            "ties_kept": out.ties_kept,
            "filtered": produced - records.len(),
            "swapped": loaded.swapped,
        })
    );
    Ok(())
}

pub fn ira(args: &IraArgs, ctx: &Context) -> Result<(), CliError> {
    let mut manifest = ctx.manifest("ira", args.corpus.seed, args);
    let target = RewardScale::new(args.target_min, args.target_max)?;
    let clip = ClipPercentiles::new(args.clip_low, args.clip_high)?;
    let (loaded, _) = load(&args.corpus, policy_of(&args.corpus), &mut manifest)?;
    let bytes = read(&args.logprobs)?;
    manifest.input(&args.logprobs, &bytes);
    let logprobs = parse_logprobs(&utf8(&args.logprobs, bytes)?)?;
    let out = build_ira_corpus(&loaded.records, &logprobs, args.beta, &target, clip)?;
    emit(&args.output, corpus::to_jsonl(&out.records).as_bytes(), manifest)?;
    println!(
        "{}",
        json!({
            "records": out.records.len(),
            "flips": out.flips,
            "clipped": out.clipped,
            "clip_bounds": [out.clip_bounds.0, out.clip_bounds.1],
        })
    );
    Ok(())
}

#[derive(Serialize)]
struct ToyOutput<'a, C: Serialize, E: Serialize> {
    config: &'a C,
    #[serde(flatten)]
    report: &'a Report,
    #[serde(flatten)]
    extra: Option<E>,
}

fn toy_train(args: &ToyArgs, beta: f64, eta: f64, lr: f64, steps: usize) -> TrainConfig {
    TrainConfig {
        beta: args.beta.unwrap_or(beta),
        eta: args.eta.unwrap_or(eta),
        label_smoothing: args.label_smoothing,
        learning_rate: args.learning_rate.unwrap_or(lr),
        steps: args.steps.unwrap_or(steps),
        seed: args.seed,
    }
}

fn load_world(args: &ToyArgs, manifest: &mut RunManifest, default: fn() -> ToyWorld) -> Result<ToyWorld, CliError> {
    let Some(path) = &args.world else {
        return Ok(default());
    };
    let bytes = read(path)?;
    manifest.input(path, &bytes);
    let spec: WorldSpec =
        serde_json::from_slice(&bytes).map_err(|e| CliError::Invalid(format!("{}: {e}", path.display())))?;
    Ok(ToyWorld::new(spec)?)
}

pub fn toy(args: &ToyArgs, ctx: &Context) -> Result<(), CliError> {
    let mut manifest = ctx.manifest("toy", args.seed, args);
    if args.world.is_some() && !matches!(args.experiment, Experiment::Oracle | Experiment::Scaling) {
        return Err(CliError::Usage("--world applies only to oracle and scaling".into()));
    }
    let dir = &args.output_dir;
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;

    let mut files: Vec<(PathBuf, String)> = Vec::new();
    let report = match args.experiment {
        Experiment::Table1 => {
            let config = toy_train(args, 0.1, 0.0, 0.5, 2000);
            let report = table1_experiment(&config)?;
            files.push((
                "report.json".into(),
                pretty(&ToyOutput::<_, ()> {
                    config: &config,
                    report: &report,
                    extra: None,
                }),
            ));
            report
        }
        Experiment::Table2 => {
            let config = Table2Config {
                train: toy_train(args, 0.1, 0.0, 0.5, 2000),
                inits: args.inits,
                init_sigma: args.init_sigma,
            };
            let report = table2_experiment(&config)?;
            files.push((
                "report.json".into(),
                pretty(&ToyOutput::<_, ()> {
                    config: &config,
                    report: &report,
                    extra: None,
                }),
            ));
            report
        }
        Experiment::Unlearning => {
            let config = toy_train(args, 0.1, 0.0, 0.5, 2000);
            let report = unlearning_experiment(&config, args.threshold)?;
            files.push((
                "report.json".into(),
                pretty(&ToyOutput::<_, ()> {
                    config: &config,
                    report: &report,
                    extra: None,
                }),
            ));
            report
        }
        Experiment::Oracle => {
            let world = load_world(args, &mut manifest, oracle_world)?;
            let config = OracleConfig {
                train: toy_train(args, 1.0, 0.0, 10.0, 4000),
                samples: args.samples,
                tolerance: args.tolerance,
            };
            let report = oracle_experiment_on(&world, &config)?;
            files.push((
                "report.json".into(),
                pretty(&ToyOutput::<_, ()> {
                    config: &config,
                    report: &report,
                    extra: None,
                }),
            ));
            report
        }
        Experiment::Scaling => {
            let world = load_world(args, &mut manifest, scaling_world)?;
            let defaults = ScalingConfig::default();
            let t = defaults.train;
            let config = ScalingConfig {
                sizes: args.sizes.clone(),
                seeds: (0..args.seeds).map(|i| args.seed.wrapping_add(i)).collect(),
                train: toy_train(args, t.beta, t.eta, t.learning_rate, t.steps),
                schedule: match args.schedule {
                    ScheduleArg::InverseSqrt => BetaSchedule::InverseSqrt,
                    ScheduleArg::Fixed => BetaSchedule::Fixed,
                },
                baseline_beta: args.baseline_beta,
            };
            let result = scaling_experiment_on(&world, &config)?;
            let extra = json!({"slope": result.slope, "points": result.points, "runs": result.runs});
            files.push((
                "report.json".into(),
                pretty(&ToyOutput {
                    config: &config,
                    report: &result.report,
                    extra: Some(extra),
                }),
            ));
            files.push(("scaling.csv".into(), result.to_csv()));
            result.report
        }
    };
    let text = report.to_text();
    files.push(("report.txt".into(), text.clone()));

    for (name, body) in &files {
        let path = dir.join(name);
        write_atomic(&path, body.as_bytes())?;
        manifest.output(&path);
    }
    write_atomic(&dir.join("manifest.json"), manifest.to_json().as_bytes())?;
    print!("{text}");

    if report.passed() {
        Ok(())
    } else {
        let failed: Vec<&str> = report.failed_checks().map(|c| c.name.as_str()).collect();
        Err(CliError::Failed(format!("failed checks: {}", failed.join(", "))))
    }
}
