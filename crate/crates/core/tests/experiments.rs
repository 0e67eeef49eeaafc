use rapref_core::toylab::experiments::{
    oracle_experiment, scaling_experiment, table2_experiment, unlearning_experiment, BetaSchedule, OracleConfig,
    ScalingConfig, Table2Config,
};
use rapref_core::toylab::{ToyError, TrainConfig};

#[test]
fn table2_indeterminacy_and_goal_recovery() {
    let report = table2_experiment(&Table2Config::default()).unwrap();
    assert!(report.passed(), "{}", report.to_text());
    assert_eq!(report.rows.len(), 8);
}

#[test]
fn unlearning_direction() {
    let report = unlearning_experiment(&TrainConfig::default(), 5.0).unwrap();
    assert!(report.passed(), "{}", report.to_text());
    assert!(matches!(
        unlearning_experiment(&TrainConfig::default(), 10.5),
        Err(ToyError::EmptySelection { .. })
    ));
}

#[test]
fn oracle_recovery() {
    let report = oracle_experiment(&OracleConfig::default()).unwrap();
    assert_eq!(report.rows.len(), 6);
    assert!(report.passed(), "{}", report.to_text());
}

#[test]
fn scaling_is_deterministic_and_csv_shaped() {
    let config = ScalingConfig {
        sizes: vec![64, 128, 256],
        seeds: vec![0, 1],
        ..Default::default()
    };
    let a = scaling_experiment(&config).unwrap();
    let b = scaling_experiment(&config).unwrap();
    assert_eq!(a, b);
    let csv = a.to_csv();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "N,seed,gap");
    assert_eq!(lines.len(), 7);
    assert!(lines[1].starts_with("64,0,"));
    assert!(a.runs.iter().all(|r| r.gap >= 0.0));
    assert!((a.runs[0].beta - 0.125).abs() < 1e-15);
}

#[test]
fn fixed_schedule_uses_config_beta() {
    let config = ScalingConfig {
        sizes: vec![32, 64, 128],
        seeds: vec![3],
        schedule: BetaSchedule::Fixed,
        baseline_beta: Some(1.0),
        ..Default::default()
    };
    let r = scaling_experiment(&config).unwrap();
    assert!(r.runs.iter().all(|run| run.beta == 1.0));
}

#[test]
fn scaling_rejects_bad_sizes() {
    let mut config = ScalingConfig {
        sizes: vec![64, 64, 128],
        ..Default::default()
    };
    assert!(matches!(
        scaling_experiment(&config),
        Err(ToyError::TooFewSizes { found: 2 })
    ));
    config.sizes = vec![128, 64, 256];
    assert!(matches!(scaling_experiment(&config), Err(ToyError::InvalidConfig(_))));
}
