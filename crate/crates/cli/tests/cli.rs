use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

const BIN: &str = env!("CARGO_BIN_EXE_rapref");

fn rapref(dir: &Path, args: &[&str]) -> Output {
    Command::new(BIN)
        .args(args)
        .current_dir(dir)
        .env_remove("RAPREF_TEMPLATE_DIR")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn record(id: &str, cs: f64, rs: f64) -> String {
    format!(
        r#"{{"id":"{id}","prompt":"prompt {id}","chosen":"good {id}","rejected":"bad {id}","score_chosen":{cs},"score_rejected":{rs}}}"#
    )
}

fn write(dir: &Path, name: &str, lines: &[String]) {
    let mut body = lines.join("\n");
    body.push('\n');
    std::fs::write(dir.join(name), body).unwrap();
}

fn lines(dir: &Path, name: &str) -> Vec<Value> {
    std::fs::read_to_string(dir.join(name))
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

fn clean_corpus(dir: &Path, n: usize) {
    let recs: Vec<String> = (0..n)
        .map(|i| record(&format!("r{i}"), 6.0 + (i % 5) as f64, 1.0 + (i % 5) as f64))
        .collect();
    write(dir, "in.jsonl", &recs);
}

#[test]
fn validate_valid_corpus_exits_zero() {
    let t = TempDir::new().unwrap();
    clean_corpus(t.path(), 4);
    let o = rapref(t.path(), &["validate", "--input", "in.jsonl"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let report: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(report["ok"], true);
    assert_eq!(report["record_count"], 4);
}

#[test]
fn order_violation_strict_fails_lenient_swaps() {
    let t = TempDir::new().unwrap();
    write(t.path(), "in.jsonl", &[record("a", 9.0, 2.0), record("b", 3.0, 7.0)]);

    let o = rapref(t.path(), &["validate", "--input", "in.jsonl"]);
    assert_eq!(code(&o), 1);
    let report: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(report["order_violation_lines"], serde_json::json!([2]));
    assert!(stderr(&o).contains("line(s) 2"), "{}", stderr(&o));

    let o = rapref(t.path(), &["validate", "--input", "in.jsonl", "--lenient"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let report: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(report["swapped"], 1);

    // The last of --strict/--lenient wins.
    let o = rapref(t.path(), &["validate", "--input", "in.jsonl", "--lenient", "--strict"]);
    assert_eq!(code(&o), 1);
}

#[test]
fn missing_input_is_an_io_error() {
    let t = TempDir::new().unwrap();
    let o = rapref(t.path(), &["validate", "--input", "nope.jsonl"]);
    assert_eq!(code(&o), 3);
    assert!(stderr(&o).contains("nope.jsonl"));
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let t = TempDir::new().unwrap();
    assert_eq!(code(&rapref(t.path(), &["validate", "--bogus"])), 2);
    assert_eq!(code(&rapref(t.path(), &["frobnicate"])), 2);
}

#[test]
fn augment_mode_counts() {
    let t = TempDir::new().unwrap();
    clean_corpus(t.path(), 10);
    for (mode, expected) in [("full", 20), ("chosen-only", 10), ("half", 10)] {
        let o = rapref(
            t.path(),
            &[
                "augment",
                "--input",
                "in.jsonl",
                "--output",
                "out.jsonl",
                "--mode",
                mode,
            ],
        );
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        assert_eq!(lines(t.path(), "out.jsonl").len(), expected, "{mode}");
        let summary: Value = serde_json::from_str(&stdout(&o)).unwrap();
        assert_eq!(summary["inputs"], 10);
        assert_eq!(summary["outputs"], expected);
    }
    let manifest: Value =
        serde_json::from_str(&std::fs::read_to_string(t.path().join("out.jsonl.manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["subcommand"], "augment");
    assert_eq!(manifest["flags"]["mode"], "half");
    assert_eq!(manifest["inputs"][0]["sha256"].as_str().unwrap().len(), 64);
}

#[test]
fn augment_ties_and_filter() {
    let t = TempDir::new().unwrap();
    write(
        t.path(),
        "in.jsonl",
        &[record("a", 9.0, 8.0), record("b", 5.0, 5.0), record("c", 9.0, 2.0)],
    );
    let o = rapref(t.path(), &["augment", "--input", "in.jsonl", "--output", "out.jsonl"]);
    let summary: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(summary["ties_dropped"], 1);
    assert_eq!(summary["outputs"], 4);

    let o = rapref(
        t.path(),
        &[
            "augment",
            "--input",
            "in.jsonl",
            "--output",
            "out.jsonl",
            "--keep-ties",
            "--filter",
            "drop-high",
            "--filter-threshold",
            "5",
        ],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let summary: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(summary["ties_kept"], 1);
    assert_eq!(summary["filtered"], 1);
    assert_eq!(summary["outputs"], 4);

    // --filter without a threshold is rejected by the parser.
    let o = rapref(
        t.path(),
        &[
            "augment",
            "--input",
            "in.jsonl",
            "--output",
            "out.jsonl",
            "--filter",
            "drop-low",
        ],
    );
    assert_eq!(code(&o), 2);
}

#[test]
fn augment_reverses_rejected_goal_records() {
    let t = TempDir::new().unwrap();
    write(t.path(), "in.jsonl", &[record("a", 9.0, 6.0)]);
    let o = rapref(t.path(), &["augment", "--input", "in.jsonl", "--output", "out.jsonl"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let out = lines(t.path(), "out.jsonl");
    assert_eq!(out[0]["goal_source"], "chosen");
    assert_eq!(out[0]["chosen"], "good a");
    assert_eq!(out[1]["goal_source"], "rejected");
    assert_eq!(out[1]["chosen"], "bad a");
    assert_eq!(out[1]["reward_rejected"].as_f64().unwrap(), -9.0);
}

#[test]
fn template_from_env_dir_and_flag() {
    let t = TempDir::new().unwrap();
    clean_corpus(t.path(), 1);
    let tdir = t.path().join("templates");
    std::fs::create_dir(&tdir).unwrap();
    std::fs::write(tdir.join("training.txt"), "Aim for {g}.").unwrap();

    let o = Command::new(BIN)
        .args(["augment", "--input", "in.jsonl", "--output", "out.jsonl"])
        .current_dir(t.path())
        .env("RAPREF_TEMPLATE_DIR", &tdir)
        .output()
        .unwrap();
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let out = lines(t.path(), "out.jsonl");
    assert_eq!(out[0]["system"], "Aim for 6.");

    std::fs::write(t.path().join("mine.txt"), "Target {g}!").unwrap();
    let o = Command::new(BIN)
        .args([
            "augment",
            "--input",
            "in.jsonl",
            "--output",
            "out.jsonl",
            "--template",
            "mine.txt",
        ])
        .current_dir(t.path())
        .env("RAPREF_TEMPLATE_DIR", &tdir)
        .output()
        .unwrap();
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(lines(t.path(), "out.jsonl")[0]["system"], "Target 6!");

    std::fs::write(t.path().join("bad.txt"), "no placeholder").unwrap();
    let o = rapref(
        t.path(),
        &[
            "augment",
            "--input",
            "in.jsonl",
            "--output",
            "out.jsonl",
            "--template",
            "bad.txt",
        ],
    );
    assert_eq!(code(&o), 2);
}

#[test]
fn config_file_is_overridden_by_flags() {
    let t = TempDir::new().unwrap();
    clean_corpus(t.path(), 6);
    std::fs::write(
        t.path().join("run.conf"),
        "# defaults\nmode = chosen-only\nkeep_ties = true\n",
    )
    .unwrap();

    let o = rapref(
        t.path(),
        &[
            "--config",
            "run.conf",
            "augment",
            "--input",
            "in.jsonl",
            "--output",
            "out.jsonl",
        ],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(lines(t.path(), "out.jsonl").len(), 6);

    let o = rapref(
        t.path(),
        &[
            "augment",
            "--config",
            "run.conf",
            "--input",
            "in.jsonl",
            "--output",
            "out.jsonl",
            "--mode",
            "full",
        ],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(lines(t.path(), "out.jsonl").len(), 12);
    let manifest: Value =
        serde_json::from_str(&std::fs::read_to_string(t.path().join("out.jsonl.manifest.json")).unwrap()).unwrap();
    let inputs: Vec<&str> = manifest["inputs"]
        .as_array()
        .unwrap()
        .iter()
        .map(|i| i["path"].as_str().unwrap())
        .collect();
    assert!(inputs.contains(&"run.conf"), "{inputs:?}");

    let o = rapref(
        t.path(),
        &[
            "--config",
            "missing.conf",
            "augment",
            "--input",
            "in.jsonl",
            "--output",
            "o.jsonl",
        ],
    );
    assert_eq!(code(&o), 3);
}

fn logprob(id: &str, side: &str, policy: f64, reference: f64) -> String {
    format!(r#"{{"id":"{id}","side":"{side}","logp_policy":{policy},"logp_ref":{reference}}}"#)
}

#[test]
fn ira_reports_flips_and_missing_sides() {
    let t = TempDir::new().unwrap();
    write(
        t.path(),
        "in.jsonl",
        &[record("a", 9.0, 2.0), record("b", 8.0, 3.0), record("c", 7.0, 4.0)],
    );
    write(
        t.path(),
        "lp.jsonl",
        &[
            logprob("a", "chosen", -10.0, -12.0),
            logprob("a", "rejected", -15.0, -11.0),
            logprob("b", "chosen", -20.0, -10.0),
            logprob("b", "rejected", -9.0, -10.0),
            logprob("c", "chosen", -5.0, -6.0),
            logprob("c", "rejected", -7.0, -7.0),
        ],
    );
    let o = rapref(
        t.path(),
        &[
            "ira",
            "--input",
            "in.jsonl",
            "--logprobs",
            "lp.jsonl",
            "--output",
            "ira.jsonl",
        ],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let summary: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(summary["flips"], 1);
    assert_eq!(lines(t.path(), "ira.jsonl").len(), 3);

    // The output is a valid corpus.
    let o = rapref(t.path(), &["validate", "--input", "ira.jsonl"]);
    assert_eq!(code(&o), 0, "{}", stdout(&o));

    write(
        t.path(),
        "short.jsonl",
        &[logprob("a", "chosen", -1.0, -1.0), logprob("a", "rejected", -1.0, -1.0)],
    );
    let o = rapref(
        t.path(),
        &[
            "ira",
            "--input",
            "in.jsonl",
            "--logprobs",
            "short.jsonl",
            "--output",
            "x.jsonl",
        ],
    );
    assert_ne!(code(&o), 0);
    assert!(stderr(&o).contains("`b`"), "{}", stderr(&o));
    assert!(!t.path().join("x.jsonl").exists());

    let o = rapref(
        t.path(),
        &[
            "ira",
            "--input",
            "in.jsonl",
            "--logprobs",
            "lp.jsonl",
            "--output",
            "x.jsonl",
            "--beta",
            "0",
        ],
    );
    assert_eq!(code(&o), 2);
}

#[test]
fn rescale_round_trip_via_cli() {
    let t = TempDir::new().unwrap();
    write(t.path(), "in.jsonl", &[record("a", 10.0, 1.0), record("b", 7.3, 2.9)]);
    let o = rapref(
        t.path(),
        &[
            "rescale",
            "--input",
            "in.jsonl",
            "--output",
            "wide.jsonl",
            "--to-min",
            "1",
            "--to-max",
            "100",
        ],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let wide = lines(t.path(), "wide.jsonl");
    assert_eq!(wide[0]["score_chosen"].as_f64().unwrap(), 100.0);
    assert_eq!(wide[0]["score_rejected"].as_f64().unwrap(), 1.0);
    let o = rapref(
        t.path(),
        &[
            "rescale",
            "--input",
            "wide.jsonl",
            "--scale-max",
            "100",
            "--output",
            "back.jsonl",
            "--to-min",
            "1",
            "--to-max",
            "10",
        ],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let back = lines(t.path(), "back.jsonl");
    assert!((back[1]["score_chosen"].as_f64().unwrap() - 7.3).abs() < 1e-9);
    assert!((back[1]["score_rejected"].as_f64().unwrap() - 2.9).abs() < 1e-9);
}

#[test]
fn stats_prints_histograms() {
    let t = TempDir::new().unwrap();
    clean_corpus(t.path(), 5);
    let o = rapref(t.path(), &["stats", "--input", "in.jsonl", "--output", "stats.json"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let s: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(s["tie_count"], 0);
    assert!(t.path().join("stats.json.manifest.json").exists());
}

#[test]
fn toy_table1_writes_four_rows() {
    let t = TempDir::new().unwrap();
    let o = rapref(t.path(), &["toy", "table1", "--output-dir", "out"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let report: Value =
        serde_json::from_str(&std::fs::read_to_string(t.path().join("out/report.json")).unwrap()).unwrap();
    let labels: Vec<&str> = report["rows"]
        .as_array()
        .unwrap()
        .iter()
        .map(|r| r["label"].as_str().unwrap())
        .collect();
    assert_eq!(labels, ["pi(y|x)", "pi(y|x,g=9)", "pi(y|x,g=8)", "pi(y|x,g=10)"]);
    assert!(stdout(&o).contains("pi(y|x,g=9)"));
    for f in ["report.txt", "manifest.json"] {
        assert!(t.path().join("out").join(f).exists(), "{f}");
    }
}

#[test]
fn toy_failed_check_exits_one_naming_it() {
    let t = TempDir::new().unwrap();
    let o = rapref(t.path(), &["toy", "table1", "--output-dir", "out", "--steps", "1"]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("plain_y2_below_0.05"), "{}", stderr(&o));
}

#[test]
fn toy_scaling_needs_three_sizes() {
    let t = TempDir::new().unwrap();
    let o = rapref(
        t.path(),
        &["toy", "scaling", "--output-dir", "out", "--sizes", "64,128"],
    );
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("3"), "{}", stderr(&o));
}

#[test]
fn toy_oracle_reports_tv_per_context() {
    let t = TempDir::new().unwrap();
    let o = rapref(
        t.path(),
        &[
            "toy",
            "oracle",
            "--output-dir",
            "out",
            "--samples",
            "2048",
            "--steps",
            "1500",
        ],
    );
    let text = stdout(&o);
    assert!(text.contains("learned_tv"), "{text}");
    assert!(text.contains("max_tv_below_0.1"), "{text}");
    assert_eq!(text.lines().filter(|l| l.contains(" g=")).count(), 6, "{text}");
}

#[test]
fn toy_world_flag_only_for_sampled_experiments() {
    let t = TempDir::new().unwrap();
    std::fs::write(t.path().join("w.json"), "{}").unwrap();
    let o = rapref(t.path(), &["toy", "table1", "--output-dir", "out", "--world", "w.json"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn help_lists_defaults() {
    let t = TempDir::new().unwrap();
    let o = rapref(t.path(), &["ira", "--help"]);
    assert_eq!(code(&o), 0);
    let h = stdout(&o);
    for needle in [
        "--beta",
        "[default: 0.01]",
        "--clip-low",
        "[default: 1]",
        "--clip-high",
        "[default: 99]",
        "--seed",
    ] {
        assert!(h.contains(needle), "{needle} missing from\n{h}");
    }
    let h = stdout(&rapref(t.path(), &["toy", "--help"]));
    assert!(h.contains("--label-smoothing") && h.contains("[default: 0]"), "{h}");
    let h = stdout(&rapref(t.path(), &["augment", "--help"]));
    assert!(h.contains("[default: full]") && h.contains("--keep-ties"), "{h}");
}

#[test]
fn reruns_are_byte_identical() {
    let t = TempDir::new().unwrap();
    clean_corpus(t.path(), 8);
    let args = [
        "augment",
        "--input",
        "in.jsonl",
        "--output",
        "out.jsonl",
        "--mode",
        "half",
    ];
    rapref(t.path(), &args);
    let first = (
        std::fs::read(t.path().join("out.jsonl")).unwrap(),
        std::fs::read(t.path().join("out.jsonl.manifest.json")).unwrap(),
    );
    rapref(t.path(), &args);
    let second = (
        std::fs::read(t.path().join("out.jsonl")).unwrap(),
        std::fs::read(t.path().join("out.jsonl.manifest.json")).unwrap(),
    );
    assert_eq!(first, second);
}
