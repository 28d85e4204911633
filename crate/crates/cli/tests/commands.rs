use std::fs;
use std::path::{Path, PathBuf};

use clap::Parser;
use crsn_cli::{execute, Cli, EXIT_FAILURE, EXIT_OK, EXIT_UNREADABLE, MEANS_FILE, SUMMARY_FILE, TRACE_FILE};
use crsn_core::{ScenarioConfig, Trace};

fn repo_config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

fn invoke(args: &[&str]) -> (u8, String, String) {
    let cli = Cli::try_parse_from(std::iter::once("crsn").chain(args.iter().copied())).unwrap();
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let code = execute(cli, &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

fn short_config(dir: &Path, edit: impl FnOnce(&mut ScenarioConfig)) -> PathBuf {
    let mut cfg = ScenarioConfig::default();
    cfg.scenario.run_time_s = 10.0;
    cfg.scenario.node_count = 20;
    edit(&mut cfg);
    let path = dir.join("scenario.toml");
    fs::write(&path, cfg.to_toml_string()).unwrap();
    path
}

#[test]
fn shipped_configs_parse() {
    let default = ScenarioConfig::load(&repo_config("default.toml")).unwrap();
    assert_eq!(default, ScenarioConfig::default());
    let large = ScenarioConfig::load(&repo_config("large_400.toml")).unwrap();
    assert_eq!(large.scenario.node_count, 400);
    assert_eq!(large.spectrum.fixed_cluster_count, 10);
}

#[test]
fn run_writes_trace_and_summary() {
    let tmp = tempfile::tempdir().unwrap();
    let config = short_config(tmp.path(), |_| {});
    let out = tmp.path().join("out");
    let (code, _, err) = invoke(&["run", "--config", config.to_str().unwrap(), "--seed", "4", "--out", out.to_str().unwrap()]);
    assert_eq!(code, EXIT_OK, "{err}");
    let trace = Trace::parse_jsonl(&fs::read_to_string(out.join(TRACE_FILE)).unwrap()).unwrap();
    assert!(!trace.is_empty());
    let summary = fs::read_to_string(out.join(SUMMARY_FILE)).unwrap();
    let lines: Vec<&str> = summary.lines().collect();
    assert_eq!(lines[0], "variant,node_count,seed,mean_delay_s,throughput_bps,blacklisted_count,status");
    assert!(lines[1].starts_with("proposed,20,4,"));
    assert!(lines[1].ends_with(",ok"));
}

#[test]
fn missing_config_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    let missing = tmp.path().join("nope.toml");
    let (code, _, err) = invoke(&["run", "--config", missing.to_str().unwrap()]);
    assert_eq!(code, EXIT_UNREADABLE);
    assert!(err.contains("nope.toml"));
}

#[test]
fn invalid_field_exits_1_and_names_it() {
    let tmp = tempfile::tempdir().unwrap();
    let config = short_config(tmp.path(), |c| c.delay.collision_prob = 1.5);
    let (code, _, err) = invoke(&["run", "--config", config.to_str().unwrap(), "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(code, EXIT_FAILURE);
    assert!(err.contains("delay.collision_prob"), "{err}");

    let typo = tmp.path().join("typo.toml");
    fs::write(&typo, "[scenario]\nnode_cuont = 3\n").unwrap();
    let (code, _, err) = invoke(&["run", "--config", typo.to_str().unwrap()]);
    assert_eq!(code, EXIT_FAILURE);
    assert!(err.contains("node_cuont"), "{err}");
}

#[test]
fn sweep_writes_one_row_per_point_and_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let config = short_config(tmp.path(), |_| {});
    let sweep = |dir: &Path| {
        invoke(&[
            "sweep", "--config", config.to_str().unwrap(), "--nodes", "10,20", "--seeds", "1,2",
            "--variants", "proposed,no_trust", "--out", dir.to_str().unwrap(),
        ])
    };
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert_eq!(sweep(&a).0, EXIT_OK);
    assert_eq!(sweep(&b).0, EXIT_OK);
    let summary = fs::read_to_string(a.join(SUMMARY_FILE)).unwrap();
    assert_eq!(summary.lines().count(), 1 + 2 * 2 * 2);
    let means = fs::read_to_string(a.join(MEANS_FILE)).unwrap();
    assert_eq!(means.lines().count(), 1 + 2 * 2);
    assert_eq!(summary, fs::read_to_string(b.join(SUMMARY_FILE)).unwrap());
    assert_eq!(means, fs::read_to_string(b.join(MEANS_FILE)).unwrap());
}

#[test]
fn failed_sweep_point_is_recorded_and_exit_is_nonzero() {
    let tmp = tempfile::tempdir().unwrap();
    let config = short_config(tmp.path(), |c| c.scenario.malicious_count = 3);
    let out = tmp.path().join("out");
    let (code, stdout, _) = invoke(&[
        "sweep", "--config", config.to_str().unwrap(), "--nodes", "2,20", "--seeds", "1",
        "--variants", "proposed", "--out", out.to_str().unwrap(),
    ]);
    assert_eq!(code, EXIT_FAILURE);
    assert!(stdout.contains("1 failed"), "{stdout}");
    let summary = fs::read_to_string(out.join(SUMMARY_FILE)).unwrap();
    let rows: Vec<&str> = summary.lines().skip(1).collect();
    assert_eq!(rows.len(), 2);
    assert!(rows[0].contains("failed"));
    assert!(rows[1].ends_with(",ok"));
}

#[test]
fn verify_passes_and_detects_a_perturbed_switch_delay() {
    let (code, out, _) = invoke(&["verify"]);
    assert_eq!(code, EXIT_OK);
    assert!(out.lines().any(|l| l.starts_with("pass") && l.contains("switching_delay")));
    assert!(out.lines().any(|l| l.contains("rssi_distance")));

    let (code, out, _) = invoke(&["verify", "--switch-step-delay", "0.011"]);
    assert_eq!(code, EXIT_FAILURE);
    let failing: Vec<&str> = out.lines().filter(|l| l.starts_with("FAIL")).collect();
    assert!(!failing.is_empty());
    assert!(failing.iter().all(|l| l.contains("switching_delay") || l.contains("link_delay")), "{failing:?}");
}
