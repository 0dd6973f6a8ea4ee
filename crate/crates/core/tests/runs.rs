//! End-to-end behavior of runs, comparisons and sweeps, through the library and the
//! `autoscale-sim` binary.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use autoscale_sim::runner::{self, RunError, DECISIONS_FILE, EVENTS_FILE, METRICS_FILE, SUMMARY_FILE};
use autoscale_sim::scenario::{load_scenario, parse_scenario, ControllerKind};

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios").join(name)
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_autoscale-sim"))
}

const OUTPUTS: [&str; 4] = [EVENTS_FILE, DECISIONS_FILE, METRICS_FILE, SUMMARY_FILE];

#[test]
fn every_fixture_loads() {
    for name in ["heartbeat-mas.scn", "heartbeat-hpa.scn", "flash-sale-mas.scn", "flash-sale-hpa.scn"] {
        let config = load_scenario(fixture(name)).unwrap_or_else(|e| panic!("{name}: {e}"));
        assert!(config.duration >= config.trace().unwrap().len_seconds(), "{name}");
    }
}

#[test]
fn same_seed_gives_identical_files() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = load_scenario(fixture("heartbeat-hpa.scn")).unwrap();
    config.seed = 7;
    runner::run_to_dir(&config, &dir.path().join("a")).unwrap();
    runner::run_to_dir(&config, &dir.path().join("b")).unwrap();
    for f in OUTPUTS {
        let a = fs::read(dir.path().join("a").join(f)).unwrap();
        let b = fs::read(dir.path().join("b").join(f)).unwrap();
        assert!(!a.is_empty(), "{f} is empty");
        assert_eq!(a, b, "{f} differs");
    }
}

#[test]
fn noise_seed_changes_flash_sale_demand() {
    let mut config = load_scenario(fixture("flash-sale-hpa.scn")).unwrap();
    config.seed = 1;
    let a = runner::simulate(&config).unwrap();
    config.seed = 2;
    let b = runner::simulate(&config).unwrap();
    assert_ne!(a.metrics_csv(), b.metrics_csv());
}

#[test]
fn flash_sale_switch_migrates_without_downtime() {
    let out = runner::simulate(&load_scenario(fixture("flash-sale-mas.scn")).unwrap()).unwrap();
    assert_eq!(out.migrations.len(), 1);
    let m = &out.migrations[0];
    assert_eq!(m.downtime_seconds, 0);
    assert!(m.finished_at.is_some());
    assert!(m.min_running.unwrap() >= m.reference_replicas);
    assert!(out.summary_text().contains("migration_downtime_seconds = 0"));
    assert!(out.events.iter().any(|e| e.contains("PolicySwitch")));
}

#[test]
fn invalid_scenario_exits_nonzero_and_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let scn = dir.path().join("bad.scn");
    fs::write(&scn, "workload = \"heartbeat\"\ncontroller = \"mas_h2\"\ndefault_policy = \"TURBO\"\n").unwrap();
    let out_dir = dir.path().join("out");
    let status = bin()
        .args(["run", "--scenario"])
        .arg(&scn)
        .arg("--out")
        .arg(&out_dir)
        .output()
        .unwrap();
    assert!(!status.status.success());
    let stderr = String::from_utf8_lossy(&status.stderr);
    assert!(stderr.contains("default_policy") && stderr.contains("line 3"), "{stderr}");
    assert!(!out_dir.exists());
}

#[test]
fn run_flags_override_the_file() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["run", "--seed", "3", "--controller", "hpa_ca", "--scenario"])
        .arg(fixture("heartbeat-mas.scn"))
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let summary = fs::read_to_string(dir.path().join(SUMMARY_FILE)).unwrap();
    assert!(summary.contains("controller = hpa_ca"));
    assert!(summary.contains("seed = 3"));
    for f in OUTPUTS {
        assert!(dir.path().join(f).is_file(), "{f}");
    }
}

#[test]
fn validate_prints_resolved_config() {
    let out = bin()
        .args(["validate", "--scenario"])
        .arg(fixture("heartbeat-mas.scn"))
        .output()
        .unwrap();
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("forecaster SeasonalPeak"), "{text}");
}

fn run_pair(dir: &Path) -> (PathBuf, PathBuf) {
    let mas = dir.join("mas");
    let hpa = dir.join("hpa");
    runner::run_to_dir(&load_scenario(fixture("heartbeat-mas.scn")).unwrap(), &mas).unwrap();
    runner::run_to_dir(&load_scenario(fixture("heartbeat-hpa.scn")).unwrap(), &hpa).unwrap();
    (mas, hpa)
}

#[test]
fn paired_heartbeat_comparison_reports_lower_mean_utilization() {
    let dir = tempfile::tempdir().unwrap();
    let (mas, hpa) = run_pair(dir.path());
    let out = dir.path().join("cmp");
    let cmp = runner::compare_dirs(&mas, &hpa, &out).unwrap();
    assert!(cmp.summary_a.mean_utilization < cmp.summary_b.mean_utilization);
    let text = fs::read_to_string(out.join("comparison.txt")).unwrap();
    assert!(text.contains("mean_utilization"), "{text}");
    assert!(text.contains("interpretation-dependent"), "{text}");
    assert!(out.join("comparison.csv").is_file());
}

#[test]
fn self_comparison_has_zero_deltas() {
    let dir = tempfile::tempdir().unwrap();
    let (mas, _) = run_pair(dir.path());
    let cmp = runner::compare_dirs(&mas, &mas, &dir.path().join("cmp")).unwrap();
    assert_eq!(cmp.summary_a, cmp.summary_b);
    assert_eq!(cmp.headline.sustained_stress_reduction, 0.0);
    assert_eq!(cmp.headline.peak_load_reduction, 0.0);
    for row in &cmp.rows {
        assert_eq!(row.utilization_a, row.utilization_b);
        assert_eq!(row.cost_a, row.cost_b);
    }
}

#[test]
fn mismatched_seeds_are_refused() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = load_scenario(fixture("heartbeat-hpa.scn")).unwrap();
    config.seed = 11;
    runner::run_to_dir(&config, &dir.path().join("a")).unwrap();
    config.seed = 12;
    runner::run_to_dir(&config, &dir.path().join("b")).unwrap();
    let err = runner::compare_dirs(&dir.path().join("a"), &dir.path().join("b"), &dir.path().join("c")).unwrap_err();
    assert!(matches!(err, RunError::Mismatch(_)));
    let msg = err.to_string();
    assert!(msg.contains("11") && msg.contains("12"), "{msg}");

    let out = bin()
        .arg("compare")
        .arg(dir.path().join("a"))
        .arg(dir.path().join("b"))
        .arg("--out")
        .arg(dir.path().join("d"))
        .output()
        .unwrap();
    assert!(!out.status.success());
}

#[test]
fn sweep_runs_every_seed() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["sweep", "--seeds", "1-3", "--controller", "hpa_ca", "--scenario"])
        .arg(fixture("flash-sale-mas.scn"))
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for seed in 1..=3 {
        let run = dir.path().join(format!("flash-sale-hpa_ca-seed{seed}"));
        assert!(run.join(METRICS_FILE).is_file(), "{}", run.display());
    }
    let table = fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    assert_eq!(table.lines().count(), 4);
}

#[test]
fn minimal_scenario_takes_defaults() {
    let config = parse_scenario("workload = \"heartbeat\"\ncontroller = \"hpa_ca\"\n", "minimal").unwrap();
    assert_eq!(config.controller, ControllerKind::HpaCa);
    let out = runner::simulate(&config).unwrap();
    assert!(out.summary.max_running_replicas <= 3);
}

#[test]
fn retired_pods_finish_terminating_before_the_old_pool_goes() {
    let text = "workload = \"flash_sale\"\ncontroller = \"mas_h2\"\n[[schedule]]\nat = 420\npolicy = \"PERFORMANCE\"\n";
    let out = runner::simulate(&parse_scenario(text, "no-system-pods").unwrap()).unwrap();
    let m = &out.migrations[0];
    assert_eq!(m.residual_old_nodes, 0);
    assert!(m.finished_at > m.migrated_at);
    assert!(!out.events.iter().any(|e| e.starts_with("5") && e.contains("PodTerminated") && e.ends_with("stale")), "{:?}", out.events);
}

#[test]
fn annotated_example_runs() {
    let out = runner::simulate(&load_scenario(fixture("annotated.scn")).unwrap()).unwrap();
    assert_eq!(out.migrations.len(), 1);
    assert_eq!(out.migrations[0].downtime_seconds, 0);
}
