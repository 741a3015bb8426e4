use std::fs;
use std::path::Path;
use std::process::Command;

use swarm_coord::cli::{
    cmd_preset, cmd_run, cmd_validate, scenario_json, CliError, PresetName, RUN_MANIFEST,
};
use swarm_coord::types::Scenario;

const BIN: &str = env!("CARGO_BIN_EXE_swarm-coord");

fn write_scenario(dir: &Path, name: &str, s: &Scenario) -> std::path::PathBuf {
    let p = dir.join(name);
    fs::write(&p, scenario_json(s)).unwrap();
    p
}

fn small(fleet: usize) -> Scenario {
    let mut s = Scenario::with_fleet(fleet);
    s.duration = 120.0;
    s.seed = 4;
    s
}

#[test]
fn run_writes_the_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let file = write_scenario(dir.path(), "s.json", &small(20));
    let out = dir.path().join("out");
    cmd_run(&file, None, &out, false).unwrap();
    for f in RUN_MANIFEST {
        let len = fs::metadata(out.join(f)).unwrap().len();
        assert!(len > 0, "{f} is empty");
    }
    let summary = fs::read_to_string(out.join("summary.txt")).unwrap();
    assert!(summary.starts_with("mode = centralized\n"));
    let tasks = fs::read_to_string(out.join("tasks.csv")).unwrap();
    assert!(!tasks.contains('\r'));
}

#[test]
fn minimal_file_uses_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("s.json");
    fs::write(&file, "{\"fleet_size\": 12, \"duration\": 30}").unwrap();
    cmd_run(&file, None, &dir.path().join("out"), false).unwrap();
}

#[test]
fn seed_override_changes_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let file = write_scenario(dir.path(), "s.json", &small(20));
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    cmd_run(&file, Some(1), &a, false).unwrap();
    cmd_run(&file, Some(2), &b, false).unwrap();
    assert_ne!(
        fs::read(a.join("tasks.csv")).unwrap(),
        fs::read(b.join("tasks.csv")).unwrap()
    );
}

#[test]
fn trace_flag_writes_a_trace() {
    let dir = tempfile::tempdir().unwrap();
    let file = write_scenario(dir.path(), "s.json", &small(5));
    let out = dir.path().join("out");
    cmd_run(&file, None, &out, true).unwrap();
    let trace = fs::read_to_string(out.join("trace.csv")).unwrap();
    assert!(trace.lines().any(|l| l.contains(",claim,")));
}

#[test]
fn missing_fleet_size_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("s.json");
    fs::write(&file, "{\n  \"seed\": 1\n}").unwrap();
    let err = cmd_run(&file, None, &dir.path().join("out"), false).unwrap_err();
    assert!(matches!(err, CliError::Parse { .. }));
    assert!(err.to_string().contains("fleet_size"), "{err}");
    assert!(!dir.path().join("out").exists());
}

#[test]
fn validate_lists_every_violation() {
    let dir = tempfile::tempdir().unwrap();
    let mut s = small(10);
    s.duration = -1.0;
    s.network.rtt_median = 0.0;
    let file = write_scenario(dir.path(), "bad.json", &s);
    match cmd_validate(&file) {
        Err(CliError::Invalid(v)) => {
            assert_eq!(v.len(), 2, "{v:?}");
            let text = CliError::Invalid(v).to_string();
            assert!(
                text.contains("duration") && text.contains("network.rtt_median"),
                "{text}"
            );
        }
        other => panic!("expected violations, got {other:?}"),
    }
    let good = write_scenario(dir.path(), "good.json", &small(10));
    cmd_validate(&good).unwrap();
}

#[test]
fn validate_unreadable_path() {
    let err = cmd_validate(Path::new("/nonexistent/scenario.json")).unwrap_err();
    assert!(matches!(err, CliError::Io { .. }));
}

#[test]
fn invalid_scenario_does_not_run() {
    let dir = tempfile::tempdir().unwrap();
    let mut s = small(10);
    s.fleet_size = 0;
    let file = write_scenario(dir.path(), "s.json", &s);
    let out = dir.path().join("out");
    assert!(matches!(
        cmd_run(&file, None, &out, false),
        Err(CliError::Invalid(_))
    ));
    assert!(!out.exists());
}

fn labels(long_csv: &str) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for line in long_csv.lines().skip(1) {
        let label = line.split(',').next().unwrap().to_string();
        if out.last() != Some(&label) {
            out.push(label);
        }
    }
    out
}

#[test]
fn fig2_preset_layout() {
    let dir = tempfile::tempdir().unwrap();
    let outcome = cmd_preset(PresetName::Fig2, 7, 2, dir.path(), Some(2)).unwrap();
    assert_eq!(outcome.cells.len(), 4);
    assert!(outcome.cells.iter().all(|c| c.runs == 2));
    let sched = fs::read_to_string(dir.path().join("sched_long.csv")).unwrap();
    assert_eq!(
        labels(&sched),
        ["cent-12", "dist-12", "cent-1000", "dist-1000"]
    );
    let summary = fs::read_to_string(dir.path().join("summary.csv")).unwrap();
    let mut lines = summary.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert!(header.contains(&"sched_p50") && header.contains(&"exec_p50"));
    assert_eq!(lines.count(), 4);
    for cell in ["cent-12", "dist-1000"] {
        for seed in [7, 8] {
            let run = dir.path().join(cell).join(format!("seed-{seed}"));
            for f in RUN_MANIFEST {
                assert!(fs::metadata(run.join(f)).unwrap().len() > 0);
            }
            let s: Scenario =
                serde_json::from_str(&fs::read_to_string(run.join("scenario.json")).unwrap())
                    .unwrap();
            assert_eq!(s.seed, seed);
        }
    }
}

#[test]
fn fig3_preset_has_seven_labels() {
    let dir = tempfile::tempdir().unwrap();
    cmd_preset(PresetName::Fig3, 1, 1, dir.path(), None).unwrap();
    let sched = fs::read_to_string(dir.path().join("sched_long.csv")).unwrap();
    assert_eq!(labels(&sched).len(), 7);
}

#[test]
fn fig5_summary_has_p99_per_cell() {
    let dir = tempfile::tempdir().unwrap();
    cmd_preset(PresetName::Fig5, 1, 1, dir.path(), None).unwrap();
    let summary = fs::read_to_string(dir.path().join("summary.csv")).unwrap();
    let mut lines = summary.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let p99 = header.iter().position(|h| *h == "sched_p99").unwrap();
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 12);
    for r in rows {
        let v: f64 = r.split(',').nth(p99).unwrap().parse().unwrap();
        assert!(v >= 0.0);
    }
}

#[test]
fn binary_validate_and_errors() {
    let dir = tempfile::tempdir().unwrap();
    let good = write_scenario(dir.path(), "good.json", &small(10));
    let out = Command::new(BIN)
        .arg("validate")
        .arg(&good)
        .output()
        .unwrap();
    assert!(out.status.success());
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "ok");

    let bad = dir.path().join("bad.json");
    fs::write(&bad, "{\"flet_size\": 10}").unwrap();
    let out = Command::new(BIN)
        .arg("validate")
        .arg(&bad)
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("flet_size"));

    let out = Command::new(BIN).args(["preset", "fig9"]).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("fig9"));
}

#[test]
fn binary_run_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let file = write_scenario(dir.path(), "s.json", &small(30));
    let mut outputs = Vec::new();
    for name in ["a", "b"] {
        let out_dir = dir.path().join(name);
        let status = Command::new(BIN)
            .arg("run")
            .arg(&file)
            .args(["--seed", "11", "--out"])
            .arg(&out_dir)
            .output()
            .unwrap();
        assert!(status.status.success());
        outputs.push((
            fs::read(out_dir.join("tasks.csv")).unwrap(),
            fs::read(out_dir.join("summary.txt")).unwrap(),
        ));
    }
    assert_eq!(outputs[0], outputs[1]);
}
