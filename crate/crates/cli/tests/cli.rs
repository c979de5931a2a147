use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_shared-dof");

fn shared_dof(dir: &Path, args: &[&str]) -> Output {
    Command::new(BIN)
        .args(args)
        .current_dir(dir)
        .env_remove("SHARED_DOF_LOG_DIR")
        .output()
        .expect("binary runs")
}

#[test]
fn run_twice_gives_identical_logs() {
    let dir = tempfile::tempdir().unwrap();
    let args = |out: &'static str| {
        [
            "run", "--scenario", "canonical.json", "--mode", "admc_continuous", "--user", "greedy", "--seed", "42",
            "--out", out,
        ]
    };
    let a = shared_dof(dir.path(), &args("a.jsonl"));
    let b = shared_dof(dir.path(), &args("b.jsonl"));
    assert_eq!(a.status.code(), Some(0), "{}", String::from_utf8_lossy(&a.stderr));
    assert_eq!(b.status.code(), Some(0));
    let la = fs::read(dir.path().join("a.jsonl")).unwrap();
    let lb = fs::read(dir.path().join("b.jsonl")).unwrap();
    assert!(!la.is_empty());
    assert_eq!(la, lb);
    let csv = fs::read_to_string(dir.path().join("a.metrics.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2);
    assert!(csv.lines().nth(1).unwrap().contains(",true,"));
}

#[test]
fn log_lines_have_only_simulation_fields() {
    let dir = tempfile::tempdir().unwrap();
    let out = shared_dof(dir.path(), &["run", "--scenario", "canonical.json", "--mode", "classic", "--out", "c.jsonl"]);
    assert_eq!(out.status.code(), Some(0));
    let text = fs::read_to_string(dir.path().join("c.jsonl")).unwrap();
    for (i, line) in text.lines().enumerate() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        assert_eq!(v["tick"], i as u64);
        for banned in ["timestamp", "wall_time", "host", "hostname", "pid"] {
            assert!(v.get(banned).is_none());
        }
    }
}

#[test]
fn bogus_mode_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = shared_dof(dir.path(), &["run", "--scenario", "canonical.json", "--mode", "bogus"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--mode"));
}

#[test]
fn bad_scenario_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("broken.json"), "{\"name\": \"x\",\n \"tick_dt\": }").unwrap();
    let out = shared_dof(dir.path(), &["run", "--scenario", "broken.json"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"));
    let missing = shared_dof(dir.path(), &["run", "--scenario", "nowhere.json"]);
    assert_eq!(missing.status.code(), Some(1));
}

#[test]
fn timeout_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = shared_dof(
        dir.path(),
        &["run", "--scenario", "canonical.json", "--mode", "classic", "--ticks-max", "30", "--out", "t.jsonl"],
    );
    assert_eq!(out.status.code(), Some(2));
    let text = fs::read_to_string(dir.path().join("t.jsonl")).unwrap();
    assert_eq!(text.lines().count(), 30);
}

#[test]
fn log_dir_override() {
    let dir = tempfile::tempdir().unwrap();
    let logs = tempfile::tempdir().unwrap();
    let out = Command::new(BIN)
        .args(["run", "--scenario", "canonical.json", "--out", "nested/run.jsonl"])
        .current_dir(dir.path())
        .env("SHARED_DOF_LOG_DIR", logs.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert!(logs.path().join("run.jsonl").exists());
    assert!(logs.path().join("run.metrics.csv").exists());
    assert!(!dir.path().join("nested").exists());
}

#[test]
fn bench_two_variants_five_seeds() {
    let dir = tempfile::tempdir().unwrap();
    let out = shared_dof(
        dir.path(),
        &[
            "bench", "--scenario", "canonical.json", "--mode", "classic", "--mode", "admc_continuous", "--seeds",
            "1-5", "--out", "b",
        ],
    );
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let files: Vec<String> = fs::read_dir(dir.path().join("b"))
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    assert_eq!(files.iter().filter(|f| f.ends_with(".jsonl")).count(), 10);
    assert_eq!(files.len(), 11);
    let report = fs::read_to_string(dir.path().join("b/report.csv")).unwrap();
    let mut lines = report.lines();
    assert_eq!(
        lines.next(),
        Some("variant,completion_time_s,user_switches,auto_switches,path_length_m,success_rate")
    );
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 2);
    let classic = rows.iter().find(|r| r[0] == "classic").unwrap();
    let admc = rows.iter().find(|r| r[0] == "admc_continuous").unwrap();
    let num = |r: &Vec<&str>, i: usize| r[i].parse::<f64>().unwrap();
    assert!(num(admc, 2) < num(classic, 2));
    assert!(num(admc, 1) < num(classic, 1));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("relative to classic"));
    assert!(stdout.contains("workload n/a"));
}

#[test]
fn bench_without_baseline_fails() {
    let dir = tempfile::tempdir().unwrap();
    let out = shared_dof(
        dir.path(),
        &["bench", "--scenario", "canonical.json", "--mode", "admc_idle", "--seeds", "1", "--out", "b"],
    );
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("classic"));
}
