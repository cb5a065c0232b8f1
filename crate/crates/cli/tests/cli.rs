use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn uncoupled(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_uncoupled")).args(args).current_dir(dir).output().unwrap()
}

fn with_game() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    let out = uncoupled(&["example-game", "game.toml"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    dir
}

const CNUM: &str = r#"
game = "game.toml"
output_dir = "runs"
seeds = [1, 2]

[algorithm]
kind = "cnum"
epsilon = 0.1
frame_len = 200
num_frames = 5
"#;

#[test]
fn run_writes_a_trace_and_summary_per_seed() {
    let dir = with_game();
    fs::write(dir.path().join("exp.toml"), CNUM).unwrap();
    let out = uncoupled(&["run", "exp.toml"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for seed in [1, 2] {
        let csv = fs::read_to_string(dir.path().join(format!("runs/cnum_seed{seed}.csv"))).unwrap();
        assert_eq!(csv.lines().count(), 6);
        let summary: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(dir.path().join(format!("runs/cnum_seed{seed}.json"))).unwrap()).unwrap();
        assert_eq!(summary["seed"], seed);
    }
}

#[test]
fn sweep_writes_one_trace_per_value() {
    let dir = with_game();
    fs::write(dir.path().join("exp.toml"), CNUM).unwrap();
    let out = uncoupled(&["sweep", "exp.toml", "--parameter", "epsilon", "--values", "0.2,0.05", "--seeds", "3"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let mut names: Vec<String> = fs::read_dir(dir.path().join("runs"))
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .filter(|n| n.ends_with(".csv"))
        .collect();
    names.sort();
    assert_eq!(names, ["cnum_epsilon_0.05_seed3.csv", "cnum_epsilon_0.2_seed3.csv"]);
}

#[test]
fn verify_passes_on_the_example_game() {
    let dir = with_game();
    let out = uncoupled(&["verify", "game.toml", "--tv-horizon", "200", "--out", "report.json"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    assert!(report["checks"].as_array().unwrap().iter().all(|c| c["status"] != "fail"));
}

#[test]
fn verify_exits_with_invariant_code_on_failed_checks() {
    let dir = with_game();
    // The literal closed forms do not hold at window 2.
    let out = uncoupled(&["verify", "game.toml", "--windows", "2", "--tv-horizon", "50"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn analyze_reports_the_stable_profile_and_writes_dot() {
    let dir = with_game();
    let out = uncoupled(&["analyze", "game.toml", "--epsilons", "0.1", "--tv-horizon", "20", "--dot", "chain.dot"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["num_states"], 16);
    assert_eq!(report["certification"]["passed"], true);
    assert!(fs::read_to_string(dir.path().join("chain.dot")).unwrap().starts_with("digraph"));
}

#[test]
fn suggest_frame_prints_the_prescribed_length() {
    let dir = tempfile::tempdir().unwrap();
    let out = uncoupled(&["suggest-frame", "--nodes", "2", "--v", "1", "--eta", "0.1", "--epsilon", "0.1"], dir.path());
    assert!(out.status.success());
    let t: f64 = String::from_utf8(out.stdout).unwrap().trim().parse().unwrap();
    // N(V+1)/(η ε^{(c+1)N}) with c = 3.
    assert!((t / 4e9 - 1.0).abs() < 1e-9);
    let bad = uncoupled(&["suggest-frame", "--nodes", "2", "--v", "1", "--eta", "0.1", "--epsilon", "2"], dir.path());
    assert_eq!(bad.status.code(), Some(3));
}

#[test]
fn config_errors_exit_with_code_three() {
    let dir = with_game();
    fs::write(dir.path().join("typo.toml"), CNUM.replace("num_frames", "num_frame")).unwrap();
    assert_eq!(uncoupled(&["run", "typo.toml"], dir.path()).status.code(), Some(3));
    fs::write(dir.path().join("nogame.toml"), CNUM.replace("game.toml", "absent.toml")).unwrap();
    assert_eq!(uncoupled(&["run", "nogame.toml"], dir.path()).status.code(), Some(3));
}

#[test]
fn unreadable_files_exit_with_code_one() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(uncoupled(&["verify", "missing.toml"], dir.path()).status.code(), Some(1));
}

#[test]
fn shipped_configs_validate() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut seen = 0;
    for entry in fs::read_dir(&dir).unwrap() {
        let path = entry.unwrap().path();
        if path.file_name().unwrap() == "two_node.toml" {
            uncoupled::GameDefinition::load(&path).unwrap();
            continue;
        }
        let cfg = uncoupled::experiment::ExperimentConfig::load(&path).unwrap();
        cfg.validate().unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        seen += 1;
    }
    assert!(seen >= 4);
}
