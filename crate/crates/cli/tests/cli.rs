use std::path::Path;
use std::process::{Command, Output};

fn fundrank(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fundrank"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn gen(dir: &Path, extra: &[&str]) -> Output {
    let mut args = vec!["gen", "--out", dir.to_str().unwrap()];
    args.extend_from_slice(extra);
    fundrank(&args)
}

#[test]
fn gen_then_rankcheck_reports_rank_six() {
    let dir = tempfile::tempdir().unwrap();
    let out = gen(dir.path(), &["--n", "8", "--seed", "3"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let scene = dir.path().join("scene.json");
    assert!(scene.exists() && dir.path().join("estimates.json").exists());
    let out = fundrank(&["rankcheck", scene.to_str().unwrap()]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stdout(&out).lines().any(|l| l == "rank: 6"), "{}", stdout(&out));
}

#[test]
fn collinear_scene_has_rank_at_most_four() {
    let dir = tempfile::tempdir().unwrap();
    let out = gen(dir.path(), &["--n", "6", "--layout", "collinear"]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stdout(&out).contains("collinear: true"));
    let out = fundrank(&["rankcheck", dir.path().join("scene.json").to_str().unwrap()]);
    let rank: usize = stdout(&out)
        .lines()
        .find_map(|l| l.strip_prefix("rank: "))
        .unwrap()
        .parse()
        .unwrap();
    assert!(rank <= 4);
}

#[test]
fn invalid_fraction_names_the_flag() {
    let dir = tempfile::tempdir().unwrap();
    let out = gen(dir.path(), &["--missing", "1.5"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("--missing"), "{}", stderr(&out));
    assert!(!dir.path().join("scene.json").exists());
}

#[test]
fn solve_writes_solution_and_cost_history() {
    let dir = tempfile::tempdir().unwrap();
    let out = gen(dir.path(), &["--n", "6", "--missing", "0.2", "--seed", "9"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let estimates = dir.path().join("estimates.json");
    let out = fundrank(&[
        "solve",
        estimates.to_str().unwrap(),
        "--max-irls",
        "5",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let passes: usize = stdout(&out)
        .lines()
        .find_map(|l| l.strip_prefix("irls passes: "))
        .unwrap()
        .parse()
        .unwrap();
    let csv = std::fs::read_to_string(dir.path().join("cost_history.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("pass,cost"));
    assert_eq!(csv.lines().count(), passes + 1);
    assert!(dir.path().join("solution.json").exists());
}

#[test]
fn missing_input_is_an_io_error() {
    let out = fundrank(&["solve", "/nonexistent/estimates.json"]);
    assert_eq!(out.status.code(), Some(3));
    let out = fundrank(&["rankcheck", "/nonexistent/scene.json"]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn malformed_input_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("estimates.json");
    std::fs::write(&path, "{\"n\": 3, \"pairs\": [").unwrap();
    let out = fundrank(&["solve", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));
}

#[test]
fn pipeline_writes_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("spec.json");
    std::fs::write(&spec, r#"{"trials": 2, "scene": {"n_cameras": 5, "n_points": 20, "seed": 1}}"#).unwrap();
    let results = dir.path().join("results");
    let out = fundrank(&["pipeline", spec.to_str().unwrap(), "--out", results.to_str().unwrap()]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stdout(&out).contains("trials: 2 (0 with errors)"), "{}", stdout(&out));
    let metrics = std::fs::read_to_string(results.join("metrics.csv")).unwrap();
    assert_eq!(metrics.lines().count(), 3);
    assert!(results.join("run_record.json").exists());
}
