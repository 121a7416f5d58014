use std::path::Path;
use std::process::{Command, Output};

fn run(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_horizonlab")).args(args).current_dir(cwd).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn generate_and_analyze() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["gen", "-o", "ref.json", "reference"], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let o = run(&["analyze", "ref.json", "--json"], dir.path());
    assert!(o.status.success());
    let report: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(report["min_exact_k"], 2);
    assert_eq!(report["entries"][0]["qvi_solvable"], false);

    let o = run(&["analyze", "ref.json", "--csv", "ref.csv"], dir.path());
    assert!(o.status.success());
    assert!(stdout(&o).contains("min exact k: 2"));
    let csv = std::fs::read_to_string(dir.path().join("ref.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
}

#[test]
fn sticky_generation_is_recorded() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["gen", "--sticky", "0.25", "needle", "--horizon", "3", "--actions", "2"], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let doc: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(doc["metadata"]["labels"]["sticky"], "0.25");
}

#[test]
fn train_writes_results_and_csvs() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("spec.json"),
        r#"{"env": {"generator": {"family": "reference"}},
            "algo": {"algo": "sqirl", "k": 2, "m": 300, "seed": 1},
            "budget": 10000, "seeds": [0, 1, 2]}"#,
    )
    .unwrap();
    let o = run(
        &["train", "--spec", "spec.json", "-o", "out.json", "--runs-csv", "runs.csv", "--curves-csv", "curves.csv"],
        dir.path(),
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let runs = std::fs::read_to_string(dir.path().join("runs.csv")).unwrap();
    assert_eq!(runs.lines().count(), 4);
    assert!(runs.starts_with("env,algo,k,m,seed,solved"));
    assert!(dir.path().join("curves.csv").exists());

    let o = run(&["report", "out.json", "--runs-csv", "again.csv"], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(std::fs::read_to_string(dir.path().join("again.csv")).unwrap(), runs);
}

#[test]
fn sweep_digest_is_stable() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("spec.json"),
        r#"{"env": {"generator": {"family": "reference"}},
            "algo": {"algo": "sqirl", "k": 1, "m": 1},
            "eval": {"rule": {"rule": "exact_epsilon", "epsilon": 1e-9}},
            "budget": 2000, "seeds": [0, 1, 2, 3]}"#,
    )
    .unwrap();
    let args = ["sweep", "--spec", "spec.json", "--ks", "1,2", "--m-hi", "32", "--threshold", "0.75"];
    let a = run(&args, dir.path());
    let b = run(&args, dir.path());
    assert!(a.status.success(), "{}", String::from_utf8_lossy(&a.stderr));
    assert_eq!(stdout(&a), stdout(&b));
    assert!(stdout(&a).contains("digest"));
}

#[test]
fn errors_map_to_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run(&["analyze", "missing.json"], dir.path()).status.code(), Some(2));
    std::fs::write(dir.path().join("bad.json"), "{ not json").unwrap();
    assert_eq!(run(&["analyze", "bad.json"], dir.path()).status.code(), Some(2));
    std::fs::write(
        dir.path().join("spec.json"),
        r#"{"env": {"generator": {"family": "reference"}}, "algo": {"algo": "sqirl", "k": 0, "m": 5}, "budget": 100}"#,
    )
    .unwrap();
    assert_eq!(run(&["train", "--spec", "spec.json"], dir.path()).status.code(), Some(2));
    std::fs::write(
        dir.path().join("hopeless.json"),
        r#"{"env": {"generator": {"family": "needle", "horizon": 3, "num_actions": 2}},
            "algo": {"algo": "sqirl", "k": 1, "m": 5},
            "eval": {"rule": {"rule": "exact_epsilon", "epsilon": 1e-9}},
            "budget": 100, "seeds": [0]}"#,
    )
    .unwrap();
    assert_eq!(run(&["train", "--spec", "hopeless.json"], dir.path()).status.code(), Some(3));
}
