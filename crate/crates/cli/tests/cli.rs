use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn desk_config() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs/desk.toml")
}

fn valuescope(run_dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_valuescope"))
        .arg("--config")
        .arg(desk_config())
        .arg("--run-dir")
        .arg(run_dir)
        .args(args)
        .output()
        .expect("binary runs")
}

#[test]
fn synthbench_writes_its_report() {
    let tmp = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_valuescope"))
        .arg("--run-dir")
        .arg(tmp.path())
        .args(["synthbench"])
        .output()
        .unwrap();
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(tmp.path().join("synthbench/report.jsonl").is_file());
    assert!(tmp.path().join("manifest.json").is_file());
}

#[test]
fn stage_before_its_inputs_exits_4() {
    let tmp = tempfile::tempdir().unwrap();
    let out = valuescope(tmp.path(), &["rpm"]);
    assert_eq!(out.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&out.stderr).contains("score-preference"));
}

#[test]
fn usage_errors_exit_2() {
    let out = Command::new(env!("CARGO_BIN_EXE_valuescope"))
        .arg("transmogrify")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let out = Command::new(env!("CARGO_BIN_EXE_valuescope"))
        .args(["--dimension", "tone", "rpm"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn bad_config_exits_3() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("bad.toml");
    std::fs::write(&cfg, "seed = 1\nno_such_key = true\n").unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_valuescope"))
        .arg("--config")
        .arg(&cfg)
        .args(["synthbench"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));

    let out = valuescope(
        tmp.path(),
        &["--s1", "2019-2021", "--s2", "2021-2023", "ingest"],
    );
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn pipeline_then_orphan_fails_report() {
    let tmp = tempfile::tempdir().unwrap();
    let run = tmp.path().join("run");
    let out = valuescope(&run, &["pipeline"]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.lines().any(|l| l.starts_with("report")));
    assert!(run.join("report/summary.json").is_file());

    std::fs::write(run.join("rpm/leftover.csv"), "x\n").unwrap();
    let out = valuescope(&run, &["report"]);
    assert_eq!(out.status.code(), Some(7));
    assert!(String::from_utf8_lossy(&out.stderr).contains("rpm/leftover.csv"));

    // A different seed against the same directory is refused.
    let out = valuescope(&run, &["--seed", "7", "report"]);
    assert_eq!(out.status.code(), Some(3));
}
