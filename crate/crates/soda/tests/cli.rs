//! End-to-end tests of the `soda` binary: config loading, report and trace
//! output, replay, and exit codes.

use std::process::Command;

fn soda() -> Command {
    Command::new(env!("CARGO_BIN_EXE_soda"))
}

#[test]
fn run_writes_reports_and_traces() {
    let dir = tempfile::tempdir().unwrap();
    let out = soda()
        .args([
            "run",
            "--n",
            "5",
            "--f",
            "2",
            "--writers",
            "1",
            "--readers",
            "1",
            "--ops",
            "2",
            "--seeds",
            "2",
            "--value-size",
            "60",
            "--out",
        ])
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for stem in ["soda_0000", "soda_0001"] {
        let report = dir.path().join(format!("{stem}.report.txt"));
        let text = std::fs::read_to_string(&report).unwrap();
        assert!(text.contains("== atomicity: PASS"), "{text}");
        assert!(text.contains("# operation log"));
        assert!(dir.path().join(format!("{stem}.trace")).exists());
    }
    assert!(dir.path().join("summary.txt").exists());
}

#[test]
fn replay_is_idempotent_and_reports_parse_errors() {
    let dir = tempfile::tempdir().unwrap();
    let status = soda()
        .args(["run", "--n", "5", "--f", "2", "--seeds", "1", "--value-size", "40", "--out"])
        .arg(dir.path())
        .status()
        .unwrap();
    assert!(status.success());
    let trace = dir.path().join("soda_0000.trace");

    let first = soda().arg("replay").arg(&trace).output().unwrap();
    let second = soda().arg("replay").arg(&trace).output().unwrap();
    assert!(first.status.success());
    assert_eq!(first.stdout, second.stdout);
    let text = String::from_utf8_lossy(&first.stdout).to_string();
    assert!(text.contains("quiescent after"), "{text}");

    let bad = dir.path().join("bad.trace");
    std::fs::write(&bad, "3 KIND w1 s1 0 ok\nnot a trace\n").unwrap();
    let out = soda().arg("replay").arg(&bad).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"));
}

#[test]
fn config_file_and_compare_table() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("exp.cfg");
    std::fs::write(
        &cfg_path,
        "protocol = soda\nn = 6\nf = 2\nwriters = 1\nreaders = 1\n\
         ops_per_client = 1\nseed = 3\nvalue_size = 90\ndelivery = async\n",
    )
    .unwrap();
    let out = soda()
        .args(["run", "--config"])
        .arg(&cfg_path)
        .args(["--seeds", "2", "--compare", "abd"])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8_lossy(&out.stdout).to_string();
    assert!(text.contains("protocol"), "{text}");
    assert!(text.contains("abd"), "{text}");
    // full replication stores n = 6 units; the coded register stores 1.5
    assert!(text.contains("6.000"), "{text}");
    assert!(text.contains("1.500"), "{text}");
}

#[test]
fn invalid_config_diagnoses_field() {
    let out = soda().args(["run", "--n", "5", "--f", "3"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("f = 3"), "{err}");
}

// the full matrix at n=5, f=2 runs in the acceptance suite
#[test]
fn crash_matrix_smoke() {
    let out = soda()
        .args(["run", "--n", "3", "--f", "1", "--value-size", "30", "--crash-matrix"])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("0 failures"), "{text}");
}
