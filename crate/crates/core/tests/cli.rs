//! The `ssbrb` binary: exit codes, artifacts and replay.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const MUTANT: &str = "scenario.mode = integrated\nparams.mutation = echo-quorum-minus-one\nadversary.p3 = equivocate-init\n\
                      check.list = brb,consistency\nrun.stop_when_done = true\n";

fn ssbrb(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ssbrb")).args(args).output().expect("binary runs")
}

fn write(dir: &Path, name: &str, body: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_string()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

/// Report lines without the `# seed` markers and summary block.
fn report_lines(text: &str) -> Vec<&str> {
    text.lines().filter(|l| !l.starts_with('#')).collect()
}

#[test]
fn clean_run_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "ok.cfg", "scenario.mode = integrated\nnetwork.horizon = 3000\n");
    let out = ssbrb(&["run", "--config", &cfg, "--seeds", "0..2"]);
    assert_eq!(out.status.code(), Some(0), "{}", stdout(&out));
    let text = stdout(&out);
    assert!(text.contains("# seed 0") && text.contains("# seed 1"));
    assert!(text.contains("# violated=0"));
}

#[test]
fn config_errors_exit_two_with_line_numbers() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "bad.cfg", "# too many faults\nparams.n = 4\nparams.t = 2\n");
    let out = ssbrb(&["run", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains('2') && err.contains('3'), "{err}");

    let dup = write(dir.path(), "dup.cfg", "params.n = 4\nparams.n = 7\n");
    let out = ssbrb(&["run", "--config", &dup]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains('1') && err.contains('2'), "{err}");
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(ssbrb(&["run"]).status.code(), Some(2));
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "ok.cfg", "scenario.mode = integrated\n");
    assert_eq!(ssbrb(&["run", "--config", &cfg, "--check", "brb,nonsense"]).status.code(), Some(2));
    assert_eq!(ssbrb(&["run", "--config", &cfg, "--seeds", "9..x"]).status.code(), Some(2));
    assert_eq!(ssbrb(&["run", "--replay", "/nonexistent/trace"]).status.code(), Some(2));
}

#[test]
fn violation_exits_one_and_writes_witness() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "mutant.cfg", MUTANT);
    let traces = dir.path().join("traces");
    let out = ssbrb(&["run", "--config", &cfg, "--seed", "0", "--trace-dir", traces.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1), "{}", stdout(&out));
    assert!(stdout(&out).contains("consistency|violated|"));
    for name in ["seed-0.trace", "seed-0.report", "seed-0.consistency.witness.trace"] {
        assert!(traces.join(name).exists(), "{name} missing");
    }

    // The witness slice alone reproduces the violation.
    let witness = traces.join("seed-0.consistency.witness.trace");
    let again = ssbrb(&["run", "--replay", witness.to_str().unwrap(), "--check", "consistency"]);
    assert_eq!(again.status.code(), Some(1));
    assert!(stdout(&again).contains("consistency|violated|"));
}

#[test]
fn replay_reproduces_reports() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "byz.cfg", "scenario.mode = integrated\nadversary.p2 = byz-random\nnetwork.horizon = 4000\n");
    let traces = dir.path().join("traces");
    let run = ssbrb(&["run", "--config", &cfg, "--seed", "5", "--trace-dir", traces.to_str().unwrap()]);
    assert_eq!(run.status.code(), Some(0), "{}", stdout(&run));
    let replayed = ssbrb(&["run", "--replay", traces.join("seed-5.trace").to_str().unwrap()]);
    assert_eq!(replayed.status.code(), Some(0));
    let (a, b) = (stdout(&run), stdout(&replayed));
    assert_eq!(report_lines(&a), report_lines(&b));
    let saved = fs::read_to_string(traces.join("seed-5.report")).unwrap();
    assert_eq!(report_lines(&saved), report_lines(&b));
}

#[test]
fn horizon_flag_overrides_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "ok.cfg", "scenario.mode = integrated\n");
    let traces = dir.path().join("t");
    let out = ssbrb(&["run", "--config", &cfg, "--seed", "1", "--horizon", "500", "--trace-dir", traces.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let trace = fs::read_to_string(traces.join("seed-1.trace")).unwrap();
    assert!(trace.lines().any(|l| l == "#cfg network.horizon = 500"), "header lacks the override");
}
