use std::path::PathBuf;
use std::process::{Command, Output};

fn twinfl(args: &[&str], out_dir: &PathBuf) -> Output {
    Command::new(env!("CARGO_BIN_EXE_twinfl"))
        .args(args)
        .env("TWINFL_OUT_DIR", out_dir)
        .output()
        .unwrap()
}

fn scratch(name: &str) -> PathBuf {
    let dir = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join(name);
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

#[test]
fn config_file_then_overrides() {
    let dir = scratch("cli-config");
    let file = dir.join("scenario.txt");
    std::fs::write(&file, "# two clients\nselected = 2\nrounds = 7\n").unwrap();
    let out = twinfl(
        &["config", "-c", file.to_str().unwrap(), "--set", "rounds=3"],
        &dir,
    );
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.lines().any(|l| l == "selected = 2"));
    assert!(text.lines().any(|l| l == "rounds = 3"));
}

#[test]
fn simulate_writes_into_the_output_directory() {
    let dir = scratch("cli-simulate");
    let args = [
        "simulate",
        "--schemes",
        "proposed,ideal",
        "-s",
        "rounds=2",
        "-s",
        "data_size=100",
        "-s",
        "seed=4",
    ];
    let out = twinfl(&args, &dir);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let csv = std::fs::read_to_string(dir.join("metrics_seed4.csv")).unwrap();
    assert_eq!(csv.lines().count(), 5);
    assert_eq!(csv.lines().filter(|l| l.contains(",ideal,")).count(), 2);
}

#[test]
fn sweep_keeps_invalid_values_as_warnings() {
    let dir = scratch("cli-sweep");
    let out = twinfl(
        &[
            "sweep",
            "--axis",
            "n",
            "--values",
            "2,30",
            "--schemes",
            "proposed",
            "-s",
            "sweep_seeds=3",
        ],
        &dir,
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let csv = std::fs::read_to_string(dir.join("sweep_n.csv")).unwrap();
    assert!(csv.lines().any(|l| l.starts_with("n,30,,,warning,")));
    assert_eq!(csv.lines().filter(|l| l.contains(",sample,")).count(), 3);
}

#[test]
fn infeasible_solve_fails_with_a_diagnostic() {
    let dir = scratch("cli-infeasible");
    let out = twinfl(&["solve", "--set", "t_max=0.01"], &dir);
    assert!(!out.status.success());
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("infeasible"), "{err}");
}

#[test]
fn bad_input_is_rejected() {
    let dir = scratch("cli-bad");
    assert!(!twinfl(&["solve", "--set", "no_such_key=1"], &dir)
        .status
        .success());
    assert!(!twinfl(&["sweep", "--axis", "q", "--values", "1"], &dir)
        .status
        .success());
    assert!(
        !twinfl(&["config", "-c", "/nonexistent/scenario.txt"], &dir)
            .status
            .success()
    );
}

#[test]
fn solve_prints_the_decision() {
    let dir = scratch("cli-solve");
    let out = twinfl(&["solve", "--set", "selected=3"], &dir);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("scheme proposed"));
    assert!(text.contains("T+E"));
}
