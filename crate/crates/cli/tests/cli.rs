use std::process::{Command, Output};

fn lab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_krylov-lab")).args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

#[test]
fn constants_are_byte_identical() {
    let a = lab(&["constants"]);
    let b = lab(&["constants"]);
    assert_eq!(code(&a), 0);
    assert_eq!(a.stdout, b.stdout);
    let text = String::from_utf8(a.stdout).unwrap();
    assert!(text.lines().any(|l| l.starts_with("alpha_chain")), "{text}");
}

#[test]
fn constants_json_parses() {
    let out = lab(&["constants", "--format", "json-lines", "--N", "2"]);
    assert_eq!(code(&out), 0);
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(v.is_object());
}

#[test]
fn bad_kappa_is_a_config_error() {
    assert_eq!(code(&lab(&["constants", "--kappa", "1.5"])), 2);
    assert_eq!(code(&lab(&["constants", "--lambda", "2", "--Lambda", "1"])), 2);
    assert_eq!(code(&lab(&["bound", "--fnorm", "1.5"])), 2);
}

#[test]
fn unknown_flag_is_a_config_error() {
    assert_eq!(code(&lab(&["verify", "--no-such-flag"])), 2);
}

#[test]
fn barrier_control_fails_hard() {
    let base =
        ["certify-barrier", "--theta", "0.5", "--delta", "0.25", "--eta", "1", "--tau1", "0.75", "--tau2", "0.75", "--samples", "20000"];
    assert_eq!(code(&lab(&base)), 0);
    let mut control = base.to_vec();
    control.extend(["--alpha", "0"]);
    assert_eq!(code(&lab(&control)), 1);
}

#[test]
fn verify_csv_is_deterministic_with_frozen_header() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let path = dir.path().join(name);
        let out = lab(&["verify", "--count", "4", "--grid", "coarse", "--richardson-every", "2", "--out", path.to_str().unwrap()]);
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
        std::fs::read_to_string(path).unwrap()
    };
    let (a, b) = (run("a.csv"), run("b.csv"));
    assert_eq!(a, b);
    let mut reader = csv::Reader::from_reader(a.as_bytes());
    let header: Vec<String> = reader.headers().unwrap().iter().map(str::to_string).collect();
    assert_eq!(header, krylov_core::harness::report::CSV_COLUMNS);
    assert_eq!(reader.records().count(), 4);
}

#[test]
fn fault_injection_exits_one() {
    let out = lab(&["verify", "--count", "2", "--grid", "coarse", "--fault"]);
    assert_eq!(code(&out), 1);
}

#[test]
fn json_lines_end_with_aggregates() {
    let out = lab(&["verify", "--count", "2", "--grid", "coarse", "--format", "json-lines"]);
    assert_eq!(code(&out), 0);
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 3);
    let last: serde_json::Value = serde_json::from_str(lines[2]).unwrap();
    assert!(last.get("aggregates").is_some());
}

#[test]
fn fundamental_round_trips_through_solve_files() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("w.txt");
    let out = lab(&["fundamental", "--cylinder", "0,-0.5,0.25", "--grid", "coarse", "--out", path.to_str().unwrap()]);
    assert_eq!(code(&out), 0);
    let w = krylov_core::GridFunction::from_text(&std::fs::read_to_string(path).unwrap()).unwrap();
    assert!(w.all_finite());
    assert!(w.last().iter().all(|&v| v >= 0.0));
}

#[test]
fn missing_input_file_is_a_config_error() {
    assert_eq!(code(&lab(&["solve", "--source", "/definitely/not/here"])), 2);
}

#[test]
fn short_elliptic_horizon_is_rejected() {
    assert_eq!(code(&lab(&["elliptic-limit", "--r", "0.2", "--horizon", "2"])), 2);
}
