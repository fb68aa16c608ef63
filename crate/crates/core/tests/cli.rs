use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

fn golden(name: &str) -> String {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name);
    std::fs::read_to_string(path).unwrap()
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hitreduce")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn model() -> String {
    fixture("three_state.json").to_string_lossy().into_owned()
}

#[test]
fn verify_passes_and_prints_the_exponential_limit() {
    let before = std::fs::read(fixture("three_state.json")).unwrap();
    let o = run(&["verify", &model(), "--format", "text"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    assert!(text.contains("Psi[2 -> 3](s) = 1/(1+s)"), "{text}");
    assert!(text.contains("overall: pass"));
    assert_eq!(std::fs::read(fixture("three_state.json")).unwrap(), before);
}

#[test]
fn verify_json_carries_the_report() {
    let o = run(&["verify", &model()]);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["convergence"]["pass"], serde_json::Value::Bool(true));
    assert!(v["conditions"].is_object());
}

#[test]
fn negative_control_fails_verification() {
    let path = fixture("three_state_negative.json");
    let o = run(&["verify", path.to_str().unwrap(), "--format", "text"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("overall: FAIL"));
}

#[test]
fn simulate_is_deterministic() {
    let args = ["simulate", &model(), "--samples", "10", "--seed", "42", "--start", "2"];
    let a = run(&args);
    let b = run(&args);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
    let other = run(&["simulate", &model(), "--samples", "10", "--seed", "43", "--start", "2"]);
    assert_ne!(a.stdout, other.stdout);
}

#[test]
fn simulate_writes_samples() {
    let dir = std::env::temp_dir().join(format!("hitreduce-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let csv = dir.join("samples.csv");
    let o = run(&["simulate", &model(), "--samples", "5", "--csv", csv.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let text = std::fs::read_to_string(&csv).unwrap();
    assert_eq!(text.lines().next(), Some("index,tau,entry"));
    assert_eq!(text.lines().count(), 6);
    std::fs::remove_dir_all(dir).unwrap();
}

#[test]
fn json_reports_match_the_golden_files() {
    for (cmd, file) in [("hitting", "hitting.json"), ("expect", "expect.json")] {
        let first = run(&[cmd, &model()]);
        let second = run(&[cmd, &model()]);
        assert_eq!(first.status.code(), Some(0));
        assert_eq!(first.stdout, second.stdout);
        assert_eq!(stdout(&first), golden(file), "{cmd}");
    }
}

#[test]
fn reduce_reports_the_exclusion_order() {
    let o = run(&["reduce", &model()]);
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["exclusion_order"], serde_json::json!(["1"]));
    assert_eq!(v["final_state"], "2");
    let full = run(&["reduce", &model(), "--trace"]);
    let v: serde_json::Value = serde_json::from_str(&stdout(&full)).unwrap();
    assert_eq!(v["trace"].as_array().map(Vec::len), Some(2));
}

#[test]
fn validate_accepts_the_fixture() {
    let o = run(&["validate", &model(), "--format", "text"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
}

#[test]
fn missing_file_is_an_io_error() {
    let o = run(&["hitting", "/definitely/not/here.json"]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn malformed_model_is_a_validation_error() {
    let dir = std::env::temp_dir().join(format!("hitreduce-bad-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("bad.json");
    std::fs::write(&path, r#"{"states": ["a", "b"], "family": "H1", "transitions": []}"#).unwrap();
    let o = run(&["validate", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("domain_D"));
    std::fs::remove_dir_all(dir).unwrap();
}

#[test]
fn bad_grids_are_rejected() {
    assert_eq!(run(&["verify", &model(), "--eps", "1e-3,1e-2"]).status.code(), Some(1));
    assert_eq!(run(&["simulate", &model(), "--samples", "0"]).status.code(), Some(1));
    assert_eq!(run(&["verify", &model(), "--eps", "2"]).status.code(), Some(1));
}
