use std::path::Path;
use std::process::{Command, Output};

fn lyapgen(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lyapgen"))
        .args(args)
        .current_dir(dir)
        .env_remove("LYAPGEN_THREADS")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const QUICK: &str = r#"{"budgets":{"ftGrid":11,"multistarts":3,"doaGrid":31,"topK":4,"contourResolution":80}}"#;

#[test]
fn toggle_switch_has_three_equilibria() {
    let dir = tempfile::tempdir().unwrap();
    let o = lyapgen(dir.path(), &["equilibria", "--system", "toggleSwitch"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = stdout(&o);
    assert_eq!(out.matches("stable").count(), 3, "{out}");
    assert_eq!(out.matches("unstable").count(), 1, "{out}");
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("equilibria.json")).unwrap()).unwrap();
    assert_eq!(report["equilibria"].as_array().unwrap().len(), 3);
}

#[test]
fn repressilator_has_one_equilibrium() {
    let dir = tempfile::tempdir().unwrap();
    let o = lyapgen(dir.path(), &["equilibria", "--system", "repressilator"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("(1.515980, 1.515980, 1.515980)"), "{}", stdout(&o));
}

#[test]
fn unknown_system_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = lyapgen(dir.path(), &["equilibria", "--system", "vanDerPol"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("unknown system"), "{}", stderr(&o));
}

#[test]
fn bad_arguments_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(lyapgen(dir.path(), &["verify", "--d", "soon"]).status.code(), Some(1));
    assert_eq!(lyapgen(dir.path(), &["frobnicate"]).status.code(), Some(1));
    assert_eq!(
        lyapgen(dir.path(), &["verify", "--system", "ring3d", "--p", "cholesky"]).status.code(),
        Some(1)
    );
}

#[test]
fn unstable_equilibrium_cannot_be_certified() {
    let dir = tempfile::tempdir().unwrap();
    let o = lyapgen(dir.path(), &["verify", "--system", "toggleSwitch", "--eq-index", "1"]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn missing_certificate_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let o = lyapgen(dir.path(), &["build", "--cert", "nowhere.json"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("verify"));
}

#[test]
fn ring_pipeline_round_trips_through_check() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("quick.json"), QUICK).unwrap();
    let cfg = ["--config", "quick.json"];
    let run = |args: &[&str]| {
        let all: Vec<&str> = args.iter().chain(cfg.iter()).copied().collect();
        lyapgen(d, &all)
    };
    let o = run(&["verify", "--system", "ring3d", "--p", "identity", "--d", "0.2"]);
    assert_eq!(o.status.code(), Some(0), "{}{}", stdout(&o), stderr(&o));
    assert_eq!(run(&["build", "--cert", "certificate.json"]).status.code(), Some(0));
    let o = run(&["doa", "--w", "w.json", "--within", "certificate.json", "--out", "doa-within.json"]);
    assert_eq!(o.status.code(), Some(2), "{}{}", stdout(&o), stderr(&o));
    assert!(stdout(&o).contains("containment      fail"));
    let o = run(&["doa", "--w", "w.json"]);
    assert_eq!(o.status.code(), Some(0), "{}{}", stdout(&o), stderr(&o));
    assert_eq!(run(&["expand", "--w", "w.json", "--alpha", "0.1"]).status.code(), Some(0));
    assert_eq!(run(&["build", "--cert", "certificate.json", "--flow", "--out", "wf.json"]).status.code(), Some(0));
    assert_eq!(
        run(&["trace", "--system", "ring3d", "--x0", "0.3,-0.2,0.1", "--t", "5"]).status.code(),
        Some(0)
    );
    assert_eq!(run(&["export", "--w", "w.json", "--level", "0.05"]).status.code(), Some(0));
    let o = run(&[
        "check",
        "certificate.json",
        "w.json",
        "wf.json",
        "w-expanded.json",
        "doa.json",
        "doa-within.json",
        "contour.csv",
        "trajectory.csv",
        "quick.json",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert!(!stdout(&o).contains("FAIL"));
}

#[test]
fn flags_override_the_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(
        d.join("cfg.json"),
        r#"{"system":"ring3d","P":{"type":"identity"},"d":0.3,"budgets":{"ftGrid":9,"multistarts":1}}"#,
    )
    .unwrap();
    let o = lyapgen(d, &["verify", "--config", "cfg.json", "--d", "0.2"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let cert: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(d.join("certificate.json")).unwrap()).unwrap();
    assert_eq!(cert["d"], serde_json::json!(0.2));
}

#[test]
fn check_flags_an_edited_file() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("quick.json"), QUICK).unwrap();
    let o = lyapgen(
        d,
        &["verify", "--config", "quick.json", "--system", "ring3d", "--p", "identity", "--d", "0.2"],
    );
    assert_eq!(o.status.code(), Some(0));
    let path = d.join("certificate.json");
    let text = std::fs::read_to_string(&path).unwrap();
    std::fs::write(&path, text.replacen("\"d\": 0.2", "\"d\": 0.3", 1)).unwrap();
    let o = lyapgen(d, &["check", "certificate.json"]);
    assert_eq!(o.status.code(), Some(2), "{}", stdout(&o));
    std::fs::write(d.join("junk.json"), "{\"C_V\": true}").unwrap();
    assert_eq!(lyapgen(d, &["check", "junk.json"]).status.code(), Some(1));
}

#[test]
fn reproduce_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    for out in ["a", "b"] {
        let o = lyapgen(d, &["reproduce", "5.2", "--seed", "42", "--out-dir", out]);
        assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    }
    let a = std::fs::read(d.join("a/report-5.2.json")).unwrap();
    let b = std::fs::read(d.join("b/report-5.2.json")).unwrap();
    assert_eq!(a, b);
    let o = lyapgen(d, &["check", "a/report-5.2.json"]);
    assert_eq!(o.status.code(), Some(0));
}

#[test]
fn reproduce_rejects_unknown_examples() {
    let dir = tempfile::tempdir().unwrap();
    let o = lyapgen(dir.path(), &["reproduce", "5.9"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn thread_cap_must_be_positive() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_lyapgen"))
        .args(["equilibria", "--system", "ring3d"])
        .current_dir(dir.path())
        .env("LYAPGEN_THREADS", "0")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(1));
}
