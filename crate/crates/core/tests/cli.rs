use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn xgram(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_xgram"))
        .args(args)
        .env_remove("XGRAM_SEED")
        .output()
        .expect("binary runs")
}

fn stderr_of(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn help_and_version_exit_zero() {
    assert_eq!(xgram(&["--help"]).status.code(), Some(0));
    assert_eq!(xgram(&["--version"]).status.code(), Some(0));
}

#[test]
fn usage_errors_exit_one_with_single_line() {
    for args in [
        vec!["simulate", "--no-such-flag"],
        vec!["frobnicate"],
        vec!["simulate", "--model", "iid-t3", "--n", "100", "--workers", "0"],
        vec!["simulate", "--model", "no-such-preset", "--n", "100"],
    ] {
        let out = xgram(&args);
        assert_eq!(out.status.code(), Some(1), "{args:?}: {}", stderr_of(&out));
        assert_eq!(stderr_of(&out).trim_end().lines().count(), 1, "{args:?}");
    }
}

#[test]
fn input_and_model_are_exclusive() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("x.csv");
    fs::write(&path, "1\n2\n3\n4\n5\n").unwrap();
    let out = xgram(&["extremogram", "--input", path.to_str().unwrap(), "--model", "iid-t3", "--n", "10"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn bad_rows_exit_two_and_name_the_row() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.csv");
    fs::write(&path, "value\n1.0\n2.0\nabc\n4.0\n").unwrap();
    let out = xgram(&["extremogram", "--input", path.to_str().unwrap(), "--p0", "0.3"]);
    assert_eq!(out.status.code(), Some(2));
    let err = stderr_of(&out);
    assert_eq!(err.trim_end().lines().count(), 1);
    assert!(err.contains("row"), "{err}");

    let missing = dir.path().join("absent.csv");
    let out = xgram(&["extremogram", "--input", missing.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn numerical_failure_exits_three() {
    let model = r#"{"kind":"Garch11","omega":1e300,"alpha1":1e10,"beta1":0.0,"df":3.0,"burn_in":0}"#;
    let out = xgram(&["simulate", "--model", model, "--n", "500", "--seed", "1"]);
    assert_eq!(out.status.code(), Some(3), "{}", stderr_of(&out));
}

#[test]
fn simulate_is_byte_identical_and_honours_env_seed() {
    let args = ["simulate", "--model", "garch11", "--n", "3000", "--seed", "17"];
    let a = xgram(&args);
    let b = xgram(&args);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    let text = String::from_utf8(a.stdout.clone()).unwrap();
    assert!(text.starts_with("# xgram-config: {"));

    let env = Command::new(env!("CARGO_BIN_EXE_xgram"))
        .args(["simulate", "--model", "garch11", "--n", "3000"])
        .env("XGRAM_SEED", "17")
        .output()
        .unwrap();
    assert_eq!(env.stdout, a.stdout);
}

#[test]
fn embedded_config_reproduces_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("first");
    let out = xgram(&[
        "igram", "--model", "arma11", "--n", "1500", "--eta", "3", "--seed", "9",
        "--out", out_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr_of(&out));
    let first = fs::read_to_string(out_dir.join("igram.csv")).unwrap();
    let line = first.lines().next().unwrap();
    let json = line.strip_prefix("# xgram-config: ").unwrap();
    let cfg_path = dir.path().join("cfg.json");
    fs::write(&cfg_path, json).unwrap();
    let again = xgram(&["igram", "--config", cfg_path.to_str().unwrap()]);
    assert!(again.status.success(), "{}", stderr_of(&again));
    assert_eq!(String::from_utf8(again.stdout).unwrap(), first);
}

fn report(args: &[&str]) -> serde_json::Value {
    let out = xgram(args);
    assert!(out.status.success(), "{args:?}: {}", stderr_of(&out));
    serde_json::from_slice(&out.stdout).unwrap()
}

#[test]
fn self_centred_test_is_zero_and_accepts() {
    for cmd in ["grtest", "cvmtest"] {
        let r = report(&[cmd, "--model", "iid-t4", "--n", "2000", "--self-center", "--sources", "bridge", "--seed", "2"]);
        assert_eq!(r["statistic"].as_f64().unwrap(), 0.0);
        assert_eq!(r["reject"].as_bool(), Some(false));
    }
}

#[test]
fn grtest_reports_every_requested_source() {
    let r = report(&[
        "grtest", "--model", "iid-t3", "--n", "2000", "--null-model", "iid-t3", "--centering-reps", "40",
        "--reps", "80", "--seed", "4",
    ]);
    let cvs = r["critical_values"].as_array().unwrap();
    assert_eq!(cvs.len(), 2);
    for cv in cvs {
        assert!(cv["value"].as_f64().unwrap() > 0.0);
    }
}

fn write_example(dir: &Path, name: &str, body: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn ingests_headers_comments_and_plain_columns() {
    let dir = tempfile::tempdir().unwrap();
    let values: Vec<String> = (0..400).map(|i| format!("{}", ((i * 7919) % 401) as f64 / 13.0)).collect();
    let plain = write_example(dir.path(), "plain.csv", &(values.join("\n") + "\n"));
    let headed = write_example(dir.path(), "headed.csv", &format!("# comment\nreturn\n{}\n", values.join("\n")));
    let a = xgram(&["extremogram", "--input", &plain, "--p0", "0.1", "--max-lag", "5"]);
    let b = xgram(&["extremogram", "--input", &headed, "--p0", "0.1", "--max-lag", "5"]);
    assert!(a.status.success() && b.status.success(), "{}{}", stderr_of(&a), stderr_of(&b));
    let body = |o: &Output| String::from_utf8_lossy(&o.stdout).lines().skip(1).collect::<Vec<_>>().join("\n");
    assert_eq!(body(&a), body(&b));
}

#[test]
fn limits_table_lists_every_method() {
    let out = xgram(&["limits", "--reps", "200", "--truncation", "300", "--probabilities", "0.9,0.95"]);
    assert!(out.status.success(), "{}", stderr_of(&out));
    let text = String::from_utf8(out.stdout).unwrap();
    for method in ["gr-closed-form", "gr-series-mc", "cvm-series-mc", "cvm-chisq-derived", "cvm-chisq-quoted"] {
        assert!(text.contains(method), "{method}");
    }
}
