use std::io::Write;
use std::path::Path;
use std::process::{Command, Output};

fn dosesens(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dosesens"))
        .args(args)
        .env("DOSESENS_THREADS", "2")
        .output()
        .unwrap()
}

fn data_file(dir: &Path) -> String {
    let path = dir.join("data.csv");
    let mut f = std::fs::File::create(&path).unwrap();
    writeln!(f, "set_id,unit_id,dose,outcome,x1").unwrap();
    for i in 0..30 {
        let n = 2 + i % 3;
        for j in 0..n {
            let z = ((i * 5 + j * 7) % 11) as f64 / 10.0;
            let y = z + ((i * 13 + j * 3) % 7) as f64 / 7.0;
            writeln!(f, "{i},{j},{z},{y},{}", (i + j) % 4).unwrap();
        }
    }
    path.to_string_lossy().into_owned()
}

fn json(out: &Output) -> serde_json::Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

#[test]
fn sharp_test_json_has_result_fields() {
    let dir = tempfile::tempdir().unwrap();
    let data = data_file(dir.path());
    let v = json(&dosesens(&["sharp-test", "--gamma", "1.5", &data]));
    for key in ["manifest", "gamma", "V_F", "S", "p_bound", "per_set"] {
        assert!(v.get(key).is_some(), "missing {key}");
    }
    assert_eq!(v["gamma"].as_f64(), Some(1.5));
    assert_eq!(v["manifest"]["input_sha256"].as_str().map(str::len), Some(64));
}

#[test]
fn ci_csv_header_and_rows() {
    let dir = tempfile::tempdir().unwrap();
    let data = data_file(dir.path());
    let out = dosesens(&["ci", "--gamma", "1,1.1,1.2", "--format", "csv", "--on-degenerate", "drop", &data]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "gamma,lower,upper,p_value");
    assert_eq!(lines.len(), 4);
}

#[test]
fn estimate_and_weak_test_run() {
    let dir = tempfile::tempdir().unwrap();
    let data = data_file(dir.path());
    let v = json(&dosesens(&["estimate", "--estimand", "avg-slope", "--q-covariates", "means", &data]));
    assert!(v["V_N"].as_f64().is_some());
    let v = json(&dosesens(&[
        "weak-test", "--gamma", "1.3", "--method", "vn", "--on-degenerate", "drop", &data,
    ]));
    assert!(v["p_bound"].as_f64().unwrap() >= 0.0);
    assert_eq!(v["method"], "vn");
}

#[test]
fn failures_map_to_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let data = data_file(dir.path());

    let out = dosesens(&["sharp-test", "--gamma", "1.5,1.2", &data]);
    assert_eq!(out.status.code(), Some(1));
    let err: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"], "InvalidConfig");

    let out = dosesens(&["sharp-test", "/nonexistent/data.csv"]);
    assert_eq!(out.status.code(), Some(2));

    let out = dosesens(&["sharp-test", "--out", "/nonexistent/dir/out.json", &data]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn simulate_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("sim.toml");
    std::fs::write(&cfg, "protocol = \"weak\"\n[weak]\nsets = 30\nreps = 6\ngamma = 1.4\n[box]\nrandom_starts = 2\n").unwrap();
    let cfg = cfg.to_string_lossy().into_owned();
    let a = json(&dosesens(&["simulate", "--config", &cfg, "--keep-reps"]));
    let b = json(&dosesens(&["simulate", "--config", &cfg, "--keep-reps"]));
    assert_eq!(a["vc"], b["vc"]);
    assert_eq!(a["vn"]["records"].as_array().unwrap().len(), 6);
}
