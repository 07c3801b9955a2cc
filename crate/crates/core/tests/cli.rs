use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn tunneltime(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tunneltime")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn two_path_readings_are_exact() {
    for (a2, expected) in [("-0.25", "# 0.0"), ("-0.499", "# 498.0")] {
        let o = tunneltime(&["two-path", "--A1", "0.5", "--tau1", "1", "--A2", a2, "--tau2", "2"]);
        assert!(o.status.success());
        assert_eq!(stdout(&o).lines().last().unwrap(), expected);
    }
}

#[test]
fn free_running_clock_preset() {
    let o = tunneltime(&["clock", "--preset", "free-running", "--j", "1", "--T", "3", "--format", "json"]);
    assert!(o.status.success());
    let body: String = stdout(&o).lines().filter(|l| !l.starts_with('#')).collect();
    let v: serde_json::Value = serde_json::from_str(&body).unwrap();
    let t = v["T_SWP"].as_f64().unwrap();
    assert!((t - 3.0).abs() < 0.02, "T_SWP {t}");
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let path = dir.path().join(name);
        let o = tunneltime(&[
            "taudist", "--barrier", "1,1", "--grid", "-40,40,512", "--packet", "-6,1.8,1.5", "--T", "6", "--dt", "0.01",
            "--n-lambda", "256", "--threads", "2", "--out", path.to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        (fs::read(&path).unwrap(), fs::read(dir.path().join(format!("{name}.meta.json"))).unwrap())
    };
    assert_eq!(run("a.csv"), run("b.csv"));
}

#[test]
fn config_file_runs_like_flags() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("c.csv");
    let cfg = dir.path().join("cfg.json");
    let body = serde_json::json!({
        "command": "ctime",
        "parameters": { "barrier": [1, 2], "p": [1, 1.5] },
        "output": { "path": out, "format": "csv" },
        "seed": 4
    });
    fs::write(&cfg, body.to_string()).unwrap();
    assert!(tunneltime(&["run", cfg.to_str().unwrap()]).status.success());
    let direct = tunneltime(&["ctime", "--barrier", "1,2", "--p", "1,1.5"]);
    let expected: String = stdout(&direct).lines().filter(|l| !l.starts_with('#')).map(|l| format!("{l}\n")).collect();
    assert_eq!(fs::read_to_string(&out).unwrap(), expected);
}

fn write(dir: &Path, name: &str, body: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn exit_codes_follow_error_categories() {
    let dir = tempfile::tempdir().unwrap();
    let unknown = write(dir.path(), "u.json", r#"{"command":"ctime","params":{}}"#);
    assert_eq!(tunneltime(&["run", &unknown]).status.code(), Some(2));
    let bad_param = write(dir.path(), "b.json", r#"{"command":"ctime","parameters":{"barier":[1,2]}}"#);
    assert_eq!(tunneltime(&["run", &bad_param]).status.code(), Some(2));
    assert_eq!(tunneltime(&["ctime", "--barrier", "1,1", "--p", "abc"]).status.code(), Some(2));
    // packet runs into the grid edge
    let o = tunneltime(&["dwell", "--barrier", "3,1", "--grid", "-10,10,256", "--T", "30"]);
    assert_eq!(o.status.code(), Some(3));
    let o = tunneltime(&["taudist", "--step", "1", "--p", "1"]);
    assert_eq!(o.status.code(), Some(4));
}

#[test]
fn presets_are_listed() {
    let o = tunneltime(&["presets", "--format", "json"]);
    assert!(o.status.success());
    let body: String = stdout(&o).lines().filter(|l| !l.starts_with('#')).collect();
    let v: serde_json::Value = serde_json::from_str(&body).unwrap();
    assert!(v.as_array().unwrap().len() >= 13);
    let o = tunneltime(&["preset", "step-equality"]);
    assert!(o.status.success());
    assert_eq!(tunneltime(&["preset", "nope"]).status.code(), Some(2));
}

#[test]
fn clock_experiment_file_matches_flags() {
    let dir = tempfile::tempdir().unwrap();
    let body = serde_json::json!({
        "potential": { "segments": [{ "x_lo": 0.0, "x_hi": 1.0, "height": 3.0 }] },
        "omega_region": [0.0, 1.0],
        "clock": { "j": 1, "gamma": "beta0" },
        "postselect": "all",
        "times": [0.0, 18.0],
        "packet": [-15.0, 2.0, 2.5],
        "grid": { "x_min": -64.0, "x_max": 64.0, "n_points": 1024 },
        "dt": 0.005
    });
    let file = write(dir.path(), "clock.json", &body.to_string());
    let a = tunneltime(&["clock", "--experiment", &file]);
    let b = tunneltime(&["clock", "--barrier", "3,1", "--grid", "-64,64,1024", "--dt", "0.005"]);
    assert!(a.status.success(), "{}", String::from_utf8_lossy(&a.stderr));
    assert_eq!(a.stdout, b.stdout);

    let mut bad = body.clone();
    bad["clock"]["pointer"] = serde_json::json!("beta0");
    let file = write(dir.path(), "bad.json", &bad.to_string());
    assert_eq!(tunneltime(&["clock", "--experiment", &file]).status.code(), Some(2));
}
