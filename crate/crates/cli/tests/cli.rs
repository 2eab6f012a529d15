use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use relu_sgd_lab::output::TRAJECTORY_HEADER;
use relu_sgd_lab::verify::Falsifier;
use serde_json::Value;

const BIN: &str = env!("CARGO_BIN_EXE_relu-sgd-lab");
const CONFIGS: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/configs");
const GOLDEN: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/golden");

fn lab(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn small_config(dir: &Path, mode: &str) -> std::path::PathBuf {
    let text = format!(
        r#"{{
  "run": {{
    "shape": {{ "d": 1, "hidden": 3 }},
    "init": {{ "kind": "uniform", "low": -0.5, "high": 0.5 }},
    "distribution": {{ "kind": "uniform_box", "a": 0.0, "b": 1.0, "d": 1 }},
    "xi": 1.0,
    "schedule": {{ "kind": {{ "kind": "constant" }}, "step": {{ "fraction_of_bound": 0.5 }}, "horizon": 200 }},
    "batch_sizes": {{ "constant": 4 }},
    "seed": 9,
    "mode": "{mode}",
    "true_risk_every": 50
  }}
}}"#
    );
    let path = dir.join(format!("{mode}.json"));
    fs::write(&path, text).unwrap();
    path
}

fn sorted_keys(v: &Value) -> Vec<String> {
    let mut keys: Vec<String> = v.as_object().unwrap().keys().cloned().collect();
    keys.sort();
    keys
}

fn golden_lines(name: &str) -> Vec<String> {
    let mut lines: Vec<String> = fs::read_to_string(Path::new(GOLDEN).join(name))
        .unwrap()
        .lines()
        .map(String::from)
        .collect();
    lines.sort();
    lines
}

#[test]
fn repro_listing_default_is_golden() {
    let o = lab(&["repro-listing"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let s = stdout(&o);
    assert!(s.contains("gradient with respect to w: [0.0, 0.0, 64.0]"), "{s}");
    assert!(s.contains("gradient with respect to b: [0.0, 0.0, 32.0]"), "{s}");
    assert!(s.contains("gradient with respect to v: [0.0, 0.0, 64.0]"), "{s}");
    assert!(s.contains("gradient with respect to c: [16.0]"), "{s}");
    assert!(s.contains("matches reference listing"));
}

#[test]
fn repro_listing_variants_are_marked() {
    let o = lab(&["repro-listing", "--xi", "0"]);
    assert_eq!(o.status.code(), Some(0));
    let s = stdout(&o);
    assert!(s.contains("gradient with respect to c: [22.0]"), "{s}");
    assert!(s.contains("non-golden"), "{s}");

    let tmp = tempfile::tempdir().unwrap();
    let o = lab(&["repro-listing", "--x", "3", "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("pre-activations: [-1.0, 1.0, 6.0]"));
    let rep: Value = serde_json::from_str(&fs::read_to_string(tmp.path().join("listing.json")).unwrap()).unwrap();
    assert_eq!(rep["golden_input"], Value::Bool(false));
    assert!(!rep["diffs"].as_array().unwrap().is_empty());
}

#[test]
fn run_writes_schema_stable_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    for mode in ["gd", "sgd"] {
        let cfg = small_config(tmp.path(), mode);
        let out = tmp.path().join(format!("out-{mode}"));
        let o = lab(&["run", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));

        let csv = fs::read_to_string(out.join("trajectory.csv")).unwrap();
        let golden_header = fs::read_to_string(Path::new(GOLDEN).join("trajectory_header.csv")).unwrap();
        assert_eq!(csv.lines().next().unwrap(), golden_header.trim_end());
        assert_eq!(golden_header.trim_end(), TRAJECTORY_HEADER.join(","));
        assert_eq!(csv.lines().count(), 201);

        let mut reader = csv::Reader::from_path(out.join("trajectory.csv")).unwrap();
        let mut prev_v = f64::INFINITY;
        for (n, rec) in reader.records().enumerate() {
            let rec = rec.unwrap();
            assert_eq!(rec[0].parse::<usize>().unwrap(), n);
            let v: f64 = rec[4].parse().unwrap();
            assert!(v <= prev_v + 1e-9);
            prev_v = v;
            match mode {
                "gd" => assert!(rec[2].is_empty() && !rec[3].is_empty()),
                _ => {
                    assert!(!rec[2].is_empty());
                    assert_eq!(rec[3].is_empty(), n % 50 != 0);
                }
            }
        }

        let summary: Value = serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
        assert_eq!(sorted_keys(&summary), golden_lines("summary_keys.txt"));
        assert_eq!(sorted_keys(&summary["bounds"]), golden_lines("bounds_keys.txt"));
        assert_eq!(summary["seed"], 9);
        assert_eq!(summary["v_monotone"], true);
        assert_eq!(summary["config_hash"].as_str().unwrap().len(), 64);
        assert!(out.join("config.json").exists());
    }
}

#[test]
fn seed_flag_overrides_config_and_changes_hash() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path(), "sgd");
    let read = |dir: &str, seed: &str| {
        let out = tmp.path().join(dir);
        let o = lab(&["run", "--config", cfg.to_str().unwrap(), "--seed", seed, "--out", out.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        serde_json::from_str::<Value>(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap()
    };
    let a = read("a", "11");
    let b = read("b", "12");
    assert_eq!(a["seed"], 11);
    assert_ne!(a["config_hash"], b["config_hash"]);
}

#[test]
fn seed_sweep_gets_one_directory_per_seed() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path(), "sgd");
    let out = tmp.path().join("sweep");
    let o = Command::new(BIN)
        .args(["run", "--config", cfg.to_str().unwrap(), "--seed", "4", "--trials", "3", "--out", out.to_str().unwrap()])
        .env("RELU_SGD_LAB_THREADS", "2")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    for s in 4..7 {
        assert!(out.join(format!("seed-{s}/trajectory.csv")).exists());
    }
}

#[test]
fn divergent_schedule_is_rejected() {
    let cfg = Path::new(CONFIGS).join("bad_schedule.json");
    let tmp = tempfile::tempdir().unwrap();
    let o = lab(&["run", "--config", cfg.to_str().unwrap(), "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("divergence hypothesis violated"), "{}", stderr(&o));
}

#[test]
fn unknown_keys_are_all_reported() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path(), "sgd");
    let text = fs::read_to_string(&cfg)
        .unwrap()
        .replace(r#""xi": 1.0,"#, r#""xi": 1.0, "momentum": 0.9,"#)
        .replace(r#""hidden": 3"#, r#""hidden": 3, "depth": 2"#);
    fs::write(&cfg, text).unwrap();
    let o = lab(&["run", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("run.momentum") && err.contains("run.shape.depth"), "{err}");
}

#[test]
fn missing_config_is_a_config_error() {
    let o = lab(&["run", "--config", "/nonexistent/config.json"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn bad_thread_count_is_a_config_error() {
    let o = Command::new(BIN)
        .args(["verify", "identities", "--trials", "1"])
        .env("RELU_SGD_LAB_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn verify_reports_pass_counts() {
    let o = lab(&["verify", "identities", "--seed", "1", "--trials", "100"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let s = stdout(&o);
    assert!(s.contains("identities/pairing: 100/100 pass"), "{s}");

    let o = lab(&["verify", "all", "--trials", "0"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("limits/gradient_limit_tail: 0/0 pass"));

    let o = lab(&["verify", "nonsense"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn replay_reproduces_failures() {
    let tmp = tempfile::tempdir().unwrap();
    // A negative step raises V, so the monotonicity property fails.
    let instance = serde_json::json!({
        "phi": { "shape": { "d": 1, "hidden": 1 }, "values": [1.0, 0.5, 2.0, 0.0] },
        "lower": 0.0,
        "upper": 1.0,
        "xi": 3.0,
        "batch": { "step": 0, "samples": [[0.5]] },
        "gamma": -0.1
    });
    let f = serde_json::json!({
        "suite": "identities",
        "property": "one_step_monotone",
        "seed": 3,
        "trial": 0,
        "message": "",
        "instance": instance
    });
    let path = tmp.path().join("f.json");
    fs::write(&path, f.to_string()).unwrap();
    let parsed: Falsifier = serde_json::from_str(&f.to_string()).unwrap();
    assert_eq!(parsed.property, "one_step_monotone");

    let o = lab(&["verify", "--replay", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    assert!(stderr(&o).contains("reproduced failure"));

    let mut ok = f.clone();
    ok["instance"]["gamma"] = serde_json::json!(0.001);
    fs::write(&path, ok.to_string()).unwrap();
    let o = lab(&["verify", "--replay", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
}
