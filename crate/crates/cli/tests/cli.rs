use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn bwave(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bwave"))
        .args(args)
        .output()
        .expect("bwave runs")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path.to_string_lossy().into_owned()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

const TANH: &str = r#"
schema_version = 1
name = "tanh"
experiment = "classify"

[model]
flux = [0.0, 0.0, 0.5]
source = [0.0, 1.0, 0.0, -1.0]
u_range = [-2.0, 2.0]

[wave]
kind = "characteristic_front"
u_star = 0.0
sigma = 0.0
"#;

const MONOSTABLE: &str = r#"
schema_version = 1
name = "monostable"
experiment = "classify"

[model]
catalog = "burgers_monostable"

[wave]
kind = "smooth_front"
u_minus = 0.0
u_plus = 1.0
sigma = 2.0
"#;

/// `g = u - u³` at the unstable state 0 with a small localized bump.
const UNSTABLE_CONSTANT: &str = r#"
schema_version = 1
name = "unstable_constant"
experiment = "evolve"

[model]
catalog = "burgers_bistable"

[wave]
kind = "constant"
value = 0.0

[perturbation]
shape = { kind = "sech", amplitude = 1e-4 }

[solver]
domain = [-10.0, 10.0]
n = 401
horizon = 5.0
"#;

#[test]
fn classify_tanh_front() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "tanh.toml", TANH);
    let out = dir.path().join("out");
    let o = bwave(&["classify", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report = json(&out.join("classification.json"));
    let c = &report["classification"];
    assert_eq!(c["verdict"], "weightless_stable");
    assert_eq!(c["case_id"], "characteristic_front");
    assert_eq!(report["predictions"][0][1].as_f64(), Some(1.0));
    assert_eq!(json(&out.join("summary.json"))["schema_version"], 1);
}

#[test]
fn classify_monostable_front() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "m.toml", MONOSTABLE);
    let out = dir.path().join("out");
    assert!(
        bwave(&["classify", "--config", &cfg, "--out", out.to_str().unwrap()])
            .status
            .success()
    );
    let c = &json(&out.join("summary.json"))["classification"];
    assert_eq!(c["verdict"], "convectively_stable");
    assert_eq!(c["case_id"], "non_characteristic_front");
    assert_eq!(c["kappa_plus"][0]["kappa_plus"].as_f64(), Some(1.0));
}

#[test]
fn unstable_wave_needs_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "u.toml", UNSTABLE_CONSTANT);
    let out = dir.path().join("refused");
    let o = bwave(&["evolve", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(out.join("FAILED").exists());
    let s = json(&out.join("summary.json"));
    assert!(s["error"].as_str().unwrap().contains("--override-unstable"));
}

#[test]
fn override_reports_exploratory_growth() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "u.toml", UNSTABLE_CONSTANT);
    let out = dir.path().join("explore");
    let o = bwave(&[
        "evolve",
        "--config",
        &cfg,
        "--out",
        out.to_str().unwrap(),
        "--override-unstable",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let s = json(&out.join("summary.json"));
    assert_eq!(s["exploratory"], true);
    // g'(0) = 1
    let rate = &s["rates"][0];
    assert_eq!(rate["predicted"].as_f64(), Some(-1.0));
    let fitted = rate["fitted"].as_f64().unwrap();
    assert!((fitted + 1.0).abs() < 0.05, "fitted growth {fitted}");
    assert!(!out.join("FAILED").exists());
    for f in ["snapshots.csv", "norms.csv"] {
        assert!(fs::read_to_string(out.join(f)).unwrap().starts_with("t,"));
    }
}

#[test]
fn exact_profile_stays_put_and_runs_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let text = TANH.replace("experiment = \"classify\"", "experiment = \"evolve\"")
        + "\n[solver]\ndomain = [-8.0, 8.0]\nn = 321\nhorizon = 2.0\n";
    let cfg = write(dir.path(), "exact.toml", &text);
    let runs: Vec<_> = ["a", "b"]
        .iter()
        .map(|d| {
            let out = dir.path().join(d);
            assert!(
                bwave(&["evolve", "--config", &cfg, "--out", out.to_str().unwrap()])
                    .status
                    .success()
            );
            out
        })
        .collect();
    let s = json(&runs[0].join("summary.json"));
    assert_eq!(s["passed"], true);
    assert!(s["checks"][0]["value"].as_f64().unwrap() <= 1e-6);
    for f in ["summary.json", "norms.csv", "snapshots.csv"] {
        assert_eq!(
            fs::read(runs[0].join(f)).unwrap(),
            fs::read(runs[1].join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn decay_fits_a_series_file() {
    let dir = tempfile::tempdir().unwrap();
    let mut csv = String::from("t,norm,weight\n");
    for i in 0..=100 {
        let t = 0.1 * i as f64;
        csv.push_str(&format!("{t},{},kappa=0\n", (-t).exp()));
    }
    let series = write(dir.path(), "norms.csv", &csv);
    let out = dir.path().join("fit");
    let o = bwave(&["decay", "--series", &series, "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let r = json(&out.join("decay.json"));
    let omega = r["fits"][0]["fit"]["omega"].as_f64().unwrap();
    approx::assert_relative_eq!(omega, 1.0, epsilon = 1e-9);

    let o = bwave(&["decay", "--series", &series, "--window", "1.0,2.0"]);
    assert_eq!(o.status.code(), Some(2), "too few points in the window");
}

#[test]
fn suite_isolates_corrupt_configs() {
    let dir = tempfile::tempdir().unwrap();
    let configs = dir.path().join("configs");
    fs::create_dir(&configs).unwrap();
    write(&configs, "a_tanh.toml", TANH);
    write(&configs, "b_broken.toml", "schema_version = 1\nname = ");
    write(&configs, "c_monostable.toml", MONOSTABLE);
    let out = dir.path().join("runs");
    let o = bwave(&[
        "suite",
        "--config",
        configs.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--jobs",
        "2",
    ]);
    assert_eq!(o.status.code(), Some(1));
    let s = json(&out.join("suite.json"));
    let files: Vec<&str> = s["entries"]
        .as_array()
        .unwrap()
        .iter()
        .map(|e| e["file"].as_str().unwrap())
        .collect();
    assert_eq!(files, ["a_tanh.toml", "b_broken.toml", "c_monostable.toml"]);
    let passed: Vec<bool> = s["entries"]
        .as_array()
        .unwrap()
        .iter()
        .map(|e| e["passed"].as_bool().unwrap())
        .collect();
    assert_eq!(passed, [true, false, true]);
    assert!(out.join("b_broken").join("FAILED").exists());
    assert!(out
        .join("c_monostable")
        .join("classification.json")
        .exists());
}

#[test]
fn suite_rejects_an_empty_directory() {
    let dir = tempfile::tempdir().unwrap();
    let o = bwave(&[
        "suite",
        "--config",
        dir.path().to_str().unwrap(),
        "--out",
        dir.path().join("r").to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("no *.toml"));
}

#[test]
fn invalid_config_is_rejected_before_running() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "bad.toml",
        &TANH.replace("schema_version = 1", "schema_version = 2"),
    );
    let o = bwave(&[
        "classify",
        "--config",
        &cfg,
        "--out",
        dir.path().join("o").to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!dir.path().join("o").exists());
}
