use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};
use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_lyapgauge"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn write_config(dir: &Path, name: &str, cfg: &Value) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, serde_json::to_string_pretty(cfg).unwrap()).unwrap();
    p
}

fn run_cfg(cmd: &str, cfg: &Path, out: &Path) -> Output {
    run(&[cmd, "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()])
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn diagonal() -> Value {
    json!({
        "schema_version": 1,
        "base": { "n_points": 1 },
        "generators": { "kind": "constant", "matrix": [[3.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0 / 3.0]] }
    })
}

fn positive(seed: u64) -> Value {
    json!({
        "schema_version": 1,
        "seed": seed,
        "base": { "n_points": 5, "cycles": [[0, 1, 2], [3, 4]] },
        "generators": { "kind": "sampler", "family": { "family": "totally-positive", "d": 3 } },
        "weights": [[1.0, 0.0], [1.0, 2.0]],
        "theta": [],
        "derivative": { "scan": { "t_min": -0.05, "t_max": 0.05, "points": 3 } }
    })
}

fn rotation() -> Value {
    json!({
        "schema_version": 1,
        "base": { "n_points": 1 },
        "generators": { "kind": "constant", "matrix": [[0.8, -0.6], [0.6, 0.8]] },
        "theta": [],
        "solver": { "max_iter": 100 }
    })
}

#[test]
fn diagonal_spectrum_row() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "c.json", &diagonal());
    let out = tmp.path().join("out");
    let o = run_cfg("spectrum", &cfg, &out);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let mut rdr = csv::Reader::from_path(out.join("spectrum.csv")).unwrap();
    let header: Vec<String> = rdr.headers().unwrap().iter().map(String::from).collect();
    assert_eq!(header, ["x", "h_1", "h_2", "h_3", "gap_1", "gap_2"]);
    let rows: Vec<csv::StringRecord> = rdr.records().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), 1);
    let v: Vec<f64> = rows[0].iter().skip(1).map(|s| s.parse().unwrap()).collect();
    let l3 = 3f64.ln();
    let want = [l3, 0.0, -l3, l3, l3];
    for (a, b) in v.iter().zip(want) {
        assert!((a - b).abs() < 1e-12, "{v:?}");
    }
    let j: Value = serde_json::from_str(&std::fs::read_to_string(out.join("spectrum.json")).unwrap()).unwrap();
    assert_eq!(j["report"]["theta"]["indices"], json!([]));
    assert!((j["functionals"][0]["value"].as_f64().unwrap() - l3).abs() < 1e-12);
}

#[test]
fn outputs_are_reproducible() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "c.json", &positive(5));
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for cmd in ["spectrum", "section", "derivative"] {
        for dir in [&a, &b] {
            let o = run_cfg(cmd, &cfg, dir);
            assert_eq!(o.status.code(), Some(0), "{cmd}: {}", stderr(&o));
        }
    }
    for f in ["spectrum.json", "spectrum.csv", "section.json", "derivative.json", "derivative_scan.csv"] {
        let x = std::fs::read(a.join(f)).unwrap();
        let y = std::fs::read(b.join(f)).unwrap();
        assert!(x == y, "{f} differs between runs");
    }
    // a different seed gives a different cocycle
    let c = tmp.path().join("c");
    let o = run(&["spectrum", "--config", cfg.to_str().unwrap(), "--out", c.to_str().unwrap(), "--seed", "6"]);
    assert_eq!(o.status.code(), Some(0));
    assert_ne!(std::fs::read(a.join("spectrum.csv")).unwrap(), std::fs::read(c.join("spectrum.csv")).unwrap());
}

#[test]
fn section_report_contents() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "c.json", &positive(9));
    let out = tmp.path().join("out");
    let o = run_cfg("section", &cfg, &out);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let j: Value = serde_json::from_str(&std::fs::read_to_string(out.join("section.json")).unwrap()).unwrap();
    assert!(j["attractor"]["residual"].as_f64().unwrap() <= 1e-10);
    assert!(j["repeller"]["residual"].as_f64().unwrap() <= 1e-10);
    assert_eq!(j["all_transversal"], json!(true));
    assert_eq!(j["attractor"]["section"]["flags"].as_array().unwrap().len(), 5);
    // resolved sampler seed is echoed
    assert_eq!(j["config"]["generators"]["seed"], json!(9));
}

#[test]
fn zero_gauge_has_zero_derivative() {
    let tmp = TempDir::new().unwrap();
    let mut cfg = positive(2);
    cfg["gauge"] = json!({ "kind": "zero" });
    let cfg = write_config(tmp.path(), "c.json", &cfg);
    let out = tmp.path().join("out");
    let o = run_cfg("derivative", &cfg, &out);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let j: Value = serde_json::from_str(&std::fs::read_to_string(out.join("derivative.json")).unwrap()).unwrap();
    for w in j["weights"].as_array().unwrap() {
        assert_eq!(w["analytic"].as_f64().unwrap(), 0.0);
        assert_eq!(w["iwasawa_formula"].as_f64().unwrap(), 0.0);
        assert_eq!(w["finite_differences"][0]["slope"].as_f64().unwrap(), 0.0);
    }
}

#[test]
fn derivative_agrees_with_finite_differences() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "c.json", &positive(4));
    let out = tmp.path().join("out");
    let o = run_cfg("derivative", &cfg, &out);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let j: Value = serde_json::from_str(&std::fs::read_to_string(out.join("derivative.json")).unwrap()).unwrap();
    for w in j["weights"].as_array().unwrap() {
        assert!(w["residual"].as_f64().unwrap() < 1e-6, "{w}");
    }
    let rows = csv::Reader::from_path(out.join("derivative_scan.csv")).unwrap().records().count();
    assert_eq!(rows, 3);
}

#[test]
fn semigroup_report() {
    let tmp = TempDir::new().unwrap();
    let cfg = json!({
        "schema_version": 1,
        "seed": 1,
        "base": { "n_points": 4, "cycles": [[0, 1, 2, 3]] },
        "generators": { "kind": "sampler", "family": { "family": "symplectic-q", "n": 2 } },
        "ambient": { "symplectic_n": 2 },
        "weights": [[1.0, 0.0, 0.0]]
    });
    let cfg = write_config(tmp.path(), "c.json", &cfg);
    let out = tmp.path().join("out");
    let o = run_cfg("semigroup", &cfg, &out);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let j: Value = serde_json::from_str(&std::fs::read_to_string(out.join("semigroup.json")).unwrap()).unwrap();
    assert_eq!(j["report"]["contained"], json!(true));
    assert!(j["report"]["pairing_defect"].as_f64().unwrap() < 1e-8);
}

#[test]
fn usage_errors_exit_1() {
    assert_eq!(run(&[]).status.code(), Some(1));
    assert_eq!(run(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(run(&["spectrum"]).status.code(), Some(1));
    assert_eq!(run(&["spectrum", "--config", "x.json", "--seed", "abc"]).status.code(), Some(1));
    assert_eq!(run(&["--help"]).status.code(), Some(0));
}

#[test]
fn malformed_permutation_exits_2() {
    let tmp = TempDir::new().unwrap();
    let mut cfg = positive(1);
    cfg["base"]["cycles"] = json!([[0, 1], [1, 2]]);
    let cfg = write_config(tmp.path(), "c.json", &cfg);
    let o = run_cfg("spectrum", &cfg, &tmp.path().join("out"));
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("base"), "{}", stderr(&o));
}

#[test]
fn syntax_errors_report_line() {
    let tmp = TempDir::new().unwrap();
    let p = tmp.path().join("c.json");
    std::fs::write(&p, "{\n  \"schema_version\": 1,\n  \"base\": { \"n_points\": 1 },\n  \"generators\": [\n}\n").unwrap();
    let o = run_cfg("spectrum", &p, &tmp.path().join("out"));
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("c.json:5:"), "{}", stderr(&o));

    // bad matrices are caught while parsing, with a position
    let mut cfg = diagonal();
    cfg["generators"]["matrix"] = json!([[1.0, 2.0], [3.0]]);
    let p = write_config(tmp.path(), "d.json", &cfg);
    let o = run_cfg("spectrum", &p, &tmp.path().join("out"));
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("d.json:"), "{}", stderr(&o));

    let mut cfg = diagonal();
    cfg["bogus"] = json!(1);
    let p = write_config(tmp.path(), "e.json", &cfg);
    let o = run_cfg("spectrum", &p, &tmp.path().join("out"));
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("bogus"), "{}", stderr(&o));
}

#[test]
fn semantic_errors_exit_2() {
    let tmp = TempDir::new().unwrap();
    let cases = [
        ("schema_version", json!(2)),
        ("generators", json!({ "kind": "constant", "matrix": [[2.0, 0.0], [0.0, 1.0]] })),
        ("weights", json!([[1.0]])),
        ("theta", json!([3])),
        ("solver", json!({ "tol": -1.0 })),
        ("base", json!({ "n_points": 2, "weights": [1.0, -1.0] })),
    ];
    for (k, (key, val)) in cases.into_iter().enumerate() {
        let mut cfg = diagonal();
        cfg[key] = val;
        let p = write_config(tmp.path(), &format!("c{k}.json"), &cfg);
        let o = run_cfg("section", &p, &tmp.path().join("out"));
        assert_eq!(o.status.code(), Some(2), "{key}: {}", stderr(&o));
    }
}

#[test]
fn non_symplectic_gauge_exits_2() {
    let tmp = TempDir::new().unwrap();
    let cfg = json!({
        "schema_version": 1,
        "base": { "n_points": 1 },
        "generators": { "kind": "constant", "matrix": [[2.0, 0.0], [0.0, 0.5]] },
        "ambient": { "symplectic_n": 1 },
        "gauge": { "kind": "explicit", "matrices": [[[0.0, 1.0], [1.0, 0.0]]] }
    });
    // in sp(2) = sl(2) every traceless matrix is Hamiltonian
    let p = write_config(tmp.path(), "ok.json", &cfg);
    assert_eq!(run_cfg("derivative", &p, &tmp.path().join("out")).status.code(), Some(0));

    let mut cfg = cfg;
    cfg["ambient"] = json!({ "symplectic_n": 2 });
    let p = write_config(tmp.path(), "bad.json", &cfg);
    assert_eq!(run_cfg("derivative", &p, &tmp.path().join("out")).status.code(), Some(2));
}

#[test]
fn rotation_section_exits_3_with_history() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "c.json", &rotation());
    let out = tmp.path().join("out");
    let o = run_cfg("section", &cfg, &out);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    let j: Value = serde_json::from_str(&std::fs::read_to_string(out.join("section_failure.json")).unwrap()).unwrap();
    assert_eq!(j["status"], json!("no-convergence"));
    assert!(!j["history"].as_array().unwrap().is_empty());
    assert!(j["last_residual"].as_f64().unwrap() > 1e-3);
}

#[test]
fn inadmissible_weight_exits_4() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "c.json", &rotation());
    let o = run_cfg("derivative", &cfg, &tmp.path().join("out"));
    assert_eq!(o.status.code(), Some(4), "{}", stderr(&o));
}

#[test]
fn missing_config_exits_6() {
    let tmp = TempDir::new().unwrap();
    let o = run_cfg("spectrum", &tmp.path().join("nope.json"), &tmp.path().join("out"));
    assert_eq!(o.status.code(), Some(6));
}

#[test]
fn semigroup_rejects_non_interior_generators() {
    let tmp = TempDir::new().unwrap();
    let mut cfg = diagonal();
    cfg["semigroup"] = json!({ "family": "cone-positive", "d": 3 });
    let p = write_config(tmp.path(), "c.json", &cfg);
    let o = run_cfg("semigroup", &p, &tmp.path().join("out"));
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn verify_subset_and_failures() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("out");
    let o = run(&["verify", "--criterion", "2,4", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert_eq!(stdout.lines().filter(|l| l.contains(" PASS ")).count(), 2);
    let first = std::fs::read(out.join("verify.json")).unwrap();
    let o = run(&["verify", "--criterion", "2,4", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(first, std::fs::read(out.join("verify.json")).unwrap());

    // an impossible tolerance fails criterion 4 and names it
    let p = write_config(tmp.path(), "suite.json", &json!({ "fiber_tol": 1e-30 }));
    let o = run(&["verify", "--config", p.to_str().unwrap(), "--criterion", "4", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(7));
    assert!(String::from_utf8_lossy(&o.stdout).contains("criterion  4 FAIL"));
    assert!(stderr(&o).contains("[4]"), "{}", stderr(&o));
    let j: Value = serde_json::from_str(&std::fs::read_to_string(out.join("verify.json")).unwrap()).unwrap();
    assert_eq!(j["all_passed"], json!(false));

    assert_eq!(run(&["verify", "--criterion", "11", "--out", out.to_str().unwrap()]).status.code(), Some(1));
    let p = write_config(tmp.path(), "bad.json", &json!({ "no_such_field": 1 }));
    assert_eq!(run(&["verify", "--config", p.to_str().unwrap(), "--out", out.to_str().unwrap()]).status.code(), Some(2));
}
