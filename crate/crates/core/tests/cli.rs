use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use kaczlab::cli::{cmd_run, LoadedConfig};
use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_kaczlab"))
}

fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, body).unwrap();
    path
}

fn run(args: &[&str], cfg: &Path, out: &Path) -> Output {
    bin()
        .args(args)
        .arg("--config")
        .arg(cfg)
        .arg("--out")
        .arg(out)
        .env_remove("KACZLAB_THREADS")
        .output()
        .unwrap()
}

fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<f64>>) {
    let text = std::fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap().split(',').map(String::from).collect();
    let rows = lines
        .map(|l| l.split(',').map(|t| t.parse().unwrap()).collect())
        .collect();
    (header, rows)
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn generate_gaussian_writes_matrix_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "g.json", r#"{"matrix": {"gaussian": {"m": 150, "n": 50, "seed": 1}}}"#);
    let out = dir.path().join("out");
    let o = run(&["generate"], &cfg, &out);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let manifest = read_json(&out.join("matrix.json"));
    assert_eq!(manifest["m"], 150);
    assert_eq!(manifest["n"], 50);
    assert!(manifest["sigma_min"].as_f64().unwrap() > 0.0);
    assert!(manifest["frobenius"].as_f64().unwrap() > 0.0);
    assert_eq!(manifest["generator"]["gaussian"]["seed"], 1);

    let sys = kaczlab::problems::load_system(out.join("matrix.txt")).unwrap();
    assert_eq!((sys.rows(), sys.cols()), (150, 50));
    let rel = (sys.sigma_min() - manifest["sigma_min"].as_f64().unwrap()).abs() / sys.sigma_min();
    assert!(rel < 1e-9);
}

#[test]
fn generate_tomography_has_100_unknowns() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "t.json",
        r#"{"matrix": {"tomography": {"grid": 10, "angles": 15, "rays": 10}}}"#,
    );
    let o = run(&["generate"], &cfg, dir.path());
    assert!(o.status.success());
    let manifest = read_json(&dir.path().join("matrix.json"));
    assert_eq!(manifest["n"], 100);
    let m = manifest["m"].as_u64().unwrap();
    assert!((148..=150).contains(&m));
}

#[test]
fn generate_rejects_wide_matrix_with_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "g.json", r#"{"matrix": {"gaussian": {"m": 3, "n": 5, "seed": 1}}}"#);
    let o = run(&["generate"], &cfg, dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("m must be ≥ n"));
}

#[test]
fn config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let cases = [
        r#"{"matrix": {"gaussian": {"m": 6, "n": 3, "seed": 1}}, "k_max": 3, "outputs": ["exact"], "trails": 4}"#,
        r#"{"matrix": {"gaussian": {"m": 6, "n": 3, "seed": 1}}, "k_max": 3, "outputs": ["exact_avg"],
            "noise": {"fixed_norm": {"norm2": 1.0, "seed": 2}}}"#,
        r#"{"matrix": {"gaussian": {"m": 6, "n": 3, "seed": 1}}, "k_max": 3, "outputs": ["exact"],
            "noise": {"iid": {"sigma2": 0.1, "seed": 2}}, "resample_noise": true}"#,
        r#"{"matrix": {"gaussian": {"m": 6, "n": 3, "seed": 1}}, "outputs": ["exact"]}"#,
        r#"{"matrix": {"gaussian": {"m": 6, "n": 3, "seed": 1}}, "k_max": 3, "outputs": ["exact"], "x0": {"given": [1.0]}}"#,
        "not json",
    ];
    for (i, body) in cases.iter().enumerate() {
        let cfg = write_config(dir.path(), &format!("c{i}.json"), body);
        let o = run(&["run"], &cfg, dir.path());
        assert_eq!(o.status.code(), Some(2), "case {i}: {}", String::from_utf8_lossy(&o.stderr));
    }
    let cfg = write_config(
        dir.path(),
        "conflict.json",
        r#"{"matrix": {"gaussian": {"m": 6, "n": 3, "seed": 1}}, "k_max": 3, "outputs": ["exact_avg"]}"#,
    );
    let o = run(&["run"], &cfg, dir.path());
    assert!(String::from_utf8_lossy(&o.stderr).contains("exact_avg"));
}

#[test]
fn missing_matrix_file_is_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "f.json",
        r#"{"matrix": {"file": {"path": "nope.txt"}}, "k_max": 3, "outputs": ["exact"]}"#,
    );
    let o = run(&["run"], &cfg, dir.path());
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn single_row_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "r.json",
        r#"{"matrix": {"gaussian": {"m": 8, "n": 3, "seed": 4}},
            "noise": {"fixed_norm": {"norm2": 0.5, "seed": 1}},
            "x0": {"random": {"seed": 2}}, "k_max": 0, "trials": 1,
            "outputs": ["empirical", "exact"]}"#,
    );
    let o = run(&["run"], &cfg, dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let (header, rows) = read_csv(&dir.path().join("curves.csv"));
    assert_eq!(header, ["k", "empirical", "empirical_stderr", "exact"]);
    assert_eq!(rows.len(), 1);
    let z0 = read_json(&dir.path().join("result.json"))["scalars"]["z0_norm2"].as_f64().unwrap();
    assert_eq!(rows[0][1], z0);
    assert_eq!(rows[0][3], z0);
}

#[test]
fn fixed_noise_experiment_shape_and_provenance() {
    let dir = tempfile::tempdir().unwrap();
    let body = r#"{
  "matrix": {"gaussian": {"m": 150, "n": 50, "seed": 1}},
  "noise": {"fixed_norm": {"norm2": 1.6, "seed": 2}},
  "x0": {"random": {"seed": 3}},
  "k_max": 2000,
  "trials": 50,
  "seed": 7,
  "outputs": ["empirical", "exact", "bound_zf"]
}
"#;
    let cfg = write_config(dir.path(), "a.json", body);
    let out = dir.path().join("a");
    let o = run(&["run"], &cfg, &out);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let (header, rows) = read_csv(&out.join("curves.csv"));
    assert_eq!(header, ["k", "empirical", "empirical_stderr", "exact", "bound_zf"]);
    assert_eq!(rows.len(), 2001);
    assert!(rows.iter().all(|r| r.len() == 5));
    for (k, r) in rows.iter().enumerate() {
        assert_eq!(r[0], k as f64);
        assert!(r[4] >= r[3]);
    }

    let result = read_json(&out.join("result.json"));
    assert_eq!(result["config"].as_str().unwrap(), body);
    assert!(result["version"].as_str().unwrap().starts_with("kaczlab "));
    assert!(result["finished_unix"].as_f64().unwrap() >= result["started_unix"].as_f64().unwrap());
    let s = &result["scalars"];
    assert!((s["noise_norm2"].as_f64().unwrap() - 1.6).abs() < 1e-12);
    assert!(s["limiting_mse"].as_f64().unwrap() > 0.0);
    assert!(s["zf_floor"].as_f64().unwrap() > s["limiting_mse"].as_f64().unwrap());

    let text = std::fs::read_to_string(out.join("curves.csv")).unwrap();
    let first = text.lines().nth(1).unwrap();
    let mantissa = first.split(',').nth(3).unwrap().split('e').next().unwrap();
    assert_eq!(mantissa.trim_start_matches('-').replace('.', "").len(), 17);
}

#[test]
fn averaged_noise_experiment_shape() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "b.json",
        r#"{"matrix": {"tomography": {"grid": 10, "angles": 15, "rays": 10}},
            "noise": {"iid": {"sigma2": 2.25e-4, "seed": 5}}, "resample_noise": true,
            "k_max": 3000, "trials": 10, "seed": 3,
            "outputs": ["empirical", "exact_avg", "bound_zf_avg"]}"#,
    );
    let o = run(&["run"], &cfg, dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let (header, rows) = read_csv(&dir.path().join("curves.csv"));
    assert_eq!(header, ["k", "empirical", "empirical_stderr", "exact_avg", "bound_zf_avg"]);
    assert_eq!(rows.len(), 3001);
    let s = &read_json(&dir.path().join("result.json"))["scalars"];
    assert!(s["zf_avg_ratio"].as_f64().unwrap() >= 1.0);
    assert!(s["limiting_mse"].is_null());
}

#[test]
fn output_is_deterministic_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "d.json",
        r#"{"matrix": {"gaussian": {"m": 20, "n": 5, "seed": 9}},
            "noise": {"iid": {"sigma2": 0.01, "seed": 1}}, "resample_noise": true,
            "distribution": "uniform", "x0": {"given": [1, 2, 3, 4, 5]},
            "k_max": 100, "trials": 64, "seed": 42,
            "outputs": ["empirical", "exact_avg", "floor"]}"#,
    );
    let one = dir.path().join("one");
    let four = dir.path().join("four");
    let o = run(&["run", "--threads", "1"], &cfg, &one);
    assert!(o.status.success());
    let o = bin()
        .args(["run", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&four)
        .env("KACZLAB_THREADS", "4")
        .output()
        .unwrap();
    assert!(o.status.success());
    let a = std::fs::read(one.join("curves.csv")).unwrap();
    let b = std::fs::read(four.join("curves.csv")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn non_row_norm_distribution_suppresses_classical_bounds() {
    let dir = tempfile::tempdir().unwrap();
    let raw = r#"{"matrix": {"gaussian": {"m": 12, "n": 4, "seed": 9}},
            "noise": {"fixed_norm": {"norm2": 0.3, "seed": 1}},
            "distribution": "uniform", "k_max": 20,
            "outputs": ["exact", "bound_sv", "bound_zf"]}"#;
    let loaded = LoadedConfig::from_str(raw.to_string(), dir.path().to_path_buf()).unwrap();
    let bundle = cmd_run(&loaded).unwrap();
    let names: Vec<&str> = bundle.curves.iter().map(|(k, _)| k.name()).collect();
    assert_eq!(names, ["exact", "bound_zf_general"]);
    assert_eq!(bundle.warnings.len(), 2);
    assert!(bundle.scalars.zf_floor.is_none());

    let cfg = write_config(dir.path(), "u.json", raw);
    let o = run(&["run"], &cfg, dir.path());
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("WARN"));
}

#[test]
fn file_source_resolves_relative_to_config() {
    let dir = tempfile::tempdir().unwrap();
    let fixture = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/gaussian_150x50.txt");
    std::fs::copy(&fixture, dir.path().join("a.txt")).unwrap();
    let cfg = write_config(
        dir.path(),
        "f.json",
        r#"{"matrix": {"file": {"path": "a.txt"}}, "k_max": 5, "outputs": ["bound_sv", "exact"]}"#,
    );
    let o = run(&["run"], &cfg, &dir.path().join("out"));
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let (_, rows) = read_csv(&dir.path().join("out/curves.csv"));
    assert_eq!(rows.len(), 6);
}

#[test]
fn validate_passes_and_self_test_fails() {
    let dir = tempfile::tempdir().unwrap();
    let o = bin().args(["validate", "--out"]).arg(dir.path()).output().unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let report = read_json(&dir.path().join("validation.json"));
    let checks = report["checks"].as_array().unwrap();
    assert!(checks.len() > 30);
    assert!(checks.iter().all(|c| c["pass"] == true));
    assert!(checks.iter().any(|c| c["instance"].as_str().unwrap().starts_with("scalar")));

    let o = bin()
        .args(["validate", "--corrupt-lambda-tolerance", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(1));

    let cfg = write_config(dir.path(), "v.json", r#"{"seed": 17}"#);
    let o = run(&["validate"], &cfg, dir.path());
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(read_json(&dir.path().join("validation.json"))["seed"], 17);
}
