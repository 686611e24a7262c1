use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::time::Instant;

use ndarray::Array2;
use serde_json::Value;
use tempfile::TempDir;

use ralasso::io::read_dataset;
use ralasso::optimizer::composite_gradient_descent;
use ralasso::regression::{estimate_sigma2_cv, predict};
use ralasso::report::format_f64;
use ralasso::{Dataset, FitConfig, LossSpec};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_ralasso"));
    c.env_remove("RML_SEED");
    c
}

fn run(cmd: &mut Command) -> Output {
    cmd.output().expect("binary runs")
}

fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "exit {:?}: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
}

/// Deterministic pseudo-random data without pulling in an RNG.
fn write_dataset(dir: &Path, n: usize, p: usize) -> PathBuf {
    let mut state = 0x9e3779b97f4a7c15u64;
    let mut next = || {
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        (state >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
    };
    let x = Array2::from_shape_fn((n, p), |_| next());
    let y: Vec<f64> = (0..n)
        .map(|i| 2.0 * x[[i, 0]] - 1.5 * x[[i, 1]] + 0.3 * next() + if i % 9 == 0 { 6.0 } else { 0.0 })
        .collect();
    let mut s = String::from("y");
    for j in 0..p {
        s.push_str(&format!(",x{j}"));
    }
    s.push('\n');
    for i in 0..n {
        s.push_str(&format_f64(y[i]));
        for j in 0..p {
            s.push(',');
            s.push_str(&format_f64(x[[i, j]]));
        }
        s.push('\n');
    }
    let path = dir.join("data.csv");
    fs::write(&path, s).unwrap();
    path
}

fn json_file(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn floats(v: &Value) -> Vec<f64> {
    v.as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect()
}

fn body_lines(csv: &str) -> Vec<&str> {
    csv.lines().filter(|l| !l.starts_with('#')).collect()
}

#[test]
fn fit_then_predict_matches_library_exactly() {
    let dir = TempDir::new().unwrap();
    let data = write_dataset(dir.path(), 60, 8);
    let fit_json = dir.path().join("fit.json");
    ok(&run(bin()
        .args([
            "fit", "--method", "ra-lasso", "--alpha", "0.5", "--lambda", "0.05", "-o",
        ])
        .arg(&fit_json)
        .arg(&data)));
    let pred_csv = dir.path().join("pred.csv");
    ok(&run(bin()
        .arg("predict")
        .arg("--fit")
        .arg(&fit_json)
        .arg("-o")
        .arg(&pred_csv)
        .arg(&data)));

    let d = read_dataset(&data).unwrap();
    let cfg = FitConfig {
        lambda: 0.05,
        ..FitConfig::default()
    };
    let fit = composite_gradient_descent(&LossSpec::ra_quadratic(0.5).unwrap(), d.x(), d.y(), &cfg).unwrap();
    let doc = json_file(&fit_json);
    let beta = floats(&doc["beta"]);
    for (a, b) in beta.iter().zip(fit.beta.iter()) {
        assert_eq!(a.to_bits(), b.to_bits());
    }
    assert_eq!(doc["iterations"].as_u64().unwrap() as usize, fit.iterations);
    assert_eq!(doc["method"], "ra-lasso");
    assert_eq!(doc["provenance"]["command"], "fit");
    assert!(doc["provenance"]["rng"].as_str().unwrap().contains("ChaCha20"));

    let want = predict(fit.beta.view(), d.x()).unwrap();
    let text = fs::read_to_string(&pred_csv).unwrap();
    let lines = body_lines(&text);
    assert_eq!(lines[0], "prediction");
    let got: Vec<f64> = lines[1..].iter().map(|l| l.parse().unwrap()).collect();
    assert_eq!(got.len(), want.len());
    for (a, b) in got.iter().zip(want.iter()) {
        assert_eq!(a.to_bits(), b.to_bits());
    }
}

#[test]
fn huge_penalty_gives_zero_and_residuals_are_sorted() {
    let dir = TempDir::new().unwrap();
    let data = write_dataset(dir.path(), 30, 4);
    let res = dir.path().join("res.csv");
    let out = run(bin()
        .args(["fit", "--method", "lasso", "--lambda", "1e9", "--residuals"])
        .arg(&res)
        .arg(&data));
    ok(&out);
    let doc: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(floats(&doc["beta"]).iter().all(|b| *b == 0.0));
    let text = fs::read_to_string(&res).unwrap();
    let vals: Vec<f64> = body_lines(&text)[1..].iter().map(|l| l.parse().unwrap()).collect();
    assert_eq!(vals.len(), 30);
    assert!(vals.windows(2).all(|w| w[0] <= w[1]));
}

#[test]
fn sigma2_matches_library_exactly() {
    let dir = TempDir::new().unwrap();
    let data = write_dataset(dir.path(), 53, 5);
    let out = run(bin()
        .args([
            "--seed", "9", "sigma2", "--k", "5", "--method", "ra-lasso", "--alpha", "1", "--lambda", "0.02",
        ])
        .arg(&data));
    ok(&out);
    let doc: Value = serde_json::from_slice(&out.stdout).unwrap();
    let d = read_dataset(&data).unwrap();
    let cfg = FitConfig {
        lambda: 0.02,
        ..FitConfig::default()
    };
    let est = estimate_sigma2_cv(&d, 5, 9, |t: &Dataset| {
        Ok(composite_gradient_descent(&LossSpec::ra_quadratic(1.0).unwrap(), t.x(), t.y(), &cfg)?.beta)
    })
    .unwrap();
    assert_eq!(doc["sigma2_hat"].as_f64().unwrap().to_bits(), est.sigma2_hat.to_bits());
    assert_eq!(doc["provenance"]["seed"], 9);

    // the environment overrides the flag
    let env = run(bin()
        .env("RML_SEED", "10")
        .args([
            "--seed", "9", "sigma2", "--k", "5", "--method", "lasso", "--lambda", "0.02",
        ])
        .arg(&data));
    ok(&env);
    let doc: Value = serde_json::from_slice(&env.stdout).unwrap();
    assert_eq!(doc["provenance"]["seed"], 10);
}

#[test]
fn mean_of_constant_column() {
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("c.csv");
    let mut s = String::from("value\n");
    for _ in 0..100 {
        s.push_str("3.25\n");
    }
    fs::write(&path, s).unwrap();
    let out = run(bin().args(["mean", "--delta", "0.05", "--v", "1.0"]).arg(&path));
    ok(&out);
    let doc: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(doc["estimate"].as_f64().unwrap(), 3.25);
    assert_eq!(doc["applicable"], true);
    assert!(doc["radius"].as_f64().unwrap() > 0.0);
}

#[test]
fn mean_with_too_few_samples_is_a_calibration_error() {
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("few.csv");
    fs::write(&path, "v\n1\n2\n3\n4\n5\n").unwrap();
    let out = run(bin().args(["mean", "--delta", "0.05"]).arg(&path));
    assert_eq!(out.status.code(), Some(3));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("24"), "{err}");
}

#[test]
fn cov_is_symmetric_two_by_two() {
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("two.csv");
    let mut s = String::from("a,b\n");
    for i in 0..300 {
        let a = ((i * 37) % 101) as f64 / 50.0 - 1.0;
        let b = 0.5 * a + ((i * 53) % 97) as f64 / 97.0 - 0.5;
        s.push_str(&format!("{a},{b}\n"));
    }
    fs::write(&path, s).unwrap();
    let out = run(bin().args(["cov", "--delta", "0.01"]).arg(&path));
    ok(&out);
    let doc: Value = serde_json::from_slice(&out.stdout).unwrap();
    let m = doc["sigma_hat"].as_array().unwrap();
    assert_eq!(m.len(), 2);
    assert_eq!(m[0][1], m[1][0]);
    assert!(m[0][0].as_f64().unwrap() > 0.0);
}

#[test]
fn ragged_csv_is_an_input_error_naming_the_line() {
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("bad.csv");
    fs::write(&path, "y,a,b\n1,2,3\n4,5\n").unwrap();
    let out = run(bin().args(["fit", "--method", "lasso", "--lambda", "0.1"]).arg(&path));
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 3"));
    let missing = run(bin().args(["fit", "--method", "lasso", "--lambda", "0.1", "/nonexistent/x.csv"]));
    assert_eq!(missing.status.code(), Some(2));
}

#[test]
fn invalid_scenario_names_the_field() {
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("s.json");
    fs::write(
        &path,
        r#"{"model":"homoscedastic","error":"lognormal","n":50,"p":20,"replications":0,"seed":1}"#,
    )
    .unwrap();
    let out = run(bin().arg("simulate").arg(&path));
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("replications"));
}

fn smoke_scenario(dir: &Path) -> PathBuf {
    let path = dir.join("scenario.json");
    fs::write(
        &path,
        r#"{"model":"heteroscedastic","error":"weibull","n":50,"p":20,
            "beta_star_spec":{"nonzero":3,"value":3.0},"replications":2,"seed":5,
            "grid":{"lambda":[0.05,0.2,0.8],"alpha":[0.2,1.0],"n_validation":3}}"#,
    )
    .unwrap();
    path
}

#[test]
fn simulate_smoke_and_worker_determinism() {
    let dir = TempDir::new().unwrap();
    let scenario = smoke_scenario(dir.path());
    let mut csvs = Vec::new();
    for workers in ["1", "8"] {
        // same file names, so the recorded flags match too
        let sub = dir.path().join(format!("w{workers}"));
        fs::create_dir(&sub).unwrap();
        let (csv, json) = ("report.csv", "report.json");
        let start = Instant::now();
        ok(&run(bin()
            .current_dir(&sub)
            .args(["--workers", workers, "simulate"])
            .arg(&scenario)
            .arg("--csv")
            .arg(csv)
            .arg("--json")
            .arg(json)));
        assert!(start.elapsed().as_secs_f64() < 10.0);
        csvs.push((
            fs::read_to_string(sub.join(csv)).unwrap(),
            fs::read_to_string(sub.join(json)).unwrap(),
        ));
    }
    assert!(csvs[0] == csvs[1], "reports differ between worker counts");
    let text = &csvs[0].0;
    for needle in ["ra-lasso,l2,", "lasso,rg_l2,", "r-lasso,fn,", "oracle,l1,", "# seed: 5"] {
        assert!(text.contains(needle), "missing {needle}");
    }
    let doc: Value = serde_json::from_str(&csvs[0].1).unwrap();
    assert!(doc["relative_gain"]["A,L"].is_object());
}

#[test]
fn tune_by_cross_validation() {
    let dir = TempDir::new().unwrap();
    let data = write_dataset(dir.path(), 80, 6);
    let out = run(bin()
        .args([
            "tune",
            "--method",
            "ra-lasso",
            "--lambdas",
            "0.01,0.1,50",
            "--alphas",
            "0.5,2",
            "--data",
        ])
        .arg(&data));
    ok(&out);
    let doc: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_ne!(doc["best"]["lambda"].as_f64().unwrap(), 50.0);
    assert_eq!(doc["scores"].as_array().unwrap().len(), 6);
}

#[test]
fn tune_on_scenario_validation_sets() {
    let dir = TempDir::new().unwrap();
    let scenario = smoke_scenario(dir.path());
    let out = run(bin().args(["tune", "--method", "lasso", "--scenario"]).arg(&scenario));
    ok(&out);
    let doc: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(doc["grid"].as_array().unwrap().len(), 3);
}
