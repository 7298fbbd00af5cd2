//! End-to-end runs of the `svjq` binary.

use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn svjq(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_svjq")).args(args).output().expect("binary runs")
}

fn write_config(dir: &Path, body: &str) -> String {
    let p = dir.join("run.cfg");
    std::fs::write(&p, body).unwrap();
    p.to_str().unwrap().to_string()
}

fn stderr_error(out: &Output) -> Value {
    let text = String::from_utf8_lossy(&out.stderr);
    let line = text.lines().last().expect("error line on stderr");
    serde_json::from_str(line).expect("stderr error is JSON")
}

fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

fn dir_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
        })
        .collect();
    v.sort();
    v
}

#[test]
fn poly_ladder_writes_comparison_table() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("out");
    let res = svjq(&["price", "--engine", "poly", "--ladder", "80:120:5", "--out", out.to_str().unwrap()]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let text = std::fs::read_to_string(out.join("ladder.csv")).unwrap();
    assert!(text.starts_with("strike,benchmark,quantization,relative_error_pct\n"));
    let rows = csv_rows(&out.join("ladder.csv"));
    assert_eq!(rows.len(), 9);
    for r in &rows {
        let (b, q, e): (f64, f64, f64) = (r[1].parse().unwrap(), r[2].parse().unwrap(), r[3].parse().unwrap());
        assert!((100.0 * (q - b) / b - e).abs() < 1e-5);
        assert!(e.abs() < 1.0, "{r:?}");
    }
    let moments = csv_rows(&out.join("moments.csv"));
    assert_eq!(moments.len(), 81);
    assert_eq!(moments[0][1].parse::<f64>().unwrap(), 1.0);
    let reports: Value = serde_json::from_slice(&res.stdout).unwrap();
    assert_eq!(reports.as_array().unwrap().len(), 9);
    assert_eq!(reports[4]["method"], "poly_quant");
}

#[test]
fn series_order_zero_is_black_scholes_with_exact_weight() {
    let tmp = TempDir::new().unwrap();
    let (vol, r, s0, k) = (0.2f64, 0.03f64, 100.0f64, 105.0f64);
    let v = vol * vol;
    let mu = s0.ln() + r - 0.5 * v;
    let cfg = write_config(
        tmp.path(),
        &format!(
            "# constant variance\nv0 = {v}\ntheta = {v}\nv_max = {v}\nv_min = {}\nrho = 0\nr = {r}\n\
             engine = series\nM = 0\nmu_w = {mu}\nsigma_w = {vol}\nstrike = {k}\n",
            v / 4.0
        ),
    );
    let res = svjq(&["price", "--config", &cfg]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let report: Value = serde_json::from_slice(&res.stdout).unwrap();
    let price = report["price"].as_f64().unwrap();
    // Black–Scholes call from the closed form
    let d1 = ((s0 / k).ln() + (r + 0.5 * v)) / vol;
    let d2 = d1 - vol;
    let phi = |x: f64| 0.5 * libm_erfc(-x / std::f64::consts::SQRT_2);
    let want = s0 * phi(d1) - k * (-r).exp() * phi(d2);
    assert!((price - want).abs() < 1e-8, "{price} vs {want}");
}

/// erfc by its continued fraction and series; accurate to ~1e-15 here.
fn libm_erfc(x: f64) -> f64 {
    if x < 0.0 {
        return 2.0 - libm_erfc(-x);
    }
    if x < 2.0 {
        // erf series
        let mut sum = x;
        let mut term = x;
        let mut n = 0.0;
        while term.abs() > 1e-17 * sum.abs() {
            n += 1.0;
            term *= -x * x / n;
            sum += term / (2.0 * n + 1.0);
        }
        return 1.0 - 2.0 / std::f64::consts::PI.sqrt() * sum;
    }
    // Lentz continued fraction
    let mut f = x;
    let mut c = x;
    let mut d = 0.0;
    for n in 1..200 {
        let a = n as f64 / 2.0;
        d = 1.0 / (x + a * d);
        c = x + a / c;
        let delta = c * d;
        f *= delta;
        if (delta - 1.0).abs() < 1e-16 {
            break;
        }
    }
    (-x * x).exp() / (f * std::f64::consts::PI.sqrt())
}

#[test]
fn poly_grid_file() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("g");
    let res = svjq(&["grids", "--engine", "poly", "--out", out.to_str().unwrap()]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let rows = csv_rows(&out.join("grid.csv"));
    assert_eq!(rows.len(), 20);
    let total: f64 = rows.iter().map(|r| r[2].parse::<f64>().unwrap()).sum();
    assert!((total - 1.0).abs() < 1e-12);
    let manifest: Value = serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["files"], serde_json::json!(["grid.csv"]));
}

#[test]
fn lattice_files_are_deterministic_and_reproducible_from_manifest() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "engine = rmq\nN_V = 4\nN_S = 6\nL = 12\n");
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    let c = tmp.path().join("c");
    for dir in [&a, &b] {
        let res = svjq(&["grids", "--config", &cfg, "--out", dir.to_str().unwrap()]);
        assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    }
    let files = dir_files(&a);
    for coord in ["v_grid_", "s_grid_"] {
        assert_eq!(files.iter().filter(|f| f.0.starts_with(coord)).count(), 13);
    }
    assert_eq!(files.iter().filter(|f| f.0.starts_with("transition_")).count(), 12);
    assert_eq!(files, dir_files(&b));

    let manifest: Value = serde_json::from_slice(&std::fs::read(a.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["params_hash"].as_str().unwrap().len(), 64);
    assert_eq!(manifest["lattice"]["L"], 12);
    assert_eq!(manifest["lattice"]["N_V"], 4);
    let res = svjq(&["grids", "--config", a.join("manifest.json").to_str().unwrap(), "--out", c.to_str().unwrap()]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    assert_eq!(files, dir_files(&c));
    let res = svjq(&["grids", "--config", a.join("resolved.cfg").to_str().unwrap(), "--out", b.to_str().unwrap()]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    assert_eq!(files, dir_files(&b));

    // transition rows sum to one
    let rows = csv_rows(&a.join("transition_05.csv"));
    let mut sums = std::collections::BTreeMap::new();
    for r in rows {
        *sums.entry((r[0].clone(), r[1].clone())).or_insert(0.0) += r[4].parse::<f64>().unwrap();
    }
    assert!(sums.values().all(|s: &f64| (s - 1.0).abs() < 1e-12));
}

#[test]
fn error_study_outputs() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("e");
    let res = svjq(&["error-study", "--out", out.to_str().unwrap()]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let text = std::fs::read_to_string(out.join("err2.csv")).unwrap();
    assert!(text.starts_with("N,err2,N_err2,bound\n"));
    let err2: Vec<f64> = csv_rows(&out.join("err2.csv")).iter().map(|r| r[1].parse().unwrap()).collect();
    assert_eq!(err2.len(), 4);
    assert!(err2.windows(2).all(|w| w[1] < w[0]), "{err2:?}");
    let neg = csv_rows(&out.join("negativity.csv"));
    assert_eq!(neg.iter().map(|r| r[0].as_str()).collect::<Vec<_>>(), ["20", "40", "80"]);
    let summary: Value = serde_json::from_slice(&res.stdout).unwrap();
    assert!(summary["negative_density_at_M"].as_array().unwrap().contains(&Value::from(20)));
}

#[test]
fn empty_ladder_is_a_config_error() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "n_ladder =\n");
    let res = svjq(&["error-study", "--config", &cfg, "--out", tmp.path().join("x").to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(2));
    let e = stderr_error(&res);
    assert_eq!(e["error"]["exit_code"], 2);
    assert!(!tmp.path().join("x").exists());
}

#[test]
fn config_errors_exit_with_two() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "kappa = 1.7\nvolatility = 0.2\n");
    let res = svjq(&["price", "--config", &cfg]);
    assert_eq!(res.status.code(), Some(2));
    assert_eq!(stderr_error(&res)["error"]["code"], "unknown_key");

    let cfg = write_config(tmp.path(), "v0 = 2.0\n");
    let res = svjq(&["price", "--config", &cfg, "--engine", "series"]);
    assert_eq!(res.status.code(), Some(2));
    assert_eq!(stderr_error(&res)["error"]["code"], "invalid_params");

    let res = svjq(&["price", "--engine", "poly", "--ladder", "120:80:5"]);
    assert_eq!(res.status.code(), Some(2));
    assert_eq!(stderr_error(&res)["error"]["code"], "invalid_ladder");

    let res = svjq(&["price", "--bogus"]);
    assert_eq!(res.status.code(), Some(2));
    assert_eq!(stderr_error(&res)["error"]["code"], "usage");

    let res = svjq(&["grids", "--engine", "mc", "--out", tmp.path().join("y").to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(2));
}

#[test]
fn seeds_control_simulation_output() {
    let run = |seed: &str| svjq(&["price", "--engine", "mc", "--seed", seed, "--ladder", "90:110:10"]).stdout;
    assert_eq!(run("5"), run("5"));
    assert_ne!(run("5"), run("6"));
}

#[test]
fn bermudan_engines_run() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "kind = put\nexercise = bermudan\nN_V = 4\nN_S = 8\npaths = 20000\nsteps = 12\n");
    let rmq = svjq(&["price", "--config", &cfg, "--engine", "rmq"]);
    let ls = svjq(&["price", "--config", &cfg, "--engine", "ls"]);
    assert!(rmq.status.success() && ls.status.success(), "{}", String::from_utf8_lossy(&ls.stderr));
    let a: Value = serde_json::from_slice(&rmq.stdout).unwrap();
    let b: Value = serde_json::from_slice(&ls.stdout).unwrap();
    let (pa, pb) = (a["price"].as_f64().unwrap(), b["price"].as_f64().unwrap());
    assert!((pa - pb).abs() / pb < 0.05, "{pa} vs {pb}");
    assert_eq!(b["method"], "longstaff_schwartz");
}

#[test]
fn help_exits_cleanly() {
    let res = svjq(&["--help"]);
    assert!(res.status.success());
    assert!(String::from_utf8_lossy(&res.stdout).contains("error-study"));
}
