use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

use levy_ou::simulation::simulate_path;
use levy_ou::{LevyOUModel, RandomSource, SeriesTruncation};

fn levy_ou(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_levy-ou")).args(args).output().unwrap()
}

fn json_stdout(out: &Output) -> Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

fn assert_error(out: &Output, code: i32) -> Value {
    assert_eq!(out.status.code(), Some(code), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let err: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert!(err["error"].is_string() && err["message"].is_string());
    err
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn write_csv(path: &Path, body: &str) -> PathBuf {
    std::fs::write(path, body).unwrap();
    path.to_path_buf()
}

fn simulate(dir: &Path, name: &str, extra: &[&str]) -> PathBuf {
    let out = dir.join(name);
    let mut args = vec![
        "simulate", "--family", "gamma", "--mu", "2", "--sigma2", "0.25", "--lambda", "0.5",
        "--n", "1000", "--delta", "0.1", "--seed", "7", "--out", s(&out),
    ];
    args.extend_from_slice(extra);
    json_stdout(&levy_ou(&args));
    out
}

#[test]
fn simulate_writes_reproducible_csv() {
    let dir = tempfile::tempdir().unwrap();
    let a = simulate(dir.path(), "a.csv", &[]);
    let b = simulate(dir.path(), "b.csv", &[]);
    let text = std::fs::read_to_string(&a).unwrap();
    assert_eq!(text.lines().count(), 1001);
    assert_eq!(text.lines().next(), Some("value"));
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());

    // Values read back exactly as the library produced them.
    let model = LevyOUModel::gamma(32.0, 16.0).unwrap();
    let lib = simulate_path(&model, 0.5, 1000, 0.1, &mut RandomSource::new(7), &SeriesTruncation::default())
        .unwrap();
    let read: Vec<f64> = text.lines().skip(1).map(|l| l.parse().unwrap()).collect();
    assert_eq!(read, lib.series.values());
}

#[test]
fn thread_count_does_not_change_results() {
    let dir = tempfile::tempdir().unwrap();
    let series = simulate(dir.path(), "s.csv", &[]);
    let run = |threads: &str| {
        Command::new(env!("CARGO_BIN_EXE_levy-ou"))
            .env("LEVY_OU_THREADS", threads)
            .args(["predict", "--in", s(&series), "--delta", "0.1", "--family", "gamma", "--seed", "3"])
            .output()
            .unwrap()
    };
    let one = run("1");
    assert!(one.status.success());
    assert_eq!(one.stdout, run("0").stdout);
    assert_error(&run("many"), 2);
}

#[test]
fn simulate_manifest_and_flag_errors() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x.csv");
    let manifest = json_stdout(&levy_ou(&[
        "simulate", "--family", "ig", "--mu", "2", "--sigma2", "0.25", "--lambda", "5", "--n", "20",
        "--delta", "0.1", "--seed", "1", "--max-terms", "100", "--out", s(&out),
    ]));
    assert_eq!(manifest["schema"], 1);
    assert_eq!(manifest["command"], "simulate");
    assert_eq!(manifest["outputs"]["rows"], 20);
    assert_eq!(manifest["outputs"]["truncation_warnings"], 19);

    let base = ["simulate", "--family", "gamma", "--mu", "2", "--sigma2", "0.25", "--lambda", "0.5", "--delta", "0.1", "--seed", "1", "--out", s(&out)];
    let mut zero = base.to_vec();
    zero.extend(["--n", "0"]);
    assert_error(&levy_ou(&zero), 2);
    assert_error(&levy_ou(&["simulate", "--family", "weibull"]), 2);
    assert_error(&levy_ou(&["frobnicate"]), 2);

    let mut negative_mu = base.to_vec();
    negative_mu[4] = "-1";
    negative_mu.extend(["--n", "5"]);
    assert_eq!(assert_error(&levy_ou(&negative_mu), 3)["error"], "domain");
}

#[test]
fn estimate_hand_example() {
    let dir = tempfile::tempdir().unwrap();
    let f = write_csv(&dir.path().join("h.csv"), "value\n0\n1\n0\n1\n");
    let report = json_stdout(&levy_ou(&["estimate", "--in", s(&f), "--delta", "1", "--lags", "1"]));
    assert_eq!(report["schema"], 1);
    assert_eq!(report["mu_hat"], 0.5);
    assert_eq!(report["sigma2_hat"], 0.5);
    assert!(report["lambda1_hat"].is_null());
    assert_eq!(report["flags"]["lambda1_undefined"], true);
    assert_eq!(report["acf"]["gamma_hat"][1], -0.1875);
    assert_eq!(report["acf"]["rho_hat"][1], -0.75);
}

#[test]
fn estimate_input_errors() {
    let dir = tempfile::tempdir().unwrap();
    let empty = write_csv(&dir.path().join("e.csv"), "");
    assert_error(&levy_ou(&["estimate", "--in", s(&empty), "--delta", "1"]), 3);
    let header_only = write_csv(&dir.path().join("h.csv"), "value\n");
    assert_error(&levy_ou(&["estimate", "--in", s(&header_only), "--delta", "1"]), 3);
    let junk = write_csv(&dir.path().join("j.csv"), "value\n1\nx\n");
    assert_error(&levy_ou(&["estimate", "--in", s(&junk), "--delta", "1"]), 3);
    assert_error(&levy_ou(&["estimate", "--in", s(&dir.path().join("nope.csv")), "--delta", "1"]), 3);
    let uneven = write_csv(&dir.path().join("u.csv"), "time,value\n0,1\n1,2\n3,1\n");
    assert_error(&levy_ou(&["estimate", "--in", s(&uneven), "--lags", "1"]), 3);
    let negative = write_csv(&dir.path().join("n.csv"), "value\n1\n-1\n2\n");
    assert_error(&levy_ou(&["estimate", "--in", s(&negative), "--delta", "1", "--lags", "1", "--log"]), 3);
    assert_error(&levy_ou(&["estimate", "--in", s(&negative), "--delta", "0"]), 2);
}

#[test]
fn time_column_supplies_delta() {
    let dir = tempfile::tempdir().unwrap();
    let f = write_csv(&dir.path().join("t.csv"), "time,value\n0,0\n0.5,1\n1.0,0\n1.5,1\n");
    let report = json_stdout(&levy_ou(&["estimate", "--in", s(&f), "--lags", "1"]));
    assert_eq!(report["delta"], 0.5);
    assert_error(&levy_ou(&["estimate", "--in", s(&f), "--delta", "2", "--lags", "1"]), 3);
}

#[test]
fn estimate_round_trip_recovers_parameters() {
    let dir = tempfile::tempdir().unwrap();
    let f = simulate(dir.path(), "s.csv", &[]);
    let report = json_stdout(&levy_ou(&[
        "estimate", "--in", s(&f), "--delta", "0.1", "--lags", "10", "--ci", "0.95", "--bandwidth", "50",
    ]));
    let ses = &report["inference"]["standard_errors"];
    for (i, (key, truth)) in [("mu_hat", 2.0), ("sigma2_hat", 0.25), ("lambda2_hat", 0.5)].iter().enumerate() {
        let est = report[key].as_f64().unwrap();
        let se = ses[i].as_f64().unwrap();
        assert!(se > 0.0);
        assert!((est - truth).abs() < 3.0 * se, "{key} {est} vs {truth} (se {se})");
        let iv = &report["inference"]["intervals"][i];
        assert!(iv["lower"].as_f64().unwrap() <= est && est <= iv["upper"].as_f64().unwrap());
    }
    assert_eq!(report["inference"]["sigma_theta"].as_array().unwrap().len(), 3);
    assert_eq!(report["nonstationary"], false);
}

#[test]
fn mc_study_table_and_json() {
    let dir = tempfile::tempdir().unwrap();
    let json = dir.path().join("r.json");
    let out = levy_ou(&["mc-study", "--n-paths", "20", "--json", s(&json)]);
    assert!(out.status.success());
    let table = String::from_utf8(out.stdout.clone()).unwrap();
    let lines: Vec<&str> = table.lines().filter(|l| !l.trim().is_empty()).collect();
    assert_eq!(lines.len(), 5);
    assert!(lines[1].starts_with("mu=2"));
    assert!(lines[2].starts_with("sigma2=0.25"));
    assert!(lines[3].starts_with("lambda=0.5") && lines[4].starts_with("lambda=0.5"));

    let report: Value = serde_json::from_str(&std::fs::read_to_string(&json).unwrap()).unwrap();
    assert_eq!(report["schema"], 1);
    assert_eq!(report["config"]["n_obs"], 1000);
    assert_eq!(report["config"]["delta"], 0.1);
    assert_eq!(report["config"]["theta0"], serde_json::json!([2.0, 0.25, 0.5]));

    let again = levy_ou(&["mc-study", "--n-paths", "20"]);
    assert_eq!(out.stdout, again.stdout);
    assert_error(&levy_ou(&["mc-study", "--n-paths", "1"]), 2);
}

#[test]
fn diagnose_reports_pairs_and_ljung_box() {
    let dir = tempfile::tempdir().unwrap();
    let f = simulate(dir.path(), "s.csv", &[]);
    let plot = dir.path().join("acf.csv");
    let report = json_stdout(&levy_ou(&[
        "diagnose", "--in", s(&f), "--delta", "0.1", "--lags", "7", "--plot-data", s(&plot),
    ]));
    assert_eq!(report["acf_pairs"].as_array().unwrap().len(), 7);
    assert_eq!(report["residuals"].as_array().unwrap().len(), 999);
    assert_eq!(report["residual_acf"].as_array().unwrap().len(), 7);
    let p = report["ljung_box_squared_residuals"]["p_value"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&p));
    assert_eq!(std::fs::read_to_string(&plot).unwrap().lines().count(), 8);
}

#[test]
fn diagnose_refuses_clamped_fit() {
    // A trend sampled on a huge step gives λ̂ below the optimizer resolution.
    let dir = tempfile::tempdir().unwrap();
    let body: String = std::iter::once("value".to_string())
        .chain((0..200).map(|i| format!("{}", i as f64)))
        .collect::<Vec<_>>()
        .join("\n");
    let f = write_csv(&dir.path().join("trend.csv"), &body);
    let est = json_stdout(&levy_ou(&["estimate", "--in", s(&f), "--delta", "1e9", "--ci", "0.9"]));
    assert_eq!(est["nonstationary"], true);
    assert!(est["inference"].is_null());
    assert_error(&levy_ou(&["diagnose", "--in", s(&f), "--delta", "1e9"]), 3);
    assert_error(&levy_ou(&["predict", "--in", s(&f), "--delta", "1e9", "--family", "gamma", "--seed", "1"]), 3);
}

#[test]
fn predict_bands_are_ordered_and_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let f = simulate(dir.path(), "s.csv", &[]);
    let bands = dir.path().join("b.csv");
    let args = ["predict", "--in", s(&f), "--delta", "0.1", "--family", "gamma", "--seed", "5", "--out", s(&bands)];
    let summary = json_stdout(&levy_ou(&args));
    assert_eq!(summary["n_paths"], 50);
    let first = std::fs::read(&bands).unwrap();
    json_stdout(&levy_ou(&args));
    assert_eq!(first, std::fs::read(&bands).unwrap());

    let text = String::from_utf8(first).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("point,lower,upper"));
    let rows: Vec<Vec<f64>> = lines.map(|l| l.split(',').map(|v| v.parse().unwrap()).collect()).collect();
    assert_eq!(rows.len(), 1000);
    assert!(rows.iter().all(|r| r[1] <= r[0] && r[0] <= r[2]));
    assert_error(&levy_ou(&["predict", "--in", s(&f), "--delta", "0.1", "--family", "gamma", "--seed", "5", "--n-paths", "1"]), 2);
}

#[test]
fn help_exits_cleanly() {
    let out = levy_ou(&["--help"]);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains("simulate"));
}
