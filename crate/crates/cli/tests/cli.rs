use std::process::{Command, Output};

use clap::Parser;
use levykit_cli::{run, Cli};

fn levykit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_levykit")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn in_memory(args: &[&str]) -> String {
    let cli = Cli::try_parse_from(std::iter::once("levykit").chain(args.iter().copied())).unwrap();
    let mut buf = Vec::new();
    run(&cli, &mut buf).unwrap();
    String::from_utf8(buf).unwrap()
}

#[test]
fn tails_brownian_levy_density() {
    let o = levykit(&["tails", "--spec", "bessel:1.0", "--t", "1"]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    assert!(out.starts_with("# levykit v0.1.0\n"));
    let row = out.lines().last().unwrap();
    let nu_dot: f64 = row.split(',').nth(2).unwrap().parse().unwrap();
    assert!((nu_dot - 0.398942).abs() < 1e-6);
}

#[test]
fn eigen_at_zero_gamma() {
    let out = in_memory(&["eigen", "--spec", "bessel:1.0", "--x", "1", "--gamma", "0"]);
    let row: Vec<f64> = out.lines().last().unwrap().split(',').map(|v| v.parse().unwrap()).collect();
    assert!((row[2] - 1.0).abs() < 1e-12 && (row[4] - 1.0).abs() < 1e-12, "{out}");
    let series = in_memory(&["eigen", "--spec", "brownian", "--x", "1", "--gamma", "0,10", "--method", "series"]);
    let closed = in_memory(&["eigen", "--spec", "brownian", "--x", "1", "--gamma", "0,10", "--method", "closed"]);
    for (a, b) in series.lines().zip(closed.lines()).skip(3) {
        let a: f64 = a.split(',').nth(2).unwrap().parse().unwrap();
        let b: f64 = b.split(',').nth(2).unwrap().parse().unwrap();
        assert!((a - b).abs() < 1e-8);
    }
}

#[test]
fn malformed_json_reports_position() {
    let o = levykit(&["density", "--spec", "{\n  \"kind\": \"bessel\",\n  \"delta\": }", "--t", "1", "--x", "1", "--y", "1"]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8(o.stderr).unwrap();
    assert!(err.contains("line 3"), "{err}");
    assert!(err.contains("column"), "{err}");
}

#[test]
fn validation_errors_exit_2() {
    assert_eq!(levykit(&["density", "--spec", "bessel:3", "--t", "1", "--x", "1", "--y", "1"]).status.code(), Some(2));
    assert_eq!(levykit(&["tails"]).status.code(), Some(2));
    assert_eq!(levykit(&["subexp-check", "--family", "weibull:2"]).status.code(), Some(2));
    assert_eq!(levykit(&["mc", "hitting-tail", "--x", "-1", "--t", "1", "--n", "10"]).status.code(), Some(2));
}

#[test]
fn tolerance_failures_exit_3() {
    let o = levykit(&["eigen", "--spec", "brownian", "--x", "1", "--gamma", "10", "--method", "series", "--terms", "5"]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn failed_check_exits_3_after_writing() {
    // most of the mass of L_u is still below the support of h this early
    let o = levykit(&["penalize", "linfty", "--u", "0.01", "--n", "2000"]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stdout(&o).contains("weighted_cdf"));
}

#[test]
fn out_file_and_json() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("tau.json");
    let o = levykit(&["mc", "tau", "--ell", "1", "--n", "5", "--format", "json", "--out", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    assert!(o.stdout.is_empty());
    let doc: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(doc["rows"].as_array().unwrap().len(), 5);
    assert_eq!(doc["columns"][2], "value");
    assert_eq!(doc["rows"][0]["level"], 1.0);
}

#[test]
fn same_seed_same_bytes() {
    let args = ["penalize", "--weight", r#"{"kind":"triangular","k":2}"#, "mean", "--u", "1", "--n", "5000", "--seed", "3"];
    assert_eq!(in_memory(&args), in_memory(&args));
    let other = ["penalize", "--weight", r#"{"kind":"triangular","k":2}"#, "mean", "--u", "1", "--n", "5000", "--seed", "4"];
    assert_ne!(in_memory(&args), in_memory(&other));
}

#[test]
fn subexp_csv_family() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("tail.csv");
    let rows: String = (0..=400).map(|i| {
        let x = 10f64.powf(-2.0 + 8.0 * i as f64 / 400.0);
        format!("{x},{}\n", 1f64.min(x.powf(-0.5)))
    }).collect();
    std::fs::write(&path, format!("x,tail\n{rows}")).unwrap();
    let family = format!("csv:{}", path.display());
    let out = in_memory(&["subexp-check", "--family", &family, "--x", "10000"]);
    let ratio: f64 = out.lines().last().unwrap().split(',').nth(3).unwrap().parse().unwrap();
    assert!((ratio - 2.0).abs() < 0.05, "{out}");
}
