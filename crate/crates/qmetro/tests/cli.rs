use std::f64::consts::PI;
use std::fs;
use std::path::PathBuf;

use qmetro::cli::{parse_config, parse_real, parse_reals, run, EXIT_CONFIG, EXIT_NUMERICAL};

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("qmetro-cli-{}", std::process::id()));
    fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

/// Runs the driver with `--out <scratch>` and returns (status, CSV text).
fn run_to(name: &str, args: &[&str]) -> (i32, String) {
    let out = scratch(name);
    let mut full = vec!["qmetro"];
    full.extend_from_slice(args);
    let out_s = out.to_str().unwrap().to_string();
    full.push("--out");
    full.push(&out_s);
    let code = run(full);
    (code, fs::read_to_string(&out).unwrap_or_default())
}

fn csv_rows(csv: &str) -> Vec<Vec<String>> {
    csv.lines().skip(1).map(|l| l.split(',').map(str::to_string).collect()).collect()
}

fn quantity(csv: &str, key: &str) -> f64 {
    csv_rows(csv).into_iter().find(|r| r[0] == key).unwrap()[1].parse().unwrap()
}

#[test]
fn real_expressions() {
    assert!((parse_real("pi/2").unwrap() - PI / 2.0).abs() < 1e-15);
    assert!((parse_real(" 3*pi/4 ").unwrap() - 0.75 * PI).abs() < 1e-15);
    assert_eq!(parse_reals("1, 2.5,-3").unwrap(), vec![1.0, 2.5, -3.0]);
    assert!(parse_real("banana").is_err());
    assert!(parse_real("1/0").is_err());
}

#[test]
fn config_files() {
    let pairs = parse_config("# comment\ncommand = mse\n\nmc_samples = 400\ngrid_points=250\nmu_max = 3\n").unwrap();
    let keys: Vec<&str> = pairs.iter().map(|(k, _)| k.as_str()).collect();
    assert_eq!(keys, vec!["command", "samples", "grid", "mu-max"]);
    assert_eq!(pairs[1].1, "400");
    assert!(parse_config("no equals sign here").is_err());
}

#[test]
fn exit_codes() {
    assert_eq!(run(["qmetro", "mse", "--probe", "noon"]), EXIT_CONFIG, "missing seed");
    assert_eq!(run(["qmetro", "single-shot", "--probe", "cat"]), EXIT_CONFIG);
    assert_eq!(run(["qmetro", "mse", "--bogus"]), EXIT_CONFIG);
    assert_eq!(run(["qmetro", "single-shot", "--width", "pi/"]), EXIT_CONFIG);
    assert_eq!(run(["qmetro", "mse", "--config", "/nonexistent/qmetro.cfg", "--seed", "1"]), EXIT_CONFIG);
    assert_eq!(run(["qmetro", "--help"]), 0);
    // γ = 0 leaves θ₁ − θ₂ invisible: the Fisher matrix is singular.
    let (code, _) = run_to("singular.csv", &["qcrb", "--probe", "qubit_gamma", "--gamma", "0"]);
    assert_eq!(code, EXIT_NUMERICAL);
}

#[test]
fn single_shot_qubit_example() {
    let (code, csv) = run_to("qubit.csv", &["single-shot", "--probe", "qubit_gamma", "--gamma", "1", "--weights", "0.5,0.5"]);
    assert_eq!(code, 0);
    let expected = PI * PI / 48.0 - (4.0 - PI).powi(2) / (2.0 * PI * PI);
    assert!((quantity(&csv, "bound") - expected).abs() < 1e-5);
    assert!((quantity(&csv, "bound") - 0.168).abs() < 1e-3);
}

#[test]
fn network_asym_example() {
    let (code, csv) = run_to("asym.csv", &["network-asym", "--d", "2", "--geometry", "0.853"]);
    assert_eq!(code, 0);
    assert!(csv.starts_with("d,geometry,j_opt,h,error\n"));
    let row = &csv_rows(&csv)[0];
    assert!((row[2].parse::<f64>().unwrap() - 0.561).abs() < 1e-3);
}

#[test]
fn mse_example_first_row() {
    let (code, csv) = run_to(
        "mse.csv",
        &["mse", "--probe", "noon", "--pom", "counting_even", "--width", "pi/2", "--mean", "0", "--mu-max", "10", "--seed", "7"],
    );
    assert_eq!(code, 0);
    let rows = csv_rows(&csv);
    assert_eq!(rows.len(), 10);
    let (mu, e, se): (usize, f64, f64) = (rows[0][0].parse().unwrap(), rows[0][1].parse().unwrap(), rows[0][2].parse().unwrap());
    assert_eq!(mu, 1);
    // Table value ≈ 0.104 (the single-shot bound π²/48 − 1/π²).
    let bound = PI * PI / 48.0 - 1.0 / (PI * PI);
    assert!((e - bound).abs() < 3.0 * se + 1e-3 * bound, "{e} ± {se}");
    assert!((e - 0.104).abs() < 1e-3);
    // Scientific notation with six significant digits.
    assert!(rows[0][1].contains('e') && rows[0][1].split('e').next().unwrap().len() == 7);
}

#[test]
fn flags_win_over_config() {
    let cfg = scratch("win.cfg");
    fs::write(&cfg, "command = qcrb\nprobe = coherent\nmu_max = 5\n").unwrap();
    let (code, csv) = run_to("win.csv", &["--config", cfg.to_str().unwrap(), "--mu-max", "2"]);
    assert_eq!(code, 0);
    assert_eq!(csv_rows(&csv).len(), 2);
}

#[test]
fn manifest_reproduces_csv() {
    let args = ["mse", "--probe", "coherent", "--pom", "counting_even", "--mu-max", "3", "--seed", "11", "--samples", "50", "--grid", "250", "--outer", "25"];
    let (code, first) = run_to("rerun_a.csv", &args);
    assert_eq!(code, 0);
    let manifest = fs::read_to_string(scratch("rerun_a.csv.manifest")).unwrap();
    assert!(manifest.starts_with("command = mse\n"));
    assert!(manifest.contains("seed = 11"));
    assert!(manifest.contains("# version = "));
    assert!(manifest.contains("# max_mc_stderr = "));
    let (code, second) = run_to("rerun_b.csv", &["--config", scratch("rerun_a.csv.manifest").to_str().unwrap()]);
    assert_eq!(code, 0);
    assert_eq!(first, second);
}

#[test]
fn deterministic_commands_report_no_stderr() {
    let (code, csv) = run_to("zzb.csv", &["zzb", "--probe", "noon", "--mu-max", "3"]);
    assert_eq!(code, 0);
    assert_eq!(csv_rows(&csv).len(), 3);
    let manifest = fs::read_to_string(scratch("zzb.csv.manifest")).unwrap();
    assert!(manifest.contains("# max_mc_stderr = none"));
}

#[test]
fn time_demo_reproduces_closed_form() {
    let (code, csv) = run_to("time.csv", &["time-demo", "--energy", "2"]);
    assert_eq!(code, 0);
    assert!(quantity(&csv, "closed_form_deviation") < 1e-9);
    assert!((quantity(&csv, "bound") - quantity(&csv, "pom_bound")).abs() < 1e-8);
}
