use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use chemowave::cli_io::{config_to_toml, parse_config, ConfigError, Mode, EXIT_IO, EXIT_VALIDATION};
use chemowave::velocity_model::ModelError;

fn example(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("examples")
        .join(format!("{name}.toml"))
}

fn example_text(name: &str) -> String {
    fs::read_to_string(example(name)).unwrap()
}

fn chemowave(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_chemowave"))
        .args(args)
        .env("CHEMOWAVE_LOG", "error")
        .output()
        .unwrap()
}

fn run_mode(mode: &str, config: &Path, out: &Path) -> Output {
    chemowave(&[mode, "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()])
}

/// Data rows of a CSV file, comment lines and header removed.
fn rows(path: &Path) -> (String, Vec<Vec<String>>) {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines().filter(|l| !l.starts_with('#'));
    let header = lines.next().unwrap().to_string();
    let data = lines.map(|l| l.split(',').map(str::to_string).collect()).collect();
    (header, data)
}

#[test]
fn examples_reproduce_case_parameters() {
    let c1 = parse_config(&example_text("single_wave")).unwrap();
    assert_eq!(c1.mode, Mode::UpsilonScan);
    assert_eq!(c1.model.len(), 18);
    assert_eq!((c1.model.chi_s(), c1.model.chi_n()), (0.3, 0.15));
    let sum: f64 = c1.model.weights().iter().sum();
    assert!((sum - 1.0).abs() < 1e-12);
    let chem = c1.chem();
    assert_eq!((chem.d_s, chem.d_n, chem.alpha, chem.beta, chem.gamma), (0.5, 1.0, 0.5, 1.0, 1.0));

    let c2 = parse_config(&example_text("two_waves")).unwrap();
    assert_eq!((c2.model.chi_s(), c2.model.chi_n()), (0.5, 0.45));
    assert_eq!(c2.chem().alpha, 10.0);
    assert_eq!(c2.sim.as_ref().unwrap().cells, 2048);

    let c3 = parse_config(&example_text("no_wave")).unwrap();
    let v: Vec<f64> = c3.model.velocities().iter().copied().filter(|&v| v > 0.0).collect();
    assert_eq!(v, [0.015, 0.03, 0.05, 0.08, 0.12, 0.16, 0.25, 0.5, 1.0]);
}

#[test]
fn config_round_trip() {
    for name in ["single_wave", "two_waves", "no_wave"] {
        let parsed = parse_config(&example_text(name)).unwrap();
        let again = parse_config(&config_to_toml(&parsed)).unwrap();
        assert_eq!(parsed, again, "{name}");
    }
}

#[test]
fn missing_sensitivity() {
    let text = example_text("single_wave").replace("chi_s = 0.3\n", "");
    assert_eq!(parse_config(&text).unwrap_err(), ConfigError::MissingKey("model.chi_s".into()));
}

#[test]
fn out_of_range_sensitivity_names_the_key() {
    let text = example_text("single_wave").replace("chi_s = 0.3", "chi_s = 0.7");
    match parse_config(&text).unwrap_err() {
        ConfigError::Model { key, source } => {
            assert_eq!(key, "model.chi_s");
            assert!(matches!(source, ModelError::SensitivityOutOfRange { .. }));
        }
        other => panic!("unexpected error {other:?}"),
    }
}

#[test]
fn misspelled_key_is_rejected() {
    let text = example_text("two_waves").replace("alpha =", "alpah =");
    assert_eq!(parse_config(&text).unwrap_err(), ConfigError::UnknownKey("chem.alpah".into()));
}

#[test]
fn syntax_error_has_position() {
    let text = example_text("single_wave").replace("beta = 1.0", "beta = = 1.0");
    let line = text.lines().position(|l| l.starts_with("beta")).unwrap() + 1;
    match parse_config(&text).unwrap_err() {
        ConfigError::Parse { line: l, column, .. } => {
            assert_eq!(l, line);
            assert!(column > 1);
        }
        other => panic!("unexpected error {other:?}"),
    }
}

#[test]
fn validate_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let ok = run_mode("validate", &example("single_wave"), dir.path());
    assert_eq!(ok.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&ok.stdout).contains("18 active velocities"));

    let bad = dir.path().join("bad.toml");
    fs::write(&bad, example_text("single_wave").replace("chi_s = 0.3\n", "")).unwrap();
    let out = run_mode("validate", &bad, dir.path());
    assert_eq!(out.status.code(), Some(EXIT_VALIDATION as i32));
    assert!(String::from_utf8_lossy(&out.stderr).contains("chi_s"));

    let missing = run_mode("validate", &dir.path().join("absent.toml"), dir.path());
    assert_eq!(missing.status.code(), Some(EXIT_IO as i32));
}

#[test]
fn scan_writes_two_speeds_and_exact_numbers() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_mode("upsilon-scan", &example("two_waves"), dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));

    let (header, speeds) = rows(&dir.path().join("speeds.csv"));
    assert_eq!(header, "c,residual,interval_id");
    assert_eq!(speeds.len(), 2);
    let fastest: f64 = speeds[1][0].parse().unwrap();
    assert!((0.12..=0.18).contains(&fastest));

    let (header, samples) = rows(&dir.path().join("upsilon.csv"));
    assert_eq!(header, "c,upsilon,interval_id");
    let cs: Vec<f64> = samples.iter().map(|r| r[0].parse().unwrap()).collect();
    assert!(cs.windows(2).all(|w| w[0] < w[1]));
    for r in &samples {
        for cell in &r[..2] {
            let x: f64 = cell.parse().unwrap();
            assert_eq!(&chemowave::cli_io::fmt_f64(x), cell);
        }
    }

    let text = fs::read_to_string(dir.path().join("upsilon.csv")).unwrap();
    assert!(text.starts_with("# chemowave "));
    assert!(text.contains("# config_sha256 "));
}

#[test]
fn scan_without_waves_reports_status() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_mode("upsilon-scan", &example("no_wave"), dir.path());
    assert_eq!(out.status.code(), Some(0));
    let text = fs::read_to_string(dir.path().join("speeds.csv")).unwrap();
    let body: Vec<&str> = text.lines().filter(|l| !l.starts_with("# chemowave") && !l.starts_with("# config")).collect();
    assert_eq!(body, ["c,residual,interval_id", "# status=no_wave"]);
}

#[test]
fn profile_schema() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_mode("profile", &example("single_wave"), dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let (header, data) = rows(&dir.path().join("profile.csv"));
    let cols: Vec<&str> = header.split(',').collect();
    assert_eq!(&cols[..5], ["z", "rho", "I", "s", "n"]);
    assert_eq!(cols.len(), 5 + 18);
    let z: Vec<f64> = data.iter().map(|r| r[0].parse().unwrap()).collect();
    assert!(z.windows(2).all(|w| w[0] < w[1]));
    assert!(data.iter().all(|r| r.len() == cols.len()));
}

#[test]
fn seed_is_recorded() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = example("single_wave");
    let out = chemowave(&[
        "profile",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
        "--seed",
        "7",
        "--threads",
        "2",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let text = fs::read_to_string(dir.path().join("profile.csv")).unwrap();
    assert!(text.contains("# seed 7\n"));
}
