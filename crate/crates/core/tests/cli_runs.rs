//! End-to-end runs of the installed binary: bundled configs, output formats,
//! overrides and failure modes, all through the real process boundary.

use std::process::{Command, Output};

use asianqmc::cli::{parse_report, REPORT_SCHEMA_VERSION};

fn binary() -> Command {
    Command::new(env!("CARGO_BIN_EXE_asianqmc"))
}

fn run_ok(args: &[&str]) -> String {
    let output = binary().args(args).output().expect("binary must spawn");
    assert!(
        output.status.success(),
        "args {args:?}: exit {:?}, stderr:\n{}",
        output.status.code(),
        String::from_utf8_lossy(&output.stderr)
    );
    String::from_utf8(output.stdout).expect("stdout must be UTF-8")
}

fn run_err(args: &[&str]) -> Output {
    let output = binary().args(args).output().expect("binary must spawn");
    assert!(!output.status.success(), "args {args:?} unexpectedly succeeded");
    output
}

fn parse_csv(text: &str) -> Vec<Vec<String>> {
    let mut lines = text.lines();
    assert_eq!(
        lines.next(),
        Some("generator,sampler,E,price,rmse,seconds"),
        "csv header changed"
    );
    lines
        .map(|line| line.split(',').map(str::to_string).collect::<Vec<_>>())
        .collect()
}

#[test]
fn smoke_runs_every_bundled_config() {
    for name in [
        "basket2_uncorr",
        "basket2_corr",
        "basket10_uncorr",
        "basket10_corr",
        "expdecay_uncorr",
        "expdecay_corr",
    ] {
        let stdout = run_ok(&["--config", name, "--smoke", "--format", "csv"]);
        let rows = parse_csv(&stdout);
        assert!(!rows.is_empty(), "{name}: no result rows");
        for row in &rows {
            assert_eq!(row.len(), 6, "{name}: malformed row {row:?}");
            let price: f64 = row[3].parse().expect("price column");
            let rmse: f64 = row[4].parse().expect("rmse column");
            assert!(price.is_finite() && price > 0.0, "{name}: price {price}");
            assert!(rmse.is_finite() && rmse >= 0.0, "{name}: rmse {rmse}");
        }
    }
}

#[test]
fn no_timing_makes_output_reproducible() {
    let args =
        ["--config", "basket2_corr", "--smoke", "--no-timing", "--format", "csv", "--seed", "99"];
    let first = run_ok(&args);
    let second = run_ok(&args);
    assert_eq!(first, second, "two identically seeded runs must agree byte for byte");
    for row in parse_csv(&first) {
        assert_eq!(row[5], "0.000", "--no-timing must zero the seconds column");
    }
}

#[test]
fn json_report_round_trips_and_matches_csv() {
    let base = [
        "--config",
        "basket2_uncorr",
        "--smoke",
        "--no-timing",
        "--seed",
        "7",
        "--sampler",
        "rqmc",
        "--generator",
        "pca",
    ];
    let mut json_args = base.to_vec();
    json_args.extend(["--format", "json"]);
    let json_text = run_ok(&json_args);
    let report = parse_report(&json_text).expect("emitted JSON must parse back");
    assert_eq!(report.schema_version, REPORT_SCHEMA_VERSION);
    assert_eq!(report.config.seed, 7);
    assert_eq!(report.config.paths, 512, "smoke cap must be echoed in the config");
    assert!(!report.rows.is_empty());

    let mut csv_args = base.to_vec();
    csv_args.extend(["--format", "csv"]);
    let csv_rows = parse_csv(&run_ok(&csv_args));
    assert_eq!(csv_rows.len(), report.rows.len());
    for (csv_row, json_row) in csv_rows.iter().zip(report.rows.iter()) {
        assert_eq!(csv_row[0], json_row.generator);
        assert_eq!(csv_row[1], json_row.sampler);
        assert_eq!(csv_row[2], json_row.eff_dim.to_string());
        assert_eq!(csv_row[3], format!("{:.6}", json_row.price));
        assert_eq!(csv_row[4], format!("{:.6}", json_row.rmse));
    }
}

#[test]
fn dry_run_echoes_the_plan_without_simulating() {
    let stdout = run_ok(&["--config", "basket10_corr", "--dry-run"]);
    assert!(stdout.contains("assets 10, steps 250"), "summary missing:\n{stdout}");
    assert!(stdout.contains("no rows"), "dry run must not produce result rows:\n{stdout}");
}

#[test]
fn out_flag_writes_the_same_report_to_a_file() {
    let path = std::env::temp_dir().join("asianqmc_cli_out_test.csv");
    let args = [
        "--config",
        "basket2_uncorr",
        "--smoke",
        "--no-timing",
        "--format",
        "csv",
        "--seed",
        "3",
    ];
    let stdout = run_ok(&args);
    let mut file_args = args.to_vec();
    let path_text = path.to_str().unwrap();
    file_args.extend(["--out", path_text]);
    let silent = run_ok(&file_args);
    assert!(silent.is_empty(), "--out must silence standard output");
    let written = std::fs::read_to_string(&path).expect("report file must exist");
    assert_eq!(written, stdout);
    std::fs::remove_file(&path).ok();
}

#[test]
fn explicit_width_sweep_emits_one_row_per_width() {
    let stdout = run_ok(&[
        "--config",
        "basket2_uncorr",
        "--smoke",
        "--format",
        "csv",
        "--generator",
        "pca",
        "--sampler",
        "rqmc",
        "--eff-dim",
        "2, 5, 10",
    ]);
    let rows = parse_csv(&stdout);
    let widths: Vec<&str> = rows.iter().map(|row| row[2].as_str()).collect();
    assert_eq!(widths, ["2", "5", "10"]);
}

#[test]
fn validation_failures_exit_with_code_two() {
    let cases: &[&[&str]] = &[
        &["--config", "no_such_config"],
        &["--config", "basket2_uncorr", "--anova-p", "1.5"],
        &["--config", "basket2_uncorr", "--sampler", "halton"],
        &["--config", "basket2_uncorr", "--generator", "cholesky", "--eff-dim", "anova"],
        &["--config", "basket2_uncorr", "--format", "yaml"],
        &["--config", "basket2_uncorr", "--eff-dim", "0"],
        &["--config", "basket2_uncorr", "--batches", "1"],
    ];
    for args in cases {
        let output = run_err(args);
        assert_eq!(output.status.code(), Some(2), "args {args:?}");
        let stderr = String::from_utf8_lossy(&output.stderr);
        assert!(stderr.starts_with("error: "), "args {args:?}: stderr {stderr}");
    }
}

#[test]
fn unwritable_output_path_is_a_runtime_failure() {
    let output = run_err(&[
        "--config",
        "basket2_uncorr",
        "--smoke",
        "--format",
        "csv",
        "--out",
        "/nonexistent-dir/report.csv",
    ]);
    assert_eq!(output.status.code(), Some(1));
}
