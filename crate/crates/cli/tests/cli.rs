//! Config parsing, output files and the binary's exit codes.

use std::path::Path;
use std::process::Command;

use fimci::montecarlo::ModelId;
use fimci_cli::report::{read_manifest, read_report, records_header, SUMMARY_HEADER};
use fimci_cli::run::{apply_overrides, replay, resolve_experiment};
use fimci_cli::{parse_config, parse_config_str, presets, run_experiment, CliError, RunFlags};

fn read(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap()
}

fn small(preset: &str, reps: usize, n: Option<usize>) -> fimci::montecarlo::ExperimentConfig {
    let flags = RunFlags { reps: Some(reps), n, ..RunFlags::default() };
    apply_overrides(presets::load(preset).unwrap(), &flags).unwrap()
}

#[test]
fn preset_file_table1_case1() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("presets/table1_case1.toml");
    let c = parse_config(&path).unwrap();
    assert_eq!(c.model_id, ModelId::GaussMix);
    assert_eq!(c.theta_star, vec![0.5, 0.0, 4.0]);
    assert_eq!((c.n, c.replications), (50, 1000));
}

#[test]
fn every_table_column_has_a_preset() {
    let expected = [
        ("table1_case1", ModelId::GaussMix, 50),
        ("table1_case2", ModelId::GaussMix, 100),
        ("table1_case3", ModelId::GaussMix, 100),
        ("table2_case1", ModelId::Spn1d, 1000),
        ("table3_case1", ModelId::Spn1d, 1000),
        ("table4_case1", ModelId::Spn4d, 1000),
        ("table4_case2", ModelId::Spn4d, 2000),
        ("table5_case1", ModelId::Ssm, 50),
        ("table5_case2", ModelId::Ssm, 100),
    ];
    assert_eq!(presets::names().count(), expected.len());
    for (name, id, n) in expected {
        let c = presets::load(name).unwrap();
        assert_eq!((c.model_id, c.n), (id, n), "{name}");
    }
}

#[test]
fn single_replication_is_a_validation_error() {
    let text = "[experiment]\nmodel_id = \"GAUSSMIX\"\ntheta_star = [0.5, 0.0, 4.0]\nn = 50\nreplications = 1\n";
    match parse_config_str(text, "t") {
        Err(CliError::Validation { field, .. }) => assert_eq!(field, "replications"),
        other => panic!("{other:?}"),
    }
}

#[test]
fn wrong_dimension_names_theta_star() {
    let text = "[experiment]\nmodel_id = \"SSM\"\ntheta_star = [1.0, 1.0]\nn = 50\nreplications = 10\n";
    match parse_config_str(text, "t") {
        Err(CliError::Validation { field, .. }) => assert_eq!(field, "theta_star"),
        other => panic!("{other:?}"),
    }
}

#[test]
fn unknown_key_is_a_parse_error_naming_it() {
    let text = "[experiment]\nmodel_id = \"SSM\"\ntheta_star = [1.0, 1.0, 1.0]\nn = 50\nreplications = 10\nfoo = 3\n";
    match parse_config_str(text, "t") {
        Err(e @ CliError::Parse { .. }) => {
            let CliError::Parse { line, message, .. } = &e else { unreachable!() };
            assert!(message.contains("foo"), "{message}");
            assert_eq!(*line, 6);
            assert!(e.to_string().starts_with("t:6:"));
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn syntax_error_reports_line_and_column() {
    let text = "[experiment]\nmodel_id = \"SSM\"\nn = = 3\n";
    match parse_config_str(text, "t") {
        Err(CliError::Parse { line, column, .. }) => {
            assert_eq!(line, 3);
            assert!(column > 1);
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn unknown_model_is_rejected() {
    let text = "[experiment]\nmodel_id = \"ARMA\"\ntheta_star = [1.0]\nn = 5\nreplications = 10\n";
    assert!(matches!(parse_config_str(text, "t"), Err(CliError::Parse { line: 2, .. })));
}

#[test]
fn resolve_prefers_presets_then_paths() {
    assert_eq!(resolve_experiment("table4").unwrap().model_id, ModelId::Spn4d);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("exp.toml");
    std::fs::write(&path, presets::source("table5_case2").unwrap()).unwrap();
    assert_eq!(resolve_experiment(path.to_str().unwrap()).unwrap().n, 100);
    assert!(matches!(resolve_experiment("missing.toml"), Err(CliError::UnknownPreset(_))));
}

#[test]
fn outputs_have_the_documented_shape() {
    let dir = tempfile::tempdir().unwrap();
    let config = small("table3", 30, Some(200));
    let out = run_experiment(config, &RunFlags::default(), dir.path()).unwrap();
    assert_eq!(out.exit_code, 0);
    assert_eq!(out.files.len(), 5);

    let summary = read(&dir.path().join("summary.csv"));
    let lines: Vec<&str> = summary.lines().collect();
    assert_eq!(lines[0], SUMMARY_HEADER);
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("mu,") && lines[2].starts_with("sigma2,"));
    for line in &lines[1..] {
        let fields: Vec<&str> = line.split(',').collect();
        assert_eq!(fields.len(), 4);
        let values: Vec<f64> = fields[1..].iter().map(|f| f.parse().unwrap()).collect();
        assert_eq!(values[2], values[0] / values[1]);
    }

    let records = read(&dir.path().join("records.csv"));
    let rows: Vec<&str> = records.lines().collect();
    assert_eq!(rows[0], records_header(&out.report.names));
    assert!(out.report.exclusions.is_empty());
    assert_eq!(rows.len() - 1, 30);

    // Machine files keep every bit.
    for (row, rec) in rows[1..].iter().zip(&out.records) {
        let fields: Vec<&str> = row.split(',').collect();
        assert_eq!(fields[7].parse::<f64>().unwrap().to_bits(), rec.theta_hat[0].to_bits());
        assert_eq!(fields[9].parse::<f64>().unwrap().to_bits(), rec.hinv_diag[0].to_bits());
    }

    let table = read(&dir.path().join("table.txt"));
    assert!(table.contains("Sample size         n = 200"));
    assert!(table.contains("Typical F_bar^-1"));
}

#[test]
fn report_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_experiment(small("table4", 12, Some(100)), &RunFlags::default(), dir.path()).unwrap();
    let back = read_report(&dir.path().join("report.struct")).unwrap();
    assert_eq!(back, out.report);
    assert!(back.noise_u.is_some());
    let manifest = read_manifest(&dir.path().join("manifest.struct")).unwrap();
    assert_eq!(manifest, out.manifest);
}

#[test]
fn same_seed_gives_identical_files() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let config = small("table1_case2", 40, None);
    run_experiment(config.clone(), &RunFlags { threads: Some(1), ..RunFlags::default() }, a.path()).unwrap();
    run_experiment(config, &RunFlags { threads: Some(3), ..RunFlags::default() }, b.path()).unwrap();
    for f in ["summary.csv", "records.csv", "report.struct", "table.txt"] {
        assert_eq!(read(&a.path().join(f)), read(&b.path().join(f)), "{f}");
    }
}

#[test]
fn replaying_a_manifest_reproduces_the_report() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let flags = RunFlags { reliability: Some(2), threads: Some(2), ..RunFlags::default() };
    run_experiment(small("table5_case2", 10, Some(40)), &flags, a.path()).unwrap();
    replay(&a.path().join("manifest.struct"), Some(1), b.path()).unwrap();
    for f in ["report.struct", "summary.csv", "records.csv"] {
        assert_eq!(read(&a.path().join(f)), read(&b.path().join(f)), "{f}");
    }
}

#[test]
fn reliability_vector_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let flags = RunFlags { reliability: Some(3), ..RunFlags::default() };
    let out = run_experiment(small("table5", 12, Some(100)), &flags, dir.path()).unwrap();
    let rel = out.report.reliability.as_ref().unwrap();
    assert_eq!(rel.len(), 3);
    assert!(rel.iter().all(|v| v.is_finite() && *v >= 0.0));
    assert!(read(&dir.path().join("table.txt")).contains("V_n relative error"));
    assert_eq!(read_report(&dir.path().join("report.struct")).unwrap().reliability.as_ref(), Some(rel));
}

fn fimci(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_fimci")).args(args).output().unwrap()
}

#[test]
fn binary_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().to_str().unwrap();

    let list = fimci(&["--list"]);
    assert_eq!(list.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&list.stdout).contains("table5_case2"));

    let ok = fimci(&["--experiment", "table3", "--seed", "42", "--reps", "20", "--n", "100", "--out", out_dir]);
    assert_eq!(ok.status.code(), Some(0), "{}", String::from_utf8_lossy(&ok.stderr));
    assert!(String::from_utf8_lossy(&ok.stdout).contains("component"));
    assert!(read(&dir.path().join("summary.csv")).starts_with("component,mse_h,mse_f,ratio\n"));

    let bad = fimci(&["--experiment", "table3", "--reps", "1", "--out", out_dir]);
    assert_eq!(bad.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&bad.stderr).contains("replications"));

    let missing = fimci(&["--experiment", "nowhere.toml", "--out", out_dir]);
    assert_eq!(missing.status.code(), Some(1));

    let usage = fimci(&[]);
    assert_ne!(usage.status.code(), Some(0));
}

/// Short state-space series put many variance estimates on the zero floor;
/// those replications are excluded, which trips the soft-failure code.
#[test]
fn excess_exclusions_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = fimci(&[
        "--experiment",
        "table5_case1",
        "--reps",
        "30",
        "--seed",
        "42",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    let report = read_report(&dir.path().join("report.struct")).unwrap();
    assert!(report.exclusion_rate() > 0.2, "{}", report.exclusion_rate());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("excluded"));
}
