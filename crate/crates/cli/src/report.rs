//! Output files. Machine files (`report.struct`, `manifest.struct`, the two
//! CSVs) use the shortest representation that parses back to the same
//! `f64`; `table.txt` rounds to four significant digits.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use fimci::montecarlo::{ExperimentConfig, ExperimentReport, ReplicationRecord};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::config::toml_error;
use crate::error::{CliError, Result};

pub const REPORT_FILE: &str = "report.struct";
pub const MANIFEST_FILE: &str = "manifest.struct";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const RECORDS_FILE: &str = "records.csv";
pub const TABLE_FILE: &str = "table.txt";

pub const SUMMARY_HEADER: &str = "component,mse_h,mse_f,ratio";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub artifact_version: String,
    pub started_at: DateTime<Utc>,
    pub finished_at: DateTime<Utc>,
    pub wall_time_seconds: f64,
    pub worker_count: usize,
    /// Outer repeats of the covariance reliability study, if one was run.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reliability_repeats: Option<usize>,
    pub config: ExperimentConfig,
}

pub fn artifact_version() -> String {
    format!("{} {}", env!("CARGO_PKG_NAME"), env!("CARGO_PKG_VERSION"))
}

fn to_toml<T: Serialize>(value: &T) -> Result<String> {
    toml::to_string_pretty(value).map_err(|e| CliError::Serialize(e.to_string()))
}

fn read_toml<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    toml::from_str(&text).map_err(|e| toml_error(&path.display().to_string(), &text, e))
}

pub fn read_report(path: &Path) -> Result<ExperimentReport> {
    read_toml(path)
}

pub fn read_manifest(path: &Path) -> Result<RunManifest> {
    read_toml(path)
}

pub fn summary_csv(report: &ExperimentReport) -> String {
    let mut out = String::from(SUMMARY_HEADER);
    out.push('\n');
    for (j, name) in report.names.iter().enumerate() {
        let _ = writeln!(out, "{name},{},{},{}", report.mse_h[j], report.mse_f[j], report.ratio[j]);
    }
    out
}

pub fn records_header(names: &[String]) -> String {
    let mut cols: Vec<String> = ["rep_index", "excluded", "exclusion_reason", "converged", "iterations", "final_grad_norm", "flags"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    for prefix in ["theta_hat", "hinv", "finv"] {
        cols.extend(names.iter().map(|n| format!("{prefix}_{n}")));
    }
    cols.join(",")
}

pub fn records_csv(names: &[String], records: &[ReplicationRecord]) -> String {
    let mut out = records_header(names);
    out.push('\n');
    for r in records {
        let flags: Vec<String> = r
            .flags
            .iter()
            .map(|f| format!("{f:?}"))
            .collect();
        let _ = write!(
            out,
            "{},{},{},{},{},{},{}",
            r.rep_index,
            r.excluded,
            r.exclusion_reason.label(),
            r.converged,
            r.iterations,
            r.final_grad_norm,
            flags.join("|")
        );
        for v in r.theta_hat.iter().chain(&r.hinv_diag).chain(&r.finv_diag) {
            let _ = write!(out, ",{v}");
        }
        out.push('\n');
    }
    out
}

/// `x` rounded to four significant digits.
pub fn sig4(x: f64) -> String {
    if !x.is_finite() {
        return format!("{x}");
    }
    if x == 0.0 {
        return "0".into();
    }
    // Round first so 9.9996 is classified by the magnitude it rounds to.
    let rounded: f64 = format!("{x:.3e}").parse().unwrap_or(x);
    let mag = rounded.abs().log10().floor() as i32;
    if (-4..6).contains(&mag) {
        format!("{:.*}", (3 - mag).max(0) as usize, rounded)
    } else {
        format!("{x:.3e}")
    }
}

fn matrix_block(out: &mut String, title: &str, m: &DMatrix<f64>) {
    let cells: Vec<Vec<String>> = m.row_iter().map(|r| r.iter().map(|v| sig4(*v)).collect()).collect();
    let width = cells.iter().flatten().map(|c| c.len()).max().unwrap_or(1);
    let _ = writeln!(out, "{title}");
    for row in cells {
        let line: Vec<String> = row.iter().map(|c| format!("{c:>width$}")).collect();
        let _ = writeln!(out, "  {}", line.join("  "));
    }
}

/// Human-readable table: true parameter, `n`, `V_n`, typical inverses and
/// per-component ratios.
pub fn render_table(report: &ExperimentReport) -> String {
    let mut out = String::new();
    let theta: Vec<String> = report.theta_star.iter().map(|v| sig4(*v)).collect();
    let _ = writeln!(out, "Model               {}", report.model_id.label());
    let _ = writeln!(out, "True parameter      [{}]", theta.join(", "));
    let _ = writeln!(out, "Sample size         n = {}", report.n);
    let _ = writeln!(
        out,
        "Replications        {} ({} included, {} excluded)",
        report.replications, report.included_count, report.excluded_count
    );
    for (reason, count) in &report.exclusions {
        let _ = writeln!(out, "  excluded {reason:<15} {count}");
    }
    if report.boundary_count > 0 {
        let _ = writeln!(out, "  on boundary         {}", report.boundary_count);
    }
    let _ = writeln!(out, "Seed                {}", report.master_seed);
    let _ = writeln!(out, "alpha               {}", report.alpha);
    out.push('\n');
    matrix_block(&mut out, "n cov(theta_hat)  (V_n)", &report.v_n);
    matrix_block(&mut out, "Typical H_bar^-1", &report.typical_hinv);
    matrix_block(&mut out, "Typical F_bar^-1", &report.typical_finv);
    out.push('\n');
    let width = report.names.iter().map(|n| n.len()).max().unwrap_or(1).max(9);
    let _ = writeln!(out, "{:<width$}  {:>11}  {:>11}  {:>8}", "component", "MSE_H", "MSE_F", "ratio");
    for (j, name) in report.names.iter().enumerate() {
        let _ = writeln!(
            out,
            "{name:<width$}  {:>11}  {:>11}  {:>8}",
            sig4(report.mse_h[j]),
            sig4(report.mse_f[j]),
            sig4(report.ratio[j])
        );
    }
    if let Some(rel) = &report.reliability {
        let rel: Vec<String> = rel.iter().map(|v| sig4(*v)).collect();
        let _ = writeln!(out, "\nV_n relative error  [{}]", rel.join(", "));
    }
    if let Some(u) = &report.noise_u {
        out.push('\n');
        matrix_block(&mut out, "Noise factor U", u);
    }
    out
}

fn write_file(dir: &Path, name: &str, contents: &str) -> Result<PathBuf> {
    let path = dir.join(name);
    std::fs::write(&path, contents).map_err(|e| CliError::io(&path, e))?;
    Ok(path)
}

/// Writes every output file into `out_dir` (created if missing) and returns
/// their paths.
pub fn write_report(
    report: &ExperimentReport,
    records: &[ReplicationRecord],
    manifest: &RunManifest,
    out_dir: &Path,
) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out_dir).map_err(|e| CliError::io(out_dir, e))?;
    Ok(vec![
        write_file(out_dir, REPORT_FILE, &to_toml(report)?)?,
        write_file(out_dir, SUMMARY_FILE, &summary_csv(report))?,
        write_file(out_dir, RECORDS_FILE, &records_csv(&report.names, records))?,
        write_file(out_dir, TABLE_FILE, &render_table(report))?,
        write_file(out_dir, MANIFEST_FILE, &to_toml(manifest)?)?,
    ])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn four_significant_digits() {
        assert_eq!(sig4(14.3456), "14.35");
        assert_eq!(sig4(396.34), "396.3");
        assert_eq!(sig4(0.0723), "0.07230");
        assert_eq!(sig4(9.99996), "10.00");
        assert_eq!(sig4(1.0), "1.000");
        assert_eq!(sig4(-2.5e-7), "-2.500e-7");
        assert_eq!(sig4(123456789.0), "1.235e8");
        assert_eq!(sig4(0.0), "0");
        assert_eq!(sig4(f64::INFINITY), "inf");
    }

    #[test]
    fn header_lists_components() {
        let names = vec!["mu".to_string(), "sigma2".to_string()];
        assert_eq!(
            records_header(&names),
            "rep_index,excluded,exclusion_reason,converged,iterations,final_grad_norm,flags,\
             theta_hat_mu,theta_hat_sigma2,hinv_mu,hinv_sigma2,finv_mu,finv_sigma2"
        );
    }
}
