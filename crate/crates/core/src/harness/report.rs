//! Report files: CSV tables, SVG charts and a manifest.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use super::experiment::ExperimentReport;
use super::svg::{LineChart, Scale, Series};
use crate::error::{Error, Result};
use crate::trace_io::{fmt_num, write_string_table};

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn curve_chart(
    report: &ExperimentReport,
    title: &str,
    y_label: &str,
    y_scale: Scale,
    diagonal: bool,
    pick: fn(&super::experiment::MethodSummary) -> &Vec<(f64, f64)>,
) -> String {
    LineChart {
        title: title.to_owned(),
        x_label: "target error rate".to_owned(),
        y_label: y_label.to_owned(),
        x_scale: Scale::Log10,
        y_scale,
        series: report
            .methods
            .iter()
            .map(|m| Series {
                name: m.method.name().to_owned(),
                points: pick(m).clone(),
            })
            .collect(),
        diagonal,
    }
    .render()
}

/// Write `rmse.csv`, `outage.csv`, `resources.csv`, `outage.svg`,
/// `resources.svg` and `manifest` into `dir`. Returns the written paths.
/// Output depends only on the report, so equal reports give equal bytes.
pub fn emit_report(report: &ExperimentReport, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let n_seeds = report.seeds.len().to_string();

    let rmse_rows: Vec<Vec<String>> = report
        .methods
        .iter()
        .map(|m| {
            vec![
                m.method.name().to_owned(),
                fmt_num(m.rmse.mean),
                fmt_num(m.rmse.std),
                n_seeds.clone(),
            ]
        })
        .collect();
    let curve_rows = |pick: fn(&super::experiment::MethodSummary) -> &Vec<(f64, f64)>| {
        report
            .methods
            .iter()
            .flat_map(|m| {
                pick(m)
                    .iter()
                    .map(|(e, v)| vec![m.method.name().to_owned(), fmt_num(*e), fmt_num(*v)])
                    .collect::<Vec<_>>()
            })
            .collect::<Vec<_>>()
    };

    let rmse_path = dir.join("rmse.csv");
    let outage_path = dir.join("outage.csv");
    let resources_path = dir.join("resources.csv");
    let outage_svg = dir.join("outage.svg");
    let resources_svg = dir.join("resources.svg");
    write_string_table(&rmse_path, &["method", "rmse_mean", "rmse_std", "n_seeds"], &rmse_rows)?;
    write_string_table(
        &outage_path,
        &["method", "target_eps", "achieved_eps_mean"],
        &curve_rows(|m| &m.outage_curve),
    )?;
    write_string_table(
        &resources_path,
        &["method", "target_eps", "channel_uses_mean"],
        &curve_rows(|m| &m.resource_curve),
    )?;
    write_file(
        &outage_svg,
        &curve_chart(
            report,
            "Achieved vs target error rate",
            "mean achieved error rate",
            Scale::Log10,
            true,
            |m| &m.outage_curve,
        ),
    )?;
    write_file(
        &resources_svg,
        &curve_chart(
            report,
            "Channel uses vs target error rate",
            "mean channel uses",
            Scale::Linear,
            false,
            |m| &m.resource_curve,
        ),
    )?;

    let written = vec![rmse_path, outage_path, resources_path, outage_svg, resources_svg];
    let mut manifest = String::new();
    let _ = writeln!(manifest, "version = {}", env!("CARGO_PKG_VERSION"));
    let _ = writeln!(manifest, "config_sha256 = {}", sha256_hex(report.config_echo.as_bytes()));
    let _ = writeln!(
        manifest,
        "seeds = {}",
        report.seeds.iter().map(u64::to_string).collect::<Vec<_>>().join(", ")
    );
    for f in &report.failures {
        let _ = writeln!(manifest, "failed_seed = {}: {}", f.seed, f.message.replace('\n', " "));
    }
    let _ = writeln!(manifest, "clamped_predictions = {}", report.clamped_predictions);
    for path in &written {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default();
        let _ = writeln!(manifest, "sha256 {name} = {}", sha256_hex(&bytes));
    }
    manifest.push_str("\n[config]\n");
    manifest.push_str(&report.config_echo);
    let manifest_path = dir.join("manifest");
    write_file(&manifest_path, &manifest)?;

    let mut all = written;
    all.push(manifest_path);
    Ok(all)
}
