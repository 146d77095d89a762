use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::report::{BenchReport, Drops, DISTANCE_METRICS};
use crate::detection::MetricBundle;
use crate::error::{Error, Result};
use crate::util::fixed;

/// Metrics written to the plot-data file.
pub const PLOT_METRICS: [&str; 4] = ["l2", "linf", "ssim", "lpips"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportFormat {
    Csv,
    Markdown,
    Json,
}

impl ReportFormat {
    pub fn file_name(self) -> &'static str {
        match self {
            ReportFormat::Csv => "report.csv",
            ReportFormat::Markdown => "report.md",
            ReportFormat::Json => "report.json",
        }
    }
}

impl FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(ReportFormat::Csv),
            "markdown" | "md" => Ok(ReportFormat::Markdown),
            "json" => Ok(ReportFormat::Json),
            other => Err(Error::Argument(format!("unknown report format {other:?}"))),
        }
    }
}

fn one(v: f64) -> String {
    fixed(v, 1)
}

fn csv_bytes(report: &BenchReport) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| Error::Argument(format!("csv: {e}"));
    let mut header = vec!["model", "attack", "map", "ap_loc", "csr", "map_drop", "ap_loc_drop", "csr_drop"];
    header.extend(DISTANCE_METRICS);
    w.write_record(&header).map_err(csv_err)?;
    let absolute = |m: &MetricBundle| [one(m.map), one(m.ap_loc), one(m.csr)];
    for b in &report.benign {
        let mut rec = vec![b.model.clone(), "benign".into()];
        rec.extend(absolute(&b.metrics));
        rec.resize(header.len(), String::new());
        w.write_record(&rec).map_err(csv_err)?;
        for row in report.rows.iter().filter(|r| r.model == b.model) {
            let mut rec = vec![row.model.clone(), row.attack.clone()];
            rec.extend(absolute(&row.metrics));
            rec.extend([one(row.drops.map), one(row.drops.ap_loc), one(row.drops.csr)]);
            rec.extend(
                DISTANCE_METRICS
                    .iter()
                    .map(|m| row.distances.get(*m).map(ToString::to_string).unwrap_or_default()),
            );
            w.write_record(&rec).map_err(csv_err)?;
        }
    }
    w.into_inner().map_err(|e| Error::Argument(format!("csv: {e}")))
}

fn table_row(cells: impl IntoIterator<Item = String>) -> String {
    let cells: Vec<String> = cells.into_iter().collect();
    format!("| {} |\n", cells.join(" | "))
}

fn markdown(report: &BenchReport) -> String {
    let attacks = report.attacks();
    let mut out = String::from("# Benchmark report\n\n");
    let _ = writeln!(out, "IoU threshold: {}\n", report.iou_threshold);

    type Absolute = fn(&MetricBundle) -> f64;
    type DropOf = fn(&Drops) -> f64;
    let sections: [(&str, Absolute, DropOf); 3] = [
        ("mAP", |m| m.map, |d| d.map),
        ("AP_loc", |m| m.ap_loc, |d| d.ap_loc),
        ("CSR", |m| m.csr, |d| d.csr),
    ];
    for (name, absolute, drop) in sections {
        let _ = writeln!(out, "## Relative drop in % compared to the benign {name}\n");
        let mut header = vec!["Model".to_string(), format!("Benign {name}")];
        header.extend(attacks.iter().map(|a| a.to_string()));
        out.push_str(&table_row(header.clone()));
        out.push_str(&table_row(header.iter().map(|_| "---".to_string())));
        for b in &report.benign {
            let mut cells = vec![b.model.clone(), one(absolute(&b.metrics))];
            cells.extend(attacks.iter().map(|a| {
                report
                    .row(&b.model, a)
                    .map_or_else(|| "-".to_string(), |r| one(drop(&r.drops)))
            }));
            out.push_str(&table_row(cells));
        }
        out.push('\n');
    }

    out.push_str("## Perturbation size (mean ± std over images)\n\n");
    let mut header = vec!["Attack".to_string(), "Model".to_string()];
    header.extend(["L1", "L2", "L_inf", "PSNR", "SSIM", "LPIPS"].map(String::from));
    out.push_str(&table_row(header.clone()));
    out.push_str(&table_row(header.iter().map(|_| "---".to_string())));
    let mut rows: Vec<_> = report.rows.iter().filter(|r| !r.distances.is_empty()).collect();
    rows.sort_by(|a, b| (&a.attack, &a.model).cmp(&(&b.attack, &b.model)));
    for r in rows {
        let mut cells = vec![r.attack.clone(), r.model.clone()];
        cells.extend(
            DISTANCE_METRICS
                .iter()
                .map(|m| r.distances.get(*m).map_or_else(|| "-".to_string(), ToString::to_string)),
        );
        out.push_str(&table_row(cells));
    }
    if let Some(w) = &report.lpips_weights {
        let _ = writeln!(out, "\nLPIPS channel weights: {w}");
    }

    if !report.failures.is_empty() {
        out.push_str("\n## Failed conditions\n\n");
        for f in &report.failures {
            let _ = writeln!(out, "- {}/{}: {} error: {}", f.attack, f.model, f.category, f.message);
        }
    }
    out
}

/// Human-readable forms round to one decimal; JSON keeps full precision.
pub fn render_report(report: &BenchReport, format: ReportFormat) -> Result<Vec<u8>> {
    match format {
        ReportFormat::Csv => csv_bytes(report),
        ReportFormat::Markdown => Ok(markdown(report).into_bytes()),
        ReportFormat::Json => {
            let mut s = serde_json::to_string_pretty(report)
                .map_err(|e| Error::Argument(format!("cannot serialize report: {e}")))?;
            s.push('\n');
            Ok(s.into_bytes())
        }
    }
}

/// `attack,model,metric,mean,std,n` for every condition with perturbation
/// statistics. Values are written in shortest round-trip form.
pub fn emit_plot_data(report: &BenchReport) -> String {
    let mut out = String::from("attack,model,metric,mean,std,n\n");
    let mut rows: Vec<_> = report.rows.iter().collect();
    rows.sort_by(|a, b| (&a.attack, &a.model).cmp(&(&b.attack, &b.model)));
    for r in rows {
        if r.distances.is_empty() {
            log::warn!("{}/{}: no perturbation statistics, left out of plot data", r.attack, r.model);
            continue;
        }
        for metric in PLOT_METRICS {
            if let Some(s) = r.distances.get(metric) {
                let _ = writeln!(out, "{},{},{metric},{:?},{:?},{}", r.attack, r.model, s.mean, s.std, s.n);
            }
        }
    }
    out
}

pub fn parse_report_json(text: &str) -> Result<BenchReport> {
    serde_json::from_str(text).map_err(|e| Error::parse("report.json", e))
}
