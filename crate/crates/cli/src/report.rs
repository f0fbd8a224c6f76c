//! On-disk report bundle: JSON summary, long-format CSV logs and SVG charts.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use ciid_core::harness::experiment::{CompositionRow, ExperimentConfig, ExperimentOutcome};
use ciid_core::metrics::{GroupedMetricsReport, Metric, RunRecord};
use serde::Serialize;

use crate::svg;

/// Written in place of a value whose metric is undefined for that run.
pub const UNDEFINED: &str = "undefined";

pub fn fmt_value(v: Option<f64>) -> String {
    v.map_or_else(|| UNDEFINED.to_string(), |x| x.to_string())
}

#[derive(Serialize)]
pub struct ReportBundle<'a> {
    pub tool: &'static str,
    pub version: &'static str,
    pub base_seed: u64,
    pub split_seeds: Vec<u64>,
    pub config: &'a ExperimentConfig,
    pub outcome: &'a ExperimentOutcome,
}

impl<'a> ReportBundle<'a> {
    pub fn new(config: &'a ExperimentConfig, outcome: &'a ExperimentOutcome) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            base_seed: config.seed,
            split_seeds: outcome.splits.iter().map(|s| s.split_seed).collect(),
            config,
            outcome,
        }
    }
}

fn csv_string(rows: impl IntoIterator<Item = Vec<String>>) -> io::Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.write_record(&r)?;
    }
    let bytes = w.into_inner().map_err(|e| e.into_error())?;
    String::from_utf8(bytes).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))
}

/// `run,model,subgroup,metric,value`, one row per record.
pub fn metrics_csv(records: &[RunRecord]) -> io::Result<String> {
    let header = ["run", "model", "subgroup", "metric", "value"].map(String::from).to_vec();
    csv_string(std::iter::once(header).chain(records.iter().map(|r| {
        vec![
            r.run.to_string(),
            r.model.clone(),
            r.subgroup.clone(),
            r.metric.name().to_string(),
            fmt_value(r.value),
        ]
    })))
}

pub fn summary_csv(report: &GroupedMetricsReport) -> io::Result<String> {
    let header = ["model", "subgroup", "metric", "mean", "std", "defined_runs", "runs"]
        .map(String::from)
        .to_vec();
    csv_string(std::iter::once(header).chain(report.cells.iter().map(|c| {
        vec![
            c.model.clone(),
            c.subgroup.clone(),
            c.metric.name().to_string(),
            fmt_value(c.mean),
            fmt_value(c.std),
            c.defined_runs.to_string(),
            c.runs.to_string(),
        ]
    })))
}

/// Wide table: one row per population, one column per subgroup share.
pub fn composition_csv(rows: &[CompositionRow], decimals: Option<usize>) -> io::Result<String> {
    let names: Vec<String> = rows
        .first()
        .map(|r| r.shares.iter().map(|(n, _)| n.clone()).collect())
        .unwrap_or_default();
    let mut header = vec!["population".to_string(), "size".to_string()];
    header.extend(names.iter().cloned());
    let body = rows.iter().map(|r| {
        let mut out = vec![r.population.clone(), r.size.to_string()];
        for n in &names {
            let v = r.shares.iter().find(|(m, _)| m == n).map(|(_, v)| *v);
            out.push(match (v, decimals) {
                (Some(v), Some(d)) => format!("{v:.d$}"),
                (v, _) => fmt_value(v),
            });
        }
        out
    });
    csv_string(std::iter::once(header).chain(body))
}

/// Writes `report.json`, `metrics.csv`, `summary.csv`, `composition.csv` and
/// `plots/<metric>.svg` under `dir`. Returns the written paths.
pub fn write_bundle(dir: &Path, config: &ExperimentConfig, outcome: &ExperimentOutcome) -> io::Result<Vec<PathBuf>> {
    let plots = dir.join("plots");
    fs::create_dir_all(&plots)?;
    let mut files: Vec<(PathBuf, String)> = vec![
        (
            dir.join("report.json"),
            serde_json::to_string_pretty(&ReportBundle::new(config, outcome))? + "\n",
        ),
        (dir.join("metrics.csv"), metrics_csv(&outcome.records)?),
        (dir.join("summary.csv"), summary_csv(&outcome.report)?),
        (dir.join("composition.csv"), composition_csv(&outcome.composition, None)?),
    ];
    for m in Metric::ALL {
        files.push((
            plots.join(format!("{}.svg", m.name())),
            svg::metric_chart(&outcome.report, m, &outcome.name),
        ));
    }
    for (p, text) in &files {
        fs::write(p, text)?;
    }
    Ok(files.into_iter().map(|(p, _)| p).collect())
}
