//! Run reports: a per-epoch series file and a JSON summary.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::stats::ols_slope;
use crate::error::{ensure, Error, Result};
use crate::sim::eventlog::events_to_string;
use crate::sim::{RunOutput, SeriesRow};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub epochs: usize,
    pub terminal_value: f64,
    /// Least-squares slope of value against time, currency per day.
    pub value_drift: f64,
    pub mean_abs_beta: f64,
    pub max_abs_beta: f64,
    pub passive_fills: usize,
    pub aggressive_fills: usize,
    /// Fill cost against the arrival midpoint.
    pub slippage: f64,
    pub terminal_holdings: Vec<f64>,
}

impl Summary {
    pub fn from_series(series: &[SeriesRow]) -> Self {
        let Some(last) = series.last() else {
            return Self::default();
        };
        let t: Vec<f64> = series.iter().map(|r| r.t).collect();
        let v: Vec<f64> = series.iter().map(|r| r.value).collect();
        let betas = series.iter().map(|r| r.beta.abs());
        Self {
            epochs: series.len(),
            terminal_value: last.value,
            value_drift: ols_slope(&t, &v),
            mean_abs_beta: betas.clone().sum::<f64>() / series.len() as f64,
            max_abs_beta: betas.fold(0.0, f64::max),
            passive_fills: last.passive_fills,
            aggressive_fills: last.aggressive_fills,
            slippage: last.slippage,
            terminal_holdings: last.holdings.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub policy: String,
    pub seed: u64,
    pub series: Vec<SeriesRow>,
    pub summary: Summary,
    pub rejects: usize,
    pub skipped: usize,
}

impl RunReport {
    pub fn new(policy: &str, seed: u64, out: &RunOutput) -> Self {
        Self {
            policy: policy.to_string(),
            seed,
            summary: Summary::from_series(&out.series),
            series: out.series.clone(),
            rejects: out.rejects,
            skipped: out.skipped,
        }
    }
}

fn header(assets: usize) -> String {
    let mut cols = vec![
        "t".to_string(),
        "value".into(),
        "gmv".into(),
        "net".into(),
        "beta".into(),
    ];
    cols.extend((0..assets).map(|i| format!("q{i}")));
    cols.extend([
        "passive_fills".into(),
        "aggressive_fills".into(),
        "slippage".into(),
    ]);
    cols.join(",")
}

/// Series as comma-separated text. Floats use the shortest representation
/// that parses back to the same value.
pub fn series_to_string(series: &[SeriesRow], assets: usize) -> String {
    let mut s = header(assets);
    s.push('\n');
    for r in series {
        let mut f = vec![
            r.t.to_string(),
            r.value.to_string(),
            r.gmv.to_string(),
            r.net.to_string(),
            r.beta.to_string(),
        ];
        f.extend(r.holdings.iter().map(f64::to_string));
        f.extend([
            r.passive_fills.to_string(),
            r.aggressive_fills.to_string(),
            r.slippage.to_string(),
        ]);
        s.push_str(&f.join(","));
        s.push('\n');
    }
    s
}

pub fn parse_series(text: &str) -> Result<Vec<SeriesRow>> {
    let mut lines = text.lines();
    let head = lines
        .next()
        .ok_or_else(|| Error::Data("series file is empty".into()))?;
    let cols = head.split(',').count();
    ensure!(cols >= 8, Data, "series header has {cols} columns");
    let assets = cols - 8;
    ensure!(
        head == header(assets),
        Data,
        "unexpected series header '{head}'"
    );
    lines
        .enumerate()
        .map(|(k, line)| {
            let f: Vec<&str> = line.split(',').collect();
            ensure!(
                f.len() == cols,
                Data,
                "series row {} has {} fields",
                k + 1,
                f.len()
            );
            let num = |s: &str| -> Result<f64> {
                s.parse()
                    .map_err(|_| Error::Data(format!("bad number '{s}' in series row {}", k + 1)))
            };
            let count = |s: &str| -> Result<usize> {
                s.parse()
                    .map_err(|_| Error::Data(format!("bad count '{s}' in series row {}", k + 1)))
            };
            Ok(SeriesRow {
                t: num(f[0])?,
                value: num(f[1])?,
                gmv: num(f[2])?,
                net: num(f[3])?,
                beta: num(f[4])?,
                holdings: f[5..5 + assets]
                    .iter()
                    .map(|s| num(s))
                    .collect::<Result<_>>()?,
                passive_fills: count(f[5 + assets])?,
                aggressive_fills: count(f[6 + assets])?,
                slippage: num(f[7 + assets])?,
            })
        })
        .collect()
}

/// Files written for one report.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportFiles {
    pub series: PathBuf,
    pub summary: PathBuf,
}

/// Writes `series.csv` and `summary.json` under `dir`.
pub fn emit_report(report: &RunReport, assets: usize, dir: &Path) -> Result<ReportFiles> {
    fs::create_dir_all(dir)?;
    let files = ReportFiles {
        series: dir.join("series.csv"),
        summary: dir.join("summary.json"),
    };
    fs::write(&files.series, series_to_string(&report.series, assets))?;
    let summary = serde_json::json!({
        "policy": report.policy,
        "seed": report.seed,
        "rejects": report.rejects,
        "skipped": report.skipped,
        "summary": report.summary,
    });
    fs::write(
        &files.summary,
        serde_json::to_string_pretty(&summary)? + "\n",
    )?;
    Ok(files)
}

/// Writes the event log next to a report.
pub fn emit_events(out: &RunOutput, dir: &Path) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let path = dir.join("events.log");
    fs::write(&path, events_to_string(&out.events))?;
    Ok(path)
}

/// Reads back a summary written by [`emit_report`].
pub fn read_summary(path: &Path) -> Result<Summary> {
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(path)?)?;
    let s = v
        .get("summary")
        .ok_or_else(|| Error::Data("summary file lacks 'summary'".into()))?;
    Ok(serde_json::from_value(s.clone())?)
}
