//! Plot-ready series from the CSV files written by the runners.
//!
//! Each series becomes `<stem>_<series>.csv` with columns `x,y,se`. Rate
//! series are meant for log-log axes; concentration series plot event
//! frequency against `n`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{CliError, CliResult};
use crate::experiments::{CONCENTRATION_HEADER, RATE_HEADER, RATE_SUMMARY_HEADER};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
    pub se: f64,
}

/// Named points, e.g. `("excess_risk", [...])`.
pub type Series = (String, Vec<Point>);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Schema {
    Rate,
    RateSummary,
    Concentration,
}

#[derive(Debug, Default)]
pub struct PlotOutcome {
    pub files: Vec<PathBuf>,
    pub warnings: Vec<String>,
}

fn detect(header: &csv::StringRecord) -> Option<Schema> {
    let fields: Vec<&str> = header.iter().collect();
    if fields == RATE_HEADER {
        Some(Schema::Rate)
    } else if fields == RATE_SUMMARY_HEADER {
        Some(Schema::RateSummary)
    } else if fields == CONCENTRATION_HEADER {
        Some(Schema::Concentration)
    } else {
        None
    }
}

fn num(record: &csv::StringRecord, i: usize) -> Option<f64> {
    record.get(i).and_then(|s| s.parse().ok())
}

/// Read a runner CSV and group it into named series, in first-seen order of `x`.
pub fn read_series(path: &Path) -> CliResult<(Schema, Vec<Series>)> {
    let mut reader = csv::Reader::from_path(path)?;
    let header = reader.headers()?.clone();
    let schema = detect(&header).ok_or_else(|| CliError::UnknownSchema {
        path: path.display().to_string(),
        header: header.iter().collect::<Vec<_>>().join(","),
    })?;
    let records: Vec<csv::StringRecord> = reader.records().collect::<Result<_, _>>()?;
    let series = match schema {
        Schema::RateSummary => ["excess_risk", "alpha_part", "functional_part"]
            .iter()
            .enumerate()
            .map(|(k, name)| {
                let pts = records
                    .iter()
                    .filter_map(|r| {
                        Some(Point {
                            x: num(r, 0)?,
                            y: num(r, 5 + 2 * k)?,
                            se: num(r, 6 + 2 * k).unwrap_or(f64::NAN),
                        })
                    })
                    .filter(|p| p.y.is_finite())
                    .collect();
                (name.to_string(), pts)
            })
            .collect(),
        Schema::Rate => ["excess_risk", "alpha_part", "functional_part"]
            .iter()
            .enumerate()
            .map(|(k, name)| {
                let mut by_n: Vec<(f64, Vec<f64>)> = Vec::new();
                for r in &records {
                    let (Some(n), Some(v)) = (num(r, 0), num(r, 4 + k)) else {
                        continue;
                    };
                    match by_n.iter_mut().find(|(x, _)| *x == n) {
                        Some((_, vals)) => vals.push(v),
                        None => by_n.push((n, vec![v])),
                    }
                }
                let pts = by_n
                    .into_iter()
                    .map(|(x, vals)| {
                        let k = vals.len() as f64;
                        let mean = vals.iter().sum::<f64>() / k;
                        let se = if vals.len() > 1 {
                            (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1.0) / k)
                                .sqrt()
                        } else {
                            f64::NAN
                        };
                        Point { x, y: mean, se }
                    })
                    .collect();
                (name.to_string(), pts)
            })
            .collect(),
        Schema::Concentration => {
            let mut by_lemma: BTreeMap<String, Vec<Point>> = BTreeMap::new();
            for r in &records {
                let (Some(n), Some(reps), Some(f)) = (num(r, 1), num(r, 2), num(r, 4)) else {
                    continue;
                };
                let lemma = r.get(0).unwrap_or_default().to_string();
                by_lemma
                    .entry(format!("lemma_{lemma}"))
                    .or_default()
                    .push(Point {
                        x: n,
                        y: f,
                        se: (f * (1.0 - f) / reps).sqrt(),
                    });
            }
            by_lemma.into_iter().collect()
        }
    };
    Ok((schema, series))
}

pub fn emit_plot_data(path: &Path, out: &Path) -> CliResult<PlotOutcome> {
    let (_, series) = read_series(path)?;
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "series".into());
    let mut outcome = PlotOutcome::default();
    if series.iter().all(|(_, pts)| pts.is_empty()) {
        outcome.warnings.push(format!(
            "{} has no data rows; nothing written",
            path.display()
        ));
        return Ok(outcome);
    }
    std::fs::create_dir_all(out)?;
    for (name, pts) in series {
        if pts.is_empty() {
            continue;
        }
        let file = out.join(format!("{stem}_{name}.csv"));
        let mut w = csv::Writer::from_path(&file)?;
        for p in &pts {
            w.serialize(p)?;
        }
        w.flush()?;
        outcome.files.push(file);
    }
    Ok(outcome)
}
