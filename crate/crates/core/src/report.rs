//! CSV, JSON and SVG outputs.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::lab::{RateFit, RunStatus, SweepReport, TimeSeries};

pub fn write_csv(path: &Path, series: &TimeSeries) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(&series.columns).map_err(csv_err)?;
    for row in &series.rows {
        w.write_record(row.iter().map(|v| v.to_string()))
            .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv(path: &Path) -> Result<TimeSeries> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
    let columns: Vec<String> = r
        .headers()
        .map_err(csv_err)?
        .iter()
        .map(String::from)
        .collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(csv_err)?;
        let row = rec
            .iter()
            .map(|s| {
                s.parse::<f64>()
                    .map_err(|e| LabError::Config(format!("bad number `{s}`: {e}")))
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    Ok(TimeSeries { columns, rows })
}

fn csv_err(e: csv::Error) -> LabError {
    LabError::Config(format!("csv: {e}"))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(value)?)?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Criterion {
    pub name: String,
    pub value: f64,
    pub threshold: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordSummary {
    pub eps: f64,
    pub y: f64,
    pub y_psi: f64,
    pub initial_diff: f64,
    pub maxt_violated: bool,
    pub status: RunStatus,
}

/// Condensed sweep outcome written as `report.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub records: Vec<RecordSummary>,
    pub fit: Option<RateFit>,
    pub fit_psi: Option<RateFit>,
    pub m_hat_coarse: Option<f64>,
    pub y_monotone: bool,
    pub criteria: Vec<Criterion>,
}

impl SweepSummary {
    pub fn new(rep: &SweepReport, min_slope: f64, min_r2: f64, max_drift: f64) -> Self {
        let records: Vec<RecordSummary> = rep
            .records
            .iter()
            .map(|r| RecordSummary {
                eps: r.eps,
                y: r.y,
                y_psi: r.y_psi,
                initial_diff: r.initial_diff,
                maxt_violated: r.maxt_violated,
                status: r.terminal_status.clone(),
            })
            .collect();
        let psi_pairs: Vec<(f64, f64)> = rep
            .records
            .iter()
            .filter(|r| r.terminal_status.is_completed())
            .map(|r| (r.eps, r.y_psi))
            .collect();
        let completed = records.iter().filter(|r| r.status.is_completed()).count();
        let mut criteria = vec![Criterion {
            name: "completed_runs".into(),
            value: completed as f64,
            threshold: records.len() as f64,
            pass: completed == records.len(),
        }];
        let fit = rep.fit.clone();
        let (slope, r2) = fit
            .as_ref()
            .map_or((f64::NAN, f64::NAN), |f| (f.slope, f.r2));
        criteria.push(Criterion {
            name: "slope".into(),
            value: slope,
            threshold: min_slope,
            pass: slope >= min_slope,
        });
        criteria.push(Criterion {
            name: "r2".into(),
            value: r2,
            threshold: min_r2,
            pass: r2 >= min_r2,
        });
        let drift = rep.m_hat_drift().unwrap_or(f64::NAN);
        criteria.push(Criterion {
            name: "m_hat_drift".into(),
            value: drift,
            threshold: max_drift,
            pass: drift <= max_drift && fit.as_ref().is_some_and(|f| f.m_hat.is_finite()),
        });
        Self {
            records,
            fit,
            fit_psi: crate::lab::fit_power(&psi_pairs).ok(),
            m_hat_coarse: rep.m_hat_coarse,
            y_monotone: rep.y_monotone,
            criteria,
        }
    }

    pub fn all_pass(&self) -> bool {
        self.criteria.iter().all(|c| c.pass)
    }
}

/// Log-log plot of `Y(ε)` with the fitted line.
pub fn loglog_svg(fit: &RateFit, title: &str) -> String {
    let (w, h, pad) = (480.0, 360.0, 50.0);
    let lx: Vec<f64> = fit.pairs.iter().map(|p| p.0.log10()).collect();
    let ly: Vec<f64> = fit.pairs.iter().map(|p| p.1.log10()).collect();
    let range = |v: &[f64]| {
        let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let m = ((hi - lo) * 0.1).max(0.1);
        (lo - m, hi + m)
    };
    let (x0, x1) = range(&lx);
    let (y0, y1) = range(&ly);
    let px = |x: f64| pad + (x - x0) / (x1 - x0) * (w - 2.0 * pad);
    let py = |y: f64| h - pad - (y - y0) / (y1 - y0) * (h - 2.0 * pad);
    let mut s = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n\
         <text x=\"{}\" y=\"20\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"14\">{title}</text>\n\
         <line x1=\"{pad}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n\
         <line x1=\"{pad}\" y1=\"{pad}\" x2=\"{pad}\" y2=\"{}\" stroke=\"black\"/>\n",
        w / 2.0,
        h - pad,
        w - pad,
        h - pad,
        h - pad
    );
    s += &format!(
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">log10 eps</text>\n",
        w / 2.0,
        h - 12.0
    );
    s += &format!(
        "<text x=\"14\" y=\"{}\" transform=\"rotate(-90 14 {})\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">log10 Y</text>\n",
        h / 2.0,
        h / 2.0
    );
    // fitted line through the mean point
    let n = lx.len() as f64;
    let (mx, my) = (lx.iter().sum::<f64>() / n, ly.iter().sum::<f64>() / n);
    let line = |x: f64| my + fit.slope * (x - mx);
    s += &format!(
        "<line x1=\"{:.2}\" y1=\"{:.2}\" x2=\"{:.2}\" y2=\"{:.2}\" stroke=\"steelblue\" stroke-dasharray=\"4 3\"/>\n",
        px(x0),
        py(line(x0)),
        px(x1),
        py(line(x1))
    );
    for (x, y) in lx.iter().zip(&ly) {
        s += &format!(
            "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"4\" fill=\"firebrick\"/>\n",
            px(*x),
            py(*y)
        );
    }
    s += &format!(
        "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"12\">slope {:.3}, r2 {:.4}</text>\n",
        pad + 10.0,
        pad + 10.0,
        fit.slope,
        fit.r2
    );
    s += "</svg>\n";
    s
}
