//! Aggregate tables over per-image evaluation reports.
//!
//! * `table3.csv`: sup-norm error per channel.
//! * `table4.csv`: percentage of pixels per error range and channel.
//! * `table5.csv`: maximum intensities and the removal verdict.
//! * `ensemble.json`: run ids with their validation errors.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{round_preserving_sum, EvalReport};
use crate::train::{test_error_ci, ConfidenceInterval, EnsembleResult};

const CHANNELS: [&str; 3] = ["R", "G", "B"];

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

/// `Average`, `Minimum`, `Maximum` and `Median` of each column.
fn summary_rows(columns: &[Vec<f64>]) -> Vec<(&'static str, Vec<f64>)> {
    let stat = |f: &dyn Fn(&[f64]) -> f64| columns.iter().map(|c| f(c)).collect::<Vec<f64>>();
    vec![
        ("Average", stat(&|c| c.iter().sum::<f64>() / c.len() as f64)),
        ("Minimum", stat(&|c| c.iter().copied().fold(f64::INFINITY, f64::min))),
        ("Maximum", stat(&|c| c.iter().copied().fold(f64::NEG_INFINITY, f64::max))),
        ("Median", stat(&|c| median(c))),
    ]
}

fn fmt1(v: f64) -> String {
    format!("{v:.1}")
}

fn ensure_nonempty(reports: &[EvalReport]) -> Result<()> {
    if reports.is_empty() {
        return Err(Error::invalid("no evaluation reports to aggregate"));
    }
    Ok(())
}

pub type Table = Vec<Vec<String>>;

pub fn table3(reports: &[EvalReport]) -> Result<Table> {
    ensure_nonempty(reports)?;
    let mut rows = vec![vec!["image_id".to_string(), "e_R".into(), "e_G".into(), "e_B".into()]];
    for r in reports {
        let mut row = vec![r.image_id.clone()];
        row.extend(r.sup_errors.iter().map(|e| e.to_string()));
        rows.push(row);
    }
    let columns: Vec<Vec<f64>> = (0..3).map(|k| reports.iter().map(|r| f64::from(r.sup_errors[k])).collect()).collect();
    for (label, values) in summary_rows(&columns) {
        let mut row = vec![label.to_string()];
        row.extend(values.into_iter().map(fmt1));
        rows.push(row);
    }
    Ok(rows)
}

/// Per-image rows are rounded to one decimal with the largest remainder
/// method, so each channel's ranges add up to exactly 100.0. The Average row
/// is rounded the same way; Minimum, Maximum and Median are columnwise and
/// need not add up to 100.
pub fn table4(reports: &[EvalReport]) -> Result<Table> {
    ensure_nonempty(reports)?;
    let labels = &reports[0].range_labels;
    if reports.iter().any(|r| &r.range_labels != labels) {
        return Err(Error::invalid("reports use different error ranges"));
    }
    let bins = labels.len();
    let mut header = vec!["image_id".to_string()];
    for c in CHANNELS {
        header.extend(labels.iter().map(|l| format!("{c} {l}")));
    }
    let mut rows = vec![header];
    let rounded_row = |label: String, pcts: &[Vec<f64>]| {
        let mut row = vec![label];
        for channel in pcts {
            row.extend(round_preserving_sum(channel, 1).into_iter().map(fmt1));
        }
        row
    };
    for r in reports {
        rows.push(rounded_row(r.image_id.clone(), &r.range_pcts));
    }
    let columns: Vec<Vec<f64>> = (0..3 * bins)
        .map(|i| reports.iter().map(|r| r.range_pcts[i / bins][i % bins]).collect())
        .collect();
    for (label, values) in summary_rows(&columns) {
        if label == "Average" {
            let per_channel: Vec<Vec<f64>> = values.chunks(bins).map(<[f64]>::to_vec).collect();
            rows.push(rounded_row(label.to_string(), &per_channel));
        } else {
            let mut row = vec![label.to_string()];
            row.extend(values.into_iter().map(fmt1));
            rows.push(row);
        }
    }
    Ok(rows)
}

pub fn table5(reports: &[EvalReport]) -> Result<Table> {
    ensure_nonempty(reports)?;
    let mut rows = vec![vec![
        "image_id".to_string(),
        "int_max_I".into(),
        "int_max_prime".into(),
        "int_max_r".into(),
        "removed".into(),
    ]];
    for r in reports {
        rows.push(vec![
            r.image_id.clone(),
            fmt1(r.int_max_i),
            fmt1(r.int_max_prime),
            fmt1(r.int_max_r),
            if r.sr_removed { "Yes" } else { "No" }.into(),
        ]);
    }
    Ok(rows)
}

pub fn write_csv(table: &Table, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Io(e.into()))?;
    for row in table {
        w.write_record(row).map_err(|e| Error::Io(e.into()))?;
    }
    w.flush()?;
    Ok(())
}

/// Headline numbers over the whole test set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub images: usize,
    pub removed: usize,
    pub removed_pct: f64,
    /// 95% interval of the per-image hidden-region MSE; absent for fewer
    /// than two images.
    pub test_mse: Option<ConfidenceInterval>,
}

pub fn summarize(reports: &[EvalReport]) -> Result<Summary> {
    ensure_nonempty(reports)?;
    let removed = reports.iter().filter(|r| r.sr_removed).count();
    let mses: Vec<f64> = reports.iter().map(|r| r.mse).collect();
    Ok(Summary {
        images: reports.len(),
        removed,
        removed_pct: 100.0 * removed as f64 / reports.len() as f64,
        test_mse: if mses.len() >= 2 { Some(test_error_ci(&mses, 0.95)?) } else { None },
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReportFiles {
    pub table3: PathBuf,
    pub table4: PathBuf,
    pub table5: PathBuf,
    pub summary: PathBuf,
    pub ensemble: Option<PathBuf>,
}

/// Writes every table into `out_dir`.
pub fn write_reports(reports: &[EvalReport], ensemble: Option<&EnsembleResult>, out_dir: impl AsRef<Path>) -> Result<ReportFiles> {
    let out = out_dir.as_ref();
    fs::create_dir_all(out)?;
    let files = ReportFiles {
        table3: out.join("table3.csv"),
        table4: out.join("table4.csv"),
        table5: out.join("table5.csv"),
        summary: out.join("summary.json"),
        ensemble: ensemble.map(|_| out.join("ensemble.json")),
    };
    write_csv(&table3(reports)?, &files.table3)?;
    write_csv(&table4(reports)?, &files.table4)?;
    write_csv(&table5(reports)?, &files.table5)?;
    fs::write(&files.summary, serde_json::to_vec_pretty(&summarize(reports)?)?)?;
    if let (Some(e), Some(path)) = (ensemble, &files.ensemble) {
        fs::write(path, serde_json::to_vec_pretty(e)?)?;
    }
    Ok(files)
}
