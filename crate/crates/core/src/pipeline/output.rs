//! Plot-ready CSV files. Floats carry 17 significant digits; every file is
//! written atomically.

use std::path::{Path, PathBuf};

use super::dataset::Dataset;
use super::protocol::{ArmRun, GeePoint, SweepResult};
use crate::atomic;
use crate::error::{Error, Result};
use crate::nn::TrainReport;

/// Formats a float with 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Serializes rows to CSV bytes.
pub fn csv_bytes(header: &[&str], rows: &[Vec<String>]) -> Result<Vec<u8>> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    let csv_err = |e: csv::Error| Error::Format(format!("csv: {e}"));
    w.write_record(header).map_err(csv_err)?;
    for r in rows {
        w.write_record(r).map_err(csv_err)?;
    }
    w.into_inner().map_err(|e| Error::Format(format!("csv: {e}")))
}

pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    atomic::write(path, &csv_bytes(header, rows)?)
}

/// `8-8-2` style label for a hidden-layer list.
pub fn layers_label(hidden: &[usize]) -> String {
    hidden.iter().map(usize::to_string).collect::<Vec<_>>().join("-")
}

fn curve_rows(run: &ArmRun) -> Vec<Vec<String>> {
    run.curve
        .iter()
        .map(|p| {
            vec![
                p.epoch.to_string(),
                p.cumulative_epoch.to_string(),
                p.phase.name().to_string(),
                fmt_f64(p.train_loss),
                fmt_f64(p.validation_loss),
            ]
        })
        .collect()
}

const CURVE_HEADER: [&str; 5] = ["epoch", "cumulative_epoch", "phase", "train_rel_mse", "val_rel_mse"];

/// Curve file of one arm run.
pub fn write_run_curve(path: &Path, run: &ArmRun) -> Result<()> {
    write_csv(path, &CURVE_HEADER, &curve_rows(run))
}

/// Curve file for a single training phase.
pub fn write_report_curve(path: &Path, report: &TrainReport) -> Result<()> {
    let rows: Vec<Vec<String>> = report
        .train_loss
        .iter()
        .zip(&report.validation_loss)
        .enumerate()
        .map(|(e, (t, v))| vec![(e + 1).to_string(), (e + 1).to_string(), "train".to_string(), fmt_f64(*t), fmt_f64(*v)])
        .collect();
    write_csv(path, &CURVE_HEADER, &rows)
}

/// `curves_<case>_<arm>_<x>_<seed>.csv` per run and `testerr_<case>.csv`.
pub fn write_protocol_b(dir: &Path, case: &str, runs: &[ArmRun]) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    let mut summary = Vec::with_capacity(runs.len());
    for run in runs {
        let path = dir.join(format!("curves_{case}_{}_{}_{}.csv", run.arm.name(), run.x, run.replicate));
        write_csv(&path, &CURVE_HEADER, &curve_rows(run))?;
        written.push(path);
        summary.push(vec![
            run.x.to_string(),
            run.arm.name().to_string(),
            run.replicate.to_string(),
            run.empirical_used.to_string(),
            fmt_f64(run.test_error),
        ]);
    }
    let path = dir.join(format!("testerr_{case}.csv"));
    write_csv(&path, &["x", "arm", "seed", "empirical_used", "test_error"], &summary)?;
    written.push(path);
    Ok(written)
}

/// One curve file per candidate and replicate plus `sweep_<case>.csv`.
pub fn write_sweep(dir: &Path, case: &str, results: &[SweepResult]) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    let mut summary = Vec::new();
    for res in results {
        let label = layers_label(&res.hidden);
        for run in &res.runs {
            let path = dir.join(format!("curves_{case}_sweep_{label}_{}_{}.csv", run.x, run.replicate));
            write_csv(&path, &CURVE_HEADER, &curve_rows(run))?;
            written.push(path);
            summary.push(vec![
                label.clone(),
                run.x.to_string(),
                run.replicate.to_string(),
                fmt_f64(run.final_train),
                fmt_f64(run.final_validation),
                fmt_f64(run.test_error),
            ]);
        }
    }
    let path = dir.join(format!("sweep_{case}.csv"));
    write_csv(&path, &["architecture", "x", "seed", "final_train_rel_mse", "final_val_rel_mse", "test_error"], &summary)?;
    written.push(path);
    Ok(written)
}

/// `gee_<pmax>dBm.csv` with one row per test drop and `gee_summary.csv` with means.
pub fn write_gee(dir: &Path, points: &[GeePoint]) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    let mut summary = Vec::new();
    for p in points {
        let rows: Vec<Vec<String>> = (0..p.ann.len())
            .map(|i| vec![fmt_f64(p.pmax_dbm), i.to_string(), fmt_f64(p.ann[i]), fmt_f64(p.oracle[i]), fmt_f64(p.full_power[i])])
            .collect();
        let path = dir.join(format!("gee_{}dBm.csv", format_pmax(p.pmax_dbm)));
        write_csv(&path, &["pmax_dBm", "drop", "ann_gee", "oracle_gee", "fullpower_gee"], &rows)?;
        written.push(path);
        summary.push(vec![
            fmt_f64(p.pmax_dbm),
            fmt_f64(p.mean_ann()),
            fmt_f64(p.mean_oracle()),
            fmt_f64(p.mean_full_power()),
            fmt_f64(p.ann_ratio()),
            p.excluded.to_string(),
        ]);
    }
    let path = dir.join("gee_summary.csv");
    write_csv(&path, &["pmax_dBm", "ann_gee", "oracle_gee", "fullpower_gee", "ann_over_oracle", "excluded"], &summary)?;
    written.push(path);
    Ok(written)
}

/// Short, filename-safe rendering of a dBm value, e.g. `-7.14`.
fn format_pmax(v: f64) -> String {
    let s = format!("{v:.2}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    s.to_string()
}

/// Dataset rows followed by a sidecar `<stem>.columns.json` describing every column.
pub fn write_dataset(dir: &Path, stem: &str, data: &Dataset) -> Result<Vec<PathBuf>> {
    let header: Vec<&str> =
        data.feature_columns.iter().chain(&data.target_columns).map(|c| c.name.as_str()).collect();
    let rows: Vec<Vec<String>> = (0..data.len())
        .map(|i| data.features.row(i).iter().chain(data.targets.row(i)).map(|v| fmt_f64(*v)).collect())
        .collect();
    let csv_path = dir.join(format!("{stem}.csv"));
    write_csv(&csv_path, &header, &rows)?;
    let sidecar = serde_json::json!({
        "rows": data.len(),
        "provenance": data.provenance,
        "features": data.feature_columns,
        "targets": data.target_columns,
    });
    let json_path = dir.join(format!("{stem}.columns.json"));
    let mut bytes = serde_json::to_vec_pretty(&sidecar).map_err(|e| Error::Format(e.to_string()))?;
    bytes.push(b'\n');
    atomic::write(&json_path, &bytes)?;
    Ok(vec![csv_path, json_path])
}
