//! CSV and JSON emission. Reports hold no timings or host details, so
//! equal inputs give byte-identical files.

use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::harness::pipeline::CellResult;
use crate::harness::sweep::{CellSummary, Stat, SweepOutcome};

pub const ROW_COLUMNS: [&str; 20] = [
    "mesh_id",
    "resolution",
    "k",
    "chamfer",
    "vol_iou",
    "f_score",
    "storage_raw",
    "storage_deflated",
    "seam_abs_rel",
    "polar_abs_rel",
    "equator_abs_rel",
    "truncation_count",
    "repr",
    "decoder",
    "voxels",
    "coverage",
    "l1",
    "l_edge",
    "l_spec",
    "l_total",
];

pub const SUMMARY_COLUMNS: [&str; 18] = [
    "repr",
    "resolution",
    "k",
    "meshes",
    "failed",
    "incomplete",
    "chamfer_mean",
    "chamfer_median",
    "vol_iou_mean",
    "vol_iou_median",
    "f_score_mean",
    "f_score_median",
    "storage_raw_mean",
    "storage_raw_median",
    "storage_deflated_mean",
    "storage_deflated_median",
    "coverage_mean",
    "coverage_median",
];

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Config(format!("csv: {other:?}")),
    }
}

pub fn row_record(r: &CellResult) -> Vec<String> {
    let q = r.quality;
    vec![
        r.mesh_id.clone(),
        r.resolution.clone(),
        r.k.to_string(),
        r.chamfer.to_string(),
        opt(r.vol_iou),
        r.f_score.to_string(),
        r.storage_raw.to_string(),
        r.storage_deflated.to_string(),
        opt(r.seam_abs_rel),
        opt(r.polar_abs_rel),
        opt(r.equator_abs_rel),
        r.truncation_count.to_string(),
        r.repr.to_string(),
        r.decoder.to_string(),
        r.voxels.to_string(),
        opt(r.coverage),
        opt(q.map(|q| q.l1)),
        opt(q.map(|q| q.l_edge)),
        opt(q.map(|q| q.l_spec)),
        opt(q.map(|q| q.l_total)),
    ]
}

pub fn rows_csv(rows: &[CellResult]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(ROW_COLUMNS).map_err(csv_err)?;
    for r in rows {
        w.write_record(row_record(r)).map_err(csv_err)?;
    }
    finish(w)
}

pub fn summary_csv(summary: &[CellSummary]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(SUMMARY_COLUMNS).map_err(csv_err)?;
    for s in summary {
        let mut rec = vec![
            s.repr.to_string(),
            s.resolution.clone(),
            s.k.to_string(),
            s.meshes.to_string(),
            s.failed.to_string(),
            s.incomplete.to_string(),
        ];
        for stat in [&s.chamfer, &s.vol_iou, &s.f_score, &s.storage_raw, &s.storage_deflated, &s.coverage] {
            rec.push(opt(stat.as_ref().map(|x: &Stat| x.mean)));
            rec.push(opt(stat.as_ref().map(|x: &Stat| x.median)));
        }
        w.write_record(rec).map_err(csv_err)?;
    }
    finish(w)
}

fn finish(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    String::from_utf8(bytes).map_err(|e| Error::Config(e.to_string()))
}

pub fn to_json<T: serde::Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| Error::Config(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

/// Files written by [`write_sweep`].
#[derive(Debug, Clone)]
pub struct SweepFiles {
    pub rows: PathBuf,
    pub summary: PathBuf,
    pub json: PathBuf,
}

/// Writes `results.csv`, `summary.csv` and `report.json` into `dir`.
pub fn write_sweep(outcome: &SweepOutcome, dir: &Path) -> Result<SweepFiles> {
    std::fs::create_dir_all(dir)?;
    let files = SweepFiles {
        rows: dir.join("results.csv"),
        summary: dir.join("summary.csv"),
        json: dir.join("report.json"),
    };
    std::fs::write(&files.rows, rows_csv(&outcome.rows)?)?;
    std::fs::write(&files.summary, summary_csv(&outcome.summary)?)?;
    std::fs::write(&files.json, to_json(outcome)?)?;
    Ok(files)
}
