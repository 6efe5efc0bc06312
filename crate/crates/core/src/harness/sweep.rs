//! Full-factorial sweeps over a corpus.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::config::{CorpusItem, SweepConfig};
use crate::harness::pipeline::{run_cell, Cell, CellResult, EncodingCache, PreparedMesh, Representation};
use crate::mesh::normalize_mesh;

/// A cell or mesh that produced no row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub mesh_id: String,
    /// `None` when the mesh itself could not be loaded or prepared.
    pub cell: Option<Cell>,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub median: f64,
}

impl Stat {
    fn of(values: &[f64]) -> Option<Stat> {
        if values.is_empty() {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let mid = v.len() / 2;
        let median = if v.len() % 2 == 1 { v[mid] } else { 0.5 * (v[mid - 1] + v[mid]) };
        Some(Stat {
            mean: v.iter().sum::<f64>() / v.len() as f64,
            median,
        })
    }
}

/// Aggregate of one sweep cell over the corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub repr: Representation,
    pub resolution: String,
    pub k: usize,
    pub meshes: usize,
    pub failed: usize,
    /// Some mesh of the corpus has no row in this cell.
    pub incomplete: bool,
    pub chamfer: Option<Stat>,
    pub vol_iou: Option<Stat>,
    pub f_score: Option<Stat>,
    pub storage_raw: Option<Stat>,
    pub storage_deflated: Option<Stat>,
    pub coverage: Option<Stat>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepOutcome {
    pub config: SweepConfig,
    pub corpus: Vec<String>,
    pub rows: Vec<CellResult>,
    pub summary: Vec<CellSummary>,
    pub failures: Vec<Failure>,
}

impl SweepOutcome {
    pub fn is_complete(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Cells of the configuration in report order.
pub fn cells(cfg: &SweepConfig) -> Vec<Cell> {
    let mut out = Vec::new();
    for &repr in &cfg.representations {
        for res in &cfg.resolutions {
            for &layers in &cfg.layers {
                out.push(Cell {
                    repr,
                    height: res.height,
                    layers,
                });
            }
        }
    }
    out.sort();
    out.dedup();
    out
}

/// Runs every cell on every mesh with `workers` threads. Rows come back
/// sorted by mesh id and cell, whatever the thread count.
pub fn run_sweep(
    corpus: &[CorpusItem],
    cfg: &SweepConfig,
    cache: Option<&EncodingCache>,
    workers: usize,
) -> Result<SweepOutcome> {
    cfg.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Config(e.to_string()))?;
    pool.install(|| sweep_in_pool(corpus, cfg, cache))
}

fn sweep_in_pool(corpus: &[CorpusItem], cfg: &SweepConfig, cache: Option<&EncodingCache>) -> Result<SweepOutcome> {
    let opts = cfg.metric_options();
    let grid = cells(cfg);
    let mut failures = Vec::new();

    let prepared: Vec<Result<PreparedMesh>> = corpus
        .par_iter()
        .map(|item| {
            let mesh = normalize_mesh(&item.load()?)?;
            PreparedMesh::new(item.id(), mesh, item.watertight(), &opts)
        })
        .collect();
    let mut ready = Vec::new();
    for (item, p) in corpus.iter().zip(prepared) {
        match p {
            Ok(p) => ready.push(p),
            Err(e) => {
                log::error!("{}: {e}", item.id());
                failures.push(Failure {
                    mesh_id: item.id().to_string(),
                    cell: None,
                    error: e.to_string(),
                });
            }
        }
    }

    let jobs: Vec<(&PreparedMesh, Cell)> = ready.iter().flat_map(|m| grid.iter().map(move |&c| (m, c))).collect();
    let results: Vec<Result<CellResult>> = jobs
        .par_iter()
        .map(|(m, cell)| {
            log::info!("{} {} {} k={}", m.id, cell.repr, cell.resolution_label(), cell.layers);
            run_cell(m, cell, &opts, cache)
        })
        .collect();

    let mut rows = Vec::new();
    for ((m, cell), r) in jobs.iter().zip(results) {
        match r {
            Ok(row) => rows.push((m.id.clone(), *cell, row)),
            Err(e) => {
                log::error!("{} {} {} k={}: {e}", m.id, cell.repr, cell.resolution_label(), cell.layers);
                failures.push(Failure {
                    mesh_id: m.id.clone(),
                    cell: Some(*cell),
                    error: e.to_string(),
                });
            }
        }
    }
    rows.sort_by(|a, b| (&a.0, a.1).cmp(&(&b.0, b.1)));
    failures.sort_by(|a, b| (&a.mesh_id, a.cell).cmp(&(&b.mesh_id, b.cell)));

    let corpus_ids: Vec<String> = corpus.iter().map(|c| c.id().to_string()).collect();
    let summary = grid
        .iter()
        .map(|cell| summarize(cell, rows.iter().filter(|r| r.1 == *cell).map(|r| &r.2), corpus_ids.len()))
        .collect();
    Ok(SweepOutcome {
        config: cfg.clone(),
        corpus: corpus_ids,
        rows: rows.into_iter().map(|r| r.2).collect(),
        summary,
        failures,
    })
}

fn summarize<'a>(cell: &Cell, rows: impl Iterator<Item = &'a CellResult>, corpus_len: usize) -> CellSummary {
    let rows: Vec<&CellResult> = rows.collect();
    let pick = |f: &dyn Fn(&CellResult) -> Option<f64>| Stat::of(&rows.iter().filter_map(|r| f(r)).collect::<Vec<_>>());
    CellSummary {
        repr: cell.repr,
        resolution: cell.resolution_label(),
        k: cell.layers,
        meshes: rows.len(),
        failed: corpus_len - rows.len(),
        incomplete: rows.len() < corpus_len,
        chamfer: pick(&|r| Some(r.chamfer)),
        vol_iou: pick(&|r| r.vol_iou),
        f_score: pick(&|r| Some(r.f_score)),
        storage_raw: pick(&|r| Some(r.storage_raw as f64)),
        storage_deflated: pick(&|r| Some(r.storage_deflated as f64)),
        coverage: pick(&|r| r.coverage),
    }
}
