//! A small resolution and layer sweep written to CSV and JSON.
//!
//! cargo run --release --example sweep -- [out-dir]

use spmap::harness::config::{fixture_items, Resolution, SweepConfig};
use spmap::harness::pipeline::Representation;
use spmap::harness::report::write_sweep;
use spmap::harness::sweep::run_sweep;

fn main() -> spmap::Result<()> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "sweep-example".into());
    let mut cfg = SweepConfig {
        resolutions: vec![Resolution::equirect(32), Resolution::equirect(64)],
        layers: vec![1, 4],
        representations: vec![Representation::Sp, Representation::Nested],
        ..Default::default()
    };
    cfg.metrics.samples = 20_000;
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get());
    let outcome = run_sweep(&fixture_items(), &cfg, None, workers)?;
    let files = write_sweep(&outcome, std::path::Path::new(&out))?;

    for s in &outcome.summary {
        let cd = s.chamfer.as_ref().map_or(f64::NAN, |c| c.mean);
        let st = s.storage_deflated.as_ref().map_or(f64::NAN, |c| c.mean);
        println!("{:<7} {:<8} k={} chamfer {:.5} deflated {:>8.0} B", s.repr, s.resolution, s.k, cd, st);
    }
    println!("{} rows, {} failures -> {}", outcome.rows.len(), outcome.failures.len(), files.rows.display());
    Ok(())
}
