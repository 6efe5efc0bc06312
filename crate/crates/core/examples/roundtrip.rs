//! Encode, decode and score every corpus shape at one resolution.

use spmap::harness::pipeline::{run_cell, Cell, MetricOptions, PreparedMesh, Representation};
use spmap::mesh::normalize_mesh;

fn main() -> spmap::Result<()> {
    let opts = MetricOptions {
        samples: 30_000,
        ..Default::default()
    };
    let cell = Cell {
        repr: Representation::Sp,
        height: 64,
        layers: 4,
    };
    println!("{:<16} {:>9} {:>8} {:>8} {:>10}", "mesh", "chamfer", "iou", "fscore", "decoder");
    for f in spmap::fixtures::desk_corpus() {
        let src = PreparedMesh::new(f.id, normalize_mesh(&f.mesh)?, f.watertight, &opts)?;
        match run_cell(&src, &cell, &opts, None) {
            Ok(r) => println!(
                "{:<16} {:>9.5} {:>8} {:>8.2} {:>10}",
                r.mesh_id,
                r.chamfer,
                r.vol_iou.map_or("-".into(), |v| format!("{v:.4}")),
                r.f_score,
                r.decoder
            ),
            Err(e) => println!("{:<16} failed: {e}", f.id),
        }
    }
    Ok(())
}
