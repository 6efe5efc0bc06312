//! An open dome cannot be filled by parity, so it is rebuilt from the grid.

use spmap::harness::pipeline::decode_map;
use spmap::encode::{encode, EncodeConfig};
use spmap::metrics::{evaluate, EvalOptions};
use spmap::sphere::SphericalGrid;

fn main() -> spmap::Result<()> {
    let f = spmap::fixtures::fixture("hemisphere").unwrap();
    let t = f.mesh.topology();
    println!("dome: {} faces, {} boundary loops", t.face_count, t.boundary_loops());

    let map = encode(&f.mesh, &EncodeConfig::new(SphericalGrid::new(64, 128)?, 2))?;
    let (recon, decoder) = decode_map(&map, f.watertight, 64, 3)?;
    let report = evaluate(&recon, &f.mesh, false, &EvalOptions::default())?;
    println!("decoded with {decoder}: {} faces, chamfer {:.5}, f-score {:.2}", recon.faces.len(), report.chamfer, report.f_score);
    Ok(())
}
