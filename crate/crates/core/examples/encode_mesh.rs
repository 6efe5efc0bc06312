//! Encode a mesh into a multi-layer spherical depth map and save it.
//!
//! cargo run --release --example encode_mesh -- [mesh.obj|fixture-id] [out.spm]

use spmap::encode::{encode_with_stats, layer_histogram, EncodeConfig};
use spmap::mesh::normalize_mesh;
use spmap::sphere::SphericalGrid;
use spmap::spm::write_spm;

fn main() -> spmap::Result<()> {
    let mut args = std::env::args().skip(1);
    let source = args.next().unwrap_or_else(|| "cup_with_handle".into());
    let out = args.next().unwrap_or_else(|| "encoded.spm".into());
    let mesh = match spmap::fixtures::fixture(&source) {
        Some(f) => f.mesh,
        None => spmap::mesh_io::load_mesh(&source)?.mesh,
    };
    let mesh = normalize_mesh(&mesh)?;

    let cfg = EncodeConfig::new(SphericalGrid::new(256, 512)?, 4);
    let (map, stats) = encode_with_stats(&mesh, &cfg)?;
    write_spm(&map, &out)?;

    println!("{source}: {} triangles -> {}", mesh.faces.len(), out);
    println!("pixels by hit count: {:?}", layer_histogram(&map));
    println!("dropped hits {}, recast rays {}, most hits on one ray {}", stats.truncated_hits, stats.retried_rays, stats.max_hits);
    Ok(())
}
