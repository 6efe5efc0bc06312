//! The azimuth seam: circular padding and a crack-free grid mesh.

use spmap::decode::{default_discontinuity_tol, grid_triangulate};
use spmap::encode::{encode, EncodeConfig};
use spmap::sphere::{circular_pad, SphericalGrid};

fn main() -> spmap::Result<()> {
    let sphere = spmap::fixtures::fixture("sphere").unwrap().mesh;
    let map = encode(&sphere, &EncodeConfig::new(SphericalGrid::new(32, 64)?, 1))?;

    let padded = circular_pad(&map, 2)?;
    let row = 16 + 2;
    let left: Vec<f32> = (0..2).map(|c| padded.depth[padded.index(0, row, c)]).collect();
    let last: Vec<f32> = (62..64).map(|c| map.depth(0, 16, c).unwrap()).collect();
    println!("left pad {left:?} repeats the last columns {last:?}");

    let mesh = grid_triangulate(&map, default_discontinuity_tol(&map))?;
    let t = mesh.topology();
    println!("grid mesh: {} faces, {} open edges, euler {}", t.face_count, t.boundary_edges.len(), t.euler_characteristic());

    let shifted = grid_triangulate(&map.rotate_columns(21), default_discontinuity_tol(&map))?;
    println!("after a 21-column rotation: {} faces", shifted.faces.len());
    Ok(())
}
