//! Turn a map back into geometry: a point cloud, a parity-occupancy mesh and
//! a direct grid triangulation.
//!
//! cargo run --release --example decode_map -- [map.spm]

use spmap::decode::{default_discontinuity_tol, grid_triangulate, occupancy_field_from_map, unproject_map};
use spmap::encode::{encode, EncodeConfig};
use spmap::marching::{marching_cubes_field, McOptions};
use spmap::mesh_io::{save_mesh, save_point_cloud};
use spmap::sphere::SphericalGrid;

fn main() -> spmap::Result<()> {
    let map = match std::env::args().nth(1) {
        Some(path) => spmap::spm::read_spm(path)?,
        None => {
            let torus = spmap::fixtures::fixture("torus").unwrap().mesh;
            encode(&torus, &EncodeConfig::new(SphericalGrid::new(128, 256)?, 4))?
        }
    };

    let cloud = unproject_map(&map)?;
    save_point_cloud(&cloud.points, &cloud.normals, "decoded_points.ply")?;
    println!("{} oriented points -> decoded_points.ply", cloud.len());

    if map.meta.truncation_count == 0 {
        let field = occupancy_field_from_map(&map, 96, 3)?;
        let solid = marching_cubes_field(&field, &McOptions::default())?;
        save_mesh(&solid, "decoded_occupancy.obj")?;
        let t = solid.topology();
        println!("occupancy mesh: {} faces, closed {}, euler {}", t.face_count, t.is_closed_manifold(), t.euler_characteristic());
    } else {
        println!("map dropped {} hits; parity decoding skipped", map.meta.truncation_count);
    }

    let sheet = grid_triangulate(&map, default_discontinuity_tol(&map))?;
    save_mesh(&sheet, "decoded_grid.obj")?;
    println!("grid mesh: {} faces", sheet.faces.len());
    Ok(())
}
