//! Write the built-in shapes as OBJ and PLY and read them back.
//!
//! cargo run --release --example mesh_files -- [dir]

use spmap::mesh_io::{load_mesh, save_mesh};

fn main() -> spmap::Result<()> {
    let dir = std::path::PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "fixtures".into()));
    std::fs::create_dir_all(&dir)?;
    for f in spmap::fixtures::desk_corpus() {
        for ext in ["obj", "ply"] {
            let path = dir.join(format!("{}.{ext}", f.id));
            save_mesh(&f.mesh, &path)?;
            let back = load_mesh(&path)?;
            let t = back.mesh.topology();
            println!(
                "{:<28} {:>6} faces  closed {:<5} euler {:>3}",
                path.display(),
                t.face_count,
                t.is_closed_manifold(),
                t.euler_characteristic()
            );
        }
    }
    Ok(())
}
