//! Six-view nested depth stacks next to a spherical map of similar size.

use spmap::harness::pipeline::{run_cell, Cell, MetricOptions, PreparedMesh, Representation};
use spmap::mesh::normalize_mesh;
use spmap::nested::{encode_nested, fuse_nested, FusionRule};

fn main() -> spmap::Result<()> {
    let f = spmap::fixtures::fixture("nested_shells").unwrap();
    let mesh = normalize_mesh(&f.mesh)?;

    let stacks = encode_nested(&mesh, 64, 4)?;
    for rule in [FusionRule::Intersection, FusionRule::Majority, FusionRule::Union] {
        let grid = fuse_nested(&stacks, 64, rule)?;
        println!("{rule:?}: {} occupied voxels", grid.count());
    }

    let opts = MetricOptions {
        samples: 30_000,
        ..Default::default()
    };
    let src = PreparedMesh::new(f.id, mesh, true, &opts)?;
    for repr in [Representation::Sp, Representation::Nested] {
        let r = run_cell(&src, &Cell { repr, height: 64, layers: 4 }, &opts, None)?;
        println!(
            "{repr:<7} {:<8} chamfer {:.5}  iou {:.4}  deflated {} B",
            r.resolution,
            r.chamfer,
            r.vol_iou.unwrap_or(f64::NAN),
            r.storage_deflated
        );
    }
    Ok(())
}
