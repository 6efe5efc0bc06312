//! Chamfer, F-score, volume IoU and rotation search on two meshes.

use spmap::metrics::{align_rotation, chamfer, evaluate, f_score, rotation_z, volume_iou, EvalOptions, RotationSet};
use spmap::sampling::sample_surface;

fn main() -> spmap::Result<()> {
    let cup = spmap::fixtures::fixture("cup_with_handle").unwrap().mesh;
    let turned = cup.map_vertices(|v| rotation_z(90.0) * v);
    let bumped = cup.map_vertices(|v| v * 1.03);

    let a = sample_surface(&cup, 20_000, 0)?;
    let b = sample_surface(&bumped, 20_000, 1)?;
    println!("scaled copy: chamfer {:.5}, f-score {:.2}", chamfer(&a, &b)?, f_score(&a, &b, 0.1)?);
    println!("scaled copy: volume iou {:.4}", volume_iou(&cup, &bumped, 64)?);

    let opts = EvalOptions {
        samples: 20_000,
        ..Default::default()
    };
    let (choice, report) = align_rotation(&turned, &cup, RotationSet::Octahedral, &opts)?;
    println!("rotated copy: best rotation {choice}, chamfer after alignment {:.5}", report.chamfer);

    let full = evaluate(&turned, &cup, true, &opts)?;
    println!("rotated copy: iou {:.4}, f-score {:.2}", full.vol_iou.unwrap(), full.f_score);
    Ok(())
}
