//! Procedural test shapes.
//!
//! The desk corpus covers the cases the codec has to handle: convex solids,
//! nested shells, genus-one solids, disjoint components, concave cavities
//! and an open surface. Closed shapes are oriented with outward normals
//! except for inner cavity walls, which face into the cavity.

use std::collections::HashMap;
use std::f64::consts::{PI, TAU};

use crate::mesh::{TriangleMesh, Vec3};

/// Axis-aligned box with outward-facing triangles.
pub fn box_mesh(lo: Vec3, hi: Vec3) -> TriangleMesh {
    let c = |i: usize| {
        Vec3::new(
            if i & 1 == 0 { lo.x } else { hi.x },
            if i & 2 == 0 { lo.y } else { hi.y },
            if i & 4 == 0 { lo.z } else { hi.z },
        )
    };
    let vertices = (0..8).map(c).collect();
    // quads listed counter-clockwise seen from outside
    let quads = [
        [0, 2, 3, 1], // -z
        [4, 5, 7, 6], // +z
        [0, 1, 5, 4], // -y
        [2, 6, 7, 3], // +y
        [0, 4, 6, 2], // -x
        [1, 3, 7, 5], // +x
    ];
    let faces = quads
        .iter()
        .flat_map(|q| [[q[0], q[1], q[2]], [q[0], q[2], q[3]]])
        .collect();
    TriangleMesh {
        vertices,
        faces,
        face_normals: None,
    }
}

/// Geodesic sphere from a subdivided icosahedron (`20 * 4^level` faces).
pub fn icosphere(radius: f64, level: u32) -> TriangleMesh {
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let mut vertices: Vec<Vec3> = [
        [-1.0, t, 0.0],
        [1.0, t, 0.0],
        [-1.0, -t, 0.0],
        [1.0, -t, 0.0],
        [0.0, -1.0, t],
        [0.0, 1.0, t],
        [0.0, -1.0, -t],
        [0.0, 1.0, -t],
        [t, 0.0, -1.0],
        [t, 0.0, 1.0],
        [-t, 0.0, -1.0],
        [-t, 0.0, 1.0],
    ]
    .iter()
    .map(|p| Vec3::new(p[0], p[1], p[2]).normalize())
    .collect();
    let mut faces: Vec<[u32; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    for _ in 0..level {
        let mut cache: HashMap<(u32, u32), u32> = HashMap::new();
        let mut midpoint = |a: u32, b: u32, vertices: &mut Vec<Vec3>| {
            *cache.entry((a.min(b), a.max(b))).or_insert_with(|| {
                let m = (vertices[a as usize] + vertices[b as usize]).normalize();
                vertices.push(m);
                (vertices.len() - 1) as u32
            })
        };
        let mut next = Vec::with_capacity(faces.len() * 4);
        for f in &faces {
            let ab = midpoint(f[0], f[1], &mut vertices);
            let bc = midpoint(f[1], f[2], &mut vertices);
            let ca = midpoint(f[2], f[0], &mut vertices);
            next.push([f[0], ab, ca]);
            next.push([f[1], bc, ab]);
            next.push([f[2], ca, bc]);
            next.push([ab, bc, ca]);
        }
        faces = next;
    }
    TriangleMesh {
        vertices: vertices.into_iter().map(|v| v * radius).collect(),
        faces,
        face_normals: None,
    }
}

/// Surface of revolution about the z axis.
///
/// `profile` holds `(r, z)` points. When `closed` is true the profile is a
/// closed polygon with `r > 0` everywhere and the result has genus one;
/// otherwise the first and last points must lie on the axis (`r = 0`) and
/// become poles. The result is oriented outward.
pub fn lathe(profile: &[(f64, f64)], closed: bool, segments: usize, start_angle: f64) -> TriangleMesh {
    let ring = |r: f64, z: f64, j: usize| {
        let a = start_angle + TAU * j as f64 / segments as f64;
        Vec3::new(r * a.cos(), r * a.sin(), z)
    };
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    if closed {
        let n = profile.len();
        for &(r, z) in profile {
            for j in 0..segments {
                vertices.push(ring(r, z, j));
            }
        }
        let id = |i: usize, j: usize| ((i % n) * segments + j % segments) as u32;
        for i in 0..n {
            for j in 0..segments {
                let (a, b, c, d) = (id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1));
                faces.push([a, b, c]);
                faces.push([a, c, d]);
            }
        }
    } else {
        let n = profile.len();
        let (r0, z0) = profile[0];
        let (rn, zn) = profile[n - 1];
        debug_assert!(r0 == 0.0 && rn == 0.0);
        vertices.push(Vec3::new(0.0, 0.0, z0));
        for &(r, z) in &profile[1..n - 1] {
            for j in 0..segments {
                vertices.push(ring(r, z, j));
            }
        }
        vertices.push(Vec3::new(0.0, 0.0, zn));
        let last = (vertices.len() - 1) as u32;
        let id = |i: usize, j: usize| (1 + (i - 1) * segments + j % segments) as u32;
        for j in 0..segments {
            faces.push([0, id(1, j), id(1, j + 1)]);
        }
        for i in 1..n - 2 {
            for j in 0..segments {
                let (a, b, c, d) = (id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1));
                faces.push([a, b, c]);
                faces.push([a, c, d]);
            }
        }
        for j in 0..segments {
            faces.push([last, id(n - 2, j + 1), id(n - 2, j)]);
        }
    }
    orient_outward(TriangleMesh {
        vertices,
        faces,
        face_normals: None,
    })
}

fn orient_outward(mesh: TriangleMesh) -> TriangleMesh {
    if mesh.signed_volume() < 0.0 {
        mesh.flipped()
    } else {
        mesh
    }
}

/// Torus around the z axis.
pub fn torus(major: f64, minor: f64, segments: usize, sides: usize, center: Vec3) -> TriangleMesh {
    let profile: Vec<(f64, f64)> = (0..sides)
        .map(|i| {
            let a = TAU * i as f64 / sides as f64;
            (major + minor * a.cos(), minor * a.sin())
        })
        .collect();
    lathe(&profile, true, segments, 0.0).map_vertices(|v| v + center)
}

/// Rotation by +90 degrees about the x axis.
fn rot_x90(v: &Vec3) -> Vec3 {
    Vec3::new(v.x, -v.z, v.y)
}

/// Hollow ball: outer shell outward, inner shell facing the cavity.
pub fn nested_shells(outer: f64, inner: f64, level: u32) -> TriangleMesh {
    TriangleMesh::merge(&[icosphere(outer, level), icosphere(inner, level).flipped()])
}

/// Square block with a square through-hole along z.
pub fn box_with_hole(outer_half: f64, inner_half: f64, half_height: f64) -> TriangleMesh {
    let s = std::f64::consts::SQRT_2;
    let profile = [
        (inner_half * s, -half_height),
        (outer_half * s, -half_height),
        (outer_half * s, half_height),
        (inner_half * s, half_height),
    ];
    lathe(&profile, true, 4, PI / 4.0)
}

/// Thick-walled cup with a separate ring handle beside it.
pub fn cup_with_handle() -> TriangleMesh {
    let cup = lathe(
        &[
            (0.0, -0.45),
            (0.26, -0.45),
            (0.3, -0.35),
            (0.3, 0.45),
            (0.24, 0.45),
            (0.24, -0.33),
            (0.0, -0.33),
        ],
        false,
        64,
        0.0,
    );
    let handle = torus(0.14, 0.035, 40, 16, Vec3::zeros())
        .map_vertices(rot_x90)
        .map_vertices(|v| v + Vec3::new(0.5, 0.0, 0.0));
    TriangleMesh::merge(&[cup, handle])
}

/// Thick hemispherical bowl opening upward.
pub fn bowl(outer: f64, inner: f64, steps: usize) -> TriangleMesh {
    let mut profile = vec![(0.0, -outer)];
    for i in 1..=steps {
        let a = -PI / 2.0 + (PI / 2.0) * i as f64 / steps as f64;
        profile.push((outer * a.cos(), outer * a.sin()));
    }
    for i in (1..=steps).rev() {
        let a = -PI / 2.0 + (PI / 2.0) * i as f64 / steps as f64;
        profile.push((inner * a.cos(), inner * a.sin()));
    }
    profile.push((0.0, -inner));
    lathe(&profile, false, 4 * steps, 0.0)
}

/// Cylinder with flat caps along z.
pub fn capsule(radius: f64, half_height: f64, segments: usize) -> TriangleMesh {
    lathe(
        &[
            (0.0, -half_height),
            (radius, -half_height),
            (radius, half_height),
            (0.0, half_height),
        ],
        false,
        segments,
        0.0,
    )
}

/// Upper half of a sphere without its base disk: an open surface.
pub fn hemisphere_dome(radius: f64, steps: usize) -> TriangleMesh {
    let segments = 4 * steps;
    let mut vertices = vec![Vec3::new(0.0, 0.0, radius)];
    for i in 1..=steps {
        let polar = (PI / 2.0) * i as f64 / steps as f64;
        for j in 0..segments {
            let a = TAU * j as f64 / segments as f64;
            vertices.push(radius * Vec3::new(polar.sin() * a.cos(), polar.sin() * a.sin(), polar.cos()));
        }
    }
    let id = |i: usize, j: usize| (1 + (i - 1) * segments + j % segments) as u32;
    let mut faces = Vec::new();
    for j in 0..segments {
        faces.push([0, id(1, j), id(1, j + 1)]);
    }
    for i in 1..steps {
        for j in 0..segments {
            faces.push([id(i, j), id(i + 1, j), id(i + 1, j + 1)]);
            faces.push([id(i, j), id(i + 1, j + 1), id(i, j + 1)]);
        }
    }
    TriangleMesh {
        vertices,
        faces,
        face_normals: None,
    }
}

/// Closed half ball: the dome plus its flat base disk through the origin.
pub fn half_ball(radius: f64, steps: usize) -> TriangleMesh {
    let mut profile = vec![(0.0, radius)];
    for i in 1..=steps {
        let polar = (PI / 2.0) * i as f64 / steps as f64;
        profile.push((radius * polar.sin(), radius * polar.cos()));
    }
    profile.push((0.0, 0.0));
    lathe(&profile, false, 4 * steps, 0.0)
}

/// One shape of the desk corpus.
#[derive(Debug, Clone)]
pub struct Fixture {
    pub id: &'static str,
    pub mesh: TriangleMesh,
    pub watertight: bool,
}

/// Names of the corpus shapes in their canonical order.
pub const CORPUS_IDS: [&str; 11] = [
    "sphere",
    "nested_shells",
    "torus",
    "cup_with_handle",
    "box_with_hole",
    "cube",
    "ellipsoid",
    "capsule",
    "two_spheres",
    "bowl",
    "hemisphere",
];

pub fn fixture(id: &str) -> Option<Fixture> {
    let (mesh, watertight) = match id {
        "sphere" => (icosphere(0.4, 4), true),
        "nested_shells" => (nested_shells(0.4, 0.2, 4), true),
        "torus" => (torus(0.3, 0.12, 64, 24, Vec3::zeros()), true),
        "cup_with_handle" => (cup_with_handle(), true),
        "box_with_hole" => (box_with_hole(0.45, 0.18, 0.3), true),
        "cube" => (box_mesh(Vec3::repeat(-0.4), Vec3::repeat(0.4)), true),
        "ellipsoid" => (
            icosphere(1.0, 4).map_vertices(|v| Vec3::new(0.45 * v.x, 0.3 * v.y, 0.2 * v.z)),
            true,
        ),
        "capsule" => (capsule(0.2, 0.4, 64), true),
        "two_spheres" => (
            TriangleMesh::merge(&[
                icosphere(0.2, 3).map_vertices(|v| v + Vec3::new(0.25, 0.0, 0.0)),
                icosphere(0.2, 3).map_vertices(|v| v + Vec3::new(-0.25, 0.0, 0.0)),
            ]),
            true,
        ),
        "bowl" => (bowl(0.45, 0.38, 24), true),
        "hemisphere" => (hemisphere_dome(0.45, 24), false),
        _ => return None,
    };
    Some(Fixture {
        id: CORPUS_IDS.iter().find(|&&c| c == id)?,
        mesh,
        watertight,
    })
}

/// Every corpus shape, in canonical order.
pub fn desk_corpus() -> Vec<Fixture> {
    CORPUS_IDS.iter().filter_map(|id| fixture(id)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_fixtures_are_manifold_and_outward() {
        for f in desk_corpus() {
            let t = f.mesh.topology();
            if f.watertight {
                assert!(t.is_closed_manifold(), "{} not closed", f.id);
                assert!(f.mesh.signed_volume() > 0.0, "{} inverted", f.id);
            } else {
                assert_eq!(t.boundary_loops(), 1, "{}", f.id);
            }
        }
    }

    #[test]
    fn euler_characteristics() {
        assert_eq!(icosphere(1.0, 2).topology().euler_characteristic(), 2);
        assert_eq!(fixture("torus").unwrap().mesh.topology().euler_characteristic(), 0);
        assert_eq!(fixture("box_with_hole").unwrap().mesh.topology().euler_characteristic(), 0);
        assert_eq!(half_ball(0.4, 8).topology().euler_characteristic(), 2);
        assert_eq!(fixture("cup_with_handle").unwrap().mesh.topology().euler_characteristic(), 2);
    }

    #[test]
    fn icosphere_face_count_and_radius() {
        let s = icosphere(0.4, 3);
        assert_eq!(s.faces.len(), 1280);
        assert!(s.vertices.iter().all(|v| (v.norm() - 0.4).abs() < 1e-12));
    }
}
