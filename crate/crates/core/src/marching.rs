//! Marching cubes on a voxel occupancy grid.
//!
//! The case table is generated rather than transcribed. On every cube face
//! the crossings are joined so that each run of inside corners along the
//! face boundary is cut off by its own segment; two diagonally opposite
//! inside corners are therefore always kept apart. Because both cubes that
//! share a face apply the same rule to the same four samples, their contours
//! agree and the extracted surface is closed. Contour loops longer than
//! three vertices are closed with a fan around their centroid.

use std::collections::HashMap;
use std::sync::OnceLock;

use rayon::prelude::*;

use crate::decode::{OccupancyField, OccupancyGrid};
use crate::error::{Error, Result};
use crate::mesh::{TriangleMesh, Vec3};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McOptions {
    pub iso: f64,
    /// Smooth the occupancy with one 3x3x3 box filter first.
    pub box_filter: bool,
}

impl Default for McOptions {
    fn default() -> Self {
        McOptions {
            iso: 0.5,
            box_filter: true,
        }
    }
}

/// Cube corner `i` sits at offset `(i & 1, i >> 1 & 1, i >> 2 & 1)`.
/// Edge `4 * axis + j` joins corner `EDGE_CORNERS[..][0]` to the corner one
/// step further along `axis`.
const fn edge_corners() -> [[u8; 2]; 12] {
    let mut out = [[0u8; 2]; 12];
    let mut axis = 0;
    while axis < 3 {
        let mut j = 0;
        let mut corner = 0u8;
        while corner < 8 {
            if corner & (1 << axis) == 0 {
                out[axis * 4 + j] = [corner, corner | (1 << axis)];
                j += 1;
            }
            corner += 1;
        }
        axis += 1;
    }
    out
}

const EDGE_CORNERS: [[u8; 2]; 12] = edge_corners();

fn edge_between(a: u8, b: u8) -> usize {
    EDGE_CORNERS
        .iter()
        .position(|e| (e[0] == a && e[1] == b) || (e[0] == b && e[1] == a))
        .expect("corners share an edge")
}

/// Contour loops (as edge indices) for every one of the 256 corner states.
fn case_table() -> &'static [Vec<Vec<u8>>] {
    static TABLE: OnceLock<Vec<Vec<Vec<u8>>>> = OnceLock::new();
    TABLE.get_or_init(|| (0..256).map(|case| case_loops(case as u8)).collect())
}

fn case_loops(case: u8) -> Vec<Vec<u8>> {
    let inside = |c: u8| case >> c & 1 == 1;
    let mut next = [None::<usize>; 12];
    for axis in 0..3 {
        let (u, v) = ((axis + 1) % 3, (axis + 2) % 3);
        for side in 0..2u8 {
            // counter-clockwise seen from outside the cube
            let mut ring: Vec<u8> = [(0, 0), (1, 0), (1, 1), (0, 1)]
                .iter()
                .map(|&(cu, cv)| side << axis | cu << u | cv << v)
                .collect();
            if side == 0 {
                ring.reverse();
            }
            let edge = |i: usize| edge_between(ring[i % 4], ring[(i + 1) % 4]);
            let enters = |i: usize| !inside(ring[i % 4]) && inside(ring[(i + 1) % 4]);
            let leaves = |i: usize| inside(ring[i % 4]) && !inside(ring[(i + 1) % 4]);
            for j in (0..4).filter(|&j| enters(j)) {
                let i = (j + 1..j + 4).find(|&i| leaves(i)).expect("runs are bounded");
                next[edge(i)] = Some(edge(j));
            }
        }
    }
    let mut seen = [false; 12];
    let mut loops = Vec::new();
    for start in 0..12 {
        if seen[start] || next[start].is_none() {
            continue;
        }
        let mut lp = Vec::new();
        let mut e = start;
        while !seen[e] {
            seen[e] = true;
            lp.push(e as u8);
            e = next[e].expect("contours are closed");
        }
        loops.push(lp);
    }
    loops
}

struct Field {
    dim: usize,
    values: Vec<f32>,
    origin: Vec3,
    step: f64,
}

/// Two empty cells of padding on every side keep the surface closed even
/// after the box filter has spread occupancy by one cell.
const PAD: usize = 2;

impl Field {
    fn from_field(grid: &OccupancyField, box_filter: bool) -> Field {
        let n = grid.resolution;
        let dim = n + 2 * PAD;
        let mut values = vec![0f32; dim * dim * dim];
        for z in 0..n {
            for y in 0..n {
                let src = (z * n + y) * n;
                let dst = ((z + PAD) * dim + y + PAD) * dim + PAD;
                values[dst..dst + n].copy_from_slice(&grid.values[src..src + n]);
            }
        }
        if box_filter {
            for stride in [1, dim, dim * dim] {
                values = box_pass(&values, dim, stride);
            }
        }
        Field {
            dim,
            values,
            origin: grid.origin - Vec3::repeat((PAD as f64 - 0.5) * grid.voxel_size),
            step: grid.voxel_size,
        }
    }

    fn position(&self, i: usize) -> Vec3 {
        let d = self.dim;
        let (x, y, z) = (i % d, i / d % d, i / (d * d));
        self.origin + Vec3::new(x as f64, y as f64, z as f64) * self.step
    }
}

fn box_pass(src: &[f32], dim: usize, stride: usize) -> Vec<f32> {
    let mut out = vec![0f32; src.len()];
    out.par_chunks_mut(dim * dim).enumerate().for_each(|(z, slab)| {
        for (k, o) in slab.iter_mut().enumerate() {
            let i = z * dim * dim + k;
            let coord = i / stride % dim;
            let mut s = src[i];
            if coord > 0 {
                s += src[i - stride];
            }
            if coord + 1 < dim {
                s += src[i + stride];
            }
            *o = s / 3.0;
        }
    });
    out
}

#[derive(Clone, Copy, PartialEq, Eq, Hash)]
enum VertexKey {
    Edge(u64),
    Center,
}

pub fn marching_cubes(grid: &OccupancyGrid) -> Result<TriangleMesh> {
    marching_cubes_with(grid, &McOptions::default())
}

/// Extracts the iso-surface. Triangles are wound so that normals point out
/// of the occupied region.
pub fn marching_cubes_with(grid: &OccupancyGrid, opts: &McOptions) -> Result<TriangleMesh> {
    marching_cubes_field(&OccupancyField::from_grid(grid), opts)
}

/// Same as [`marching_cubes_with`] on a fractional occupancy field.
pub fn marching_cubes_field(grid: &OccupancyField, opts: &McOptions) -> Result<TriangleMesh> {
    if grid.resolution == 0 || grid.is_empty() {
        return Err(Error::EmptyGrid);
    }
    let field = Field::from_field(grid, opts.box_filter);
    let table = case_table();
    let dim = field.dim;
    let iso = opts.iso as f32;
    let corner_offset = |c: u8| (c & 1) as usize + ((c >> 1 & 1) as usize) * dim + ((c >> 2 & 1) as usize) * dim * dim;

    let slabs: Vec<Vec<Vec<(VertexKey, Vec3)>>> = (0..dim - 1)
        .into_par_iter()
        .map(|z| {
            let mut loops = Vec::new();
            for y in 0..dim - 1 {
                for x in 0..dim - 1 {
                    let base = (z * dim + y) * dim + x;
                    let mut case = 0u8;
                    for c in 0..8u8 {
                        if field.values[base + corner_offset(c)] > iso {
                            case |= 1 << c;
                        }
                    }
                    for lp in &table[case as usize] {
                        let verts: Vec<(VertexKey, Vec3)> = lp
                            .iter()
                            .map(|&e| {
                                let [a, b] = EDGE_CORNERS[e as usize];
                                let (ia, ib) = (base + corner_offset(a), base + corner_offset(b));
                                let (fa, fb) = (field.values[ia] as f64, field.values[ib] as f64);
                                let t = ((opts.iso - fa) / (fb - fa)).clamp(0.0, 1.0);
                                let p = field.position(ia) * (1.0 - t) + field.position(ib) * t;
                                let axis = e as u64 / 4;
                                (VertexKey::Edge(ia as u64 * 3 + axis), p)
                            })
                            .collect();
                        loops.push(verts);
                    }
                }
            }
            loops
        })
        .collect();

    let mut index: HashMap<VertexKey, u32> = HashMap::new();
    let mut vertices: Vec<Vec3> = Vec::new();
    let mut faces: Vec<[u32; 3]> = Vec::new();
    let mut id_of = |key: VertexKey, p: Vec3, vertices: &mut Vec<Vec3>| -> u32 {
        if key == VertexKey::Center {
            vertices.push(p);
            return (vertices.len() - 1) as u32;
        }
        *index.entry(key).or_insert_with(|| {
            vertices.push(p);
            (vertices.len() - 1) as u32
        })
    };
    for lp in slabs.iter().flatten() {
        let ids: Vec<u32> = lp.iter().map(|&(k, p)| id_of(k, p, &mut vertices)).collect();
        if ids.len() == 3 {
            faces.push([ids[0], ids[2], ids[1]]);
            continue;
        }
        let centroid = lp.iter().map(|(_, p)| p).sum::<Vec3>() / lp.len() as f64;
        let c = id_of(VertexKey::Center, centroid, &mut vertices);
        for i in 0..ids.len() {
            faces.push([c, ids[(i + 1) % ids.len()], ids[i]]);
        }
    }
    TriangleMesh::new(vertices, faces)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::connected_components;

    fn ball(n: usize, f: impl Fn(&Vec3) -> bool + Sync) -> OccupancyGrid {
        let mut g = OccupancyGrid::for_unit_cube(n);
        g.fill_with(f);
        g
    }

    #[test]
    fn every_case_closes() {
        for (case, loops) in case_table().iter().enumerate() {
            let edges: usize = loops.iter().map(Vec::len).sum();
            let crossings = EDGE_CORNERS
                .iter()
                .filter(|[a, b]| (case >> a & 1) != (case >> b & 1))
                .count();
            assert_eq!(edges, crossings, "case {case}");
            assert!(loops.iter().all(|l| l.len() >= 3));
        }
        assert!(case_table()[0].is_empty() && case_table()[255].is_empty());
    }

    #[test]
    fn single_voxel_is_a_closed_blob() {
        let mut g = OccupancyGrid::for_unit_cube(5);
        g.set(2, 2, 2, true);
        let opts = McOptions {
            box_filter: false,
            ..Default::default()
        };
        let m = marching_cubes_with(&g, &opts).unwrap();
        let topo = m.topology();
        assert!(topo.is_closed_manifold());
        assert_eq!(topo.euler_characteristic(), 2);
        assert!(m.signed_volume() > 0.0);
    }

    #[test]
    fn diagonal_voxels_stay_separate() {
        let mut g = OccupancyGrid::for_unit_cube(6);
        g.set(2, 2, 2, true);
        g.set(3, 3, 3, true);
        g.set(3, 2, 3, false);
        let opts = McOptions {
            box_filter: false,
            ..Default::default()
        };
        let m = marching_cubes_with(&g, &opts).unwrap();
        assert!(m.topology().is_closed_manifold());
        assert_eq!(connected_components(&m), 2);
    }

    #[test]
    fn sphere_surface_is_close_and_outward() {
        let g = ball(64, |p| p.norm() < 0.4);
        let m = marching_cubes(&g).unwrap();
        assert!(m.topology().is_closed_manifold());
        assert_eq!(m.topology().euler_characteristic(), 2);
        let worst = m.vertices.iter().map(|v| (v.norm() - 0.4).abs()).fold(0.0, f64::max);
        assert!(worst < 2.0 * g.voxel_size, "{worst}");
        let vol = m.signed_volume();
        let exact = 4.0 / 3.0 * std::f64::consts::PI * 0.4f64.powi(3);
        assert!((vol - exact).abs() / exact < 0.05, "{vol} {exact}");
    }

    #[test]
    fn annulus_gives_two_components() {
        let g = ball(48, |p| (0.2..0.4).contains(&p.norm()));
        let m = marching_cubes(&g).unwrap();
        assert!(m.topology().is_closed_manifold());
        assert_eq!(connected_components(&m), 2);
        assert!(m.signed_volume() > 0.0);
    }

    #[test]
    fn random_fields_are_manifold() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let mut g = OccupancyGrid::for_unit_cube(7);
            for v in g.occupancy.iter_mut() {
                *v = rng.gen_bool(0.5);
            }
            g.occupancy[0] = true;
            for filter in [false, true] {
                let opts = McOptions {
                    box_filter: filter,
                    ..Default::default()
                };
                if let Ok(m) = marching_cubes_with(&g, &opts) {
                    assert!(m.topology().is_closed_manifold());
                }
            }
        }
    }

    #[test]
    fn full_grid_is_a_box() {
        let g = ball(4, |_| true);
        let m = marching_cubes(&g).unwrap();
        assert!(m.topology().is_closed_manifold());
        assert!(matches!(marching_cubes(&ball(4, |_| false)), Err(Error::EmptyGrid)));
    }
}
