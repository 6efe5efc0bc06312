//! Generalized winding numbers for inside/outside classification.
//!
//! [`winding_number`] sums exact triangle solid angles. [`WindingTree`]
//! answers the same query hierarchically: clusters far from the query point
//! are replaced by their area-weighted dipole, nearby triangles are summed
//! exactly.

use std::f64::consts::PI;

use rayon::prelude::*;

use crate::decode::OccupancyGrid;
use crate::error::{Error, Result};
use crate::mesh::{Aabb, TriangleMesh, Vec3};

const LEAF: usize = 8;
/// A cluster is expanded while the query is closer than this many cluster radii.
const ACCURACY: f64 = 4.0;
/// Winding values farther than this from both 0 and 1 count as ambiguous.
const AMBIGUOUS: f64 = 0.25;

/// Signed solid angle of a triangle seen from `q`, divided by `4 pi`.
pub fn triangle_winding(q: &Vec3, tri: &[Vec3; 3]) -> f64 {
    let a = tri[0] - q;
    let b = tri[1] - q;
    let c = tri[2] - q;
    let (la, lb, lc) = (a.norm(), b.norm(), c.norm());
    let det = a.dot(&b.cross(&c));
    let div = la * lb * lc + a.dot(&b) * lc + b.dot(&c) * la + c.dot(&a) * lb;
    2.0 * det.atan2(div) / (4.0 * PI)
}

/// Exact winding number of a closed, outward-oriented mesh at `q`.
pub fn winding_number(mesh: &TriangleMesh, q: &Vec3) -> f64 {
    (0..mesh.faces.len())
        .map(|f| triangle_winding(q, &mesh.triangle(f)))
        .sum()
}

#[derive(Debug, Clone)]
struct Node {
    bounds: Aabb,
    start: usize,
    end: usize,
    children: Option<[usize; 2]>,
    // area-weighted normal sum and area-weighted centroid
    dipole: Vec3,
    center: Vec3,
    radius: f64,
}

#[derive(Debug, Clone)]
pub struct WindingTree {
    tris: Vec<[Vec3; 3]>,
    nodes: Vec<Node>,
}

impl WindingTree {
    pub fn build(mesh: &TriangleMesh) -> Result<WindingTree> {
        if mesh.is_empty() {
            return Err(Error::EmptyMesh);
        }
        let mut tris: Vec<[Vec3; 3]> = (0..mesh.faces.len()).map(|f| mesh.triangle(f)).collect();
        let mut nodes = Vec::new();
        let n = tris.len();
        build_node(&mut tris, 0, n, &mut nodes);
        Ok(WindingTree { tris, nodes })
    }

    pub fn winding(&self, q: &Vec3) -> f64 {
        let mut total = 0.0;
        let mut stack = vec![0usize];
        while let Some(i) = stack.pop() {
            let node = &self.nodes[i];
            let offset = node.center - q;
            let dist = offset.norm();
            if dist > ACCURACY * node.radius && !node.bounds.contains(q) {
                total += node.dipole.dot(&offset) / (4.0 * PI * dist * dist * dist);
                continue;
            }
            match node.children {
                Some([l, r]) => {
                    stack.push(r);
                    stack.push(l);
                }
                None => {
                    total += self.tris[node.start..node.end]
                        .iter()
                        .map(|t| triangle_winding(q, t))
                        .sum::<f64>();
                }
            }
        }
        total
    }

    /// Classifies every voxel center of `grid` (winding above 1/2 is
    /// inside). Fails when more than `max_ambiguous` of the voxels have a
    /// winding number far from both 0 and 1.
    ///
    /// Voxels that touch no triangle bounding box form surface-free
    /// regions; each region is probed on a coarse lattice and filled at
    /// once when every probe agrees on a whole winding number. All other
    /// voxels are evaluated one by one.
    pub fn voxelize(&self, grid: &mut OccupancyGrid, max_ambiguous: f64) -> Result<()> {
        let n = grid.resolution;
        let total = n * n * n;
        let near = self.near_voxels(grid);
        let center = |i: usize| grid.center(i % n, i / n % n, i / (n * n));
        let classify = |w: f64| (w > 0.5, w.abs().min((w - 1.0).abs()) > AMBIGUOUS);

        let regions = far_regions(&near, n);
        let probes: Vec<Vec<usize>> = regions
            .iter()
            .map(|r| {
                let mut p: Vec<usize> = r
                    .iter()
                    .copied()
                    .filter(|&i| i % n % PROBE_STRIDE == 0 && i / n % n % PROBE_STRIDE == 0 && i / (n * n) % PROBE_STRIDE == 0)
                    .collect();
                p.push(r[0]);
                p
            })
            .collect();
        let probe_values: Vec<Vec<f64>> = probes
            .par_iter()
            .map(|p| p.iter().map(|&i| self.winding(&center(i))).collect())
            .collect();

        let mut state = vec![(false, false); total];
        let mut exact: Vec<usize> = (0..total).filter(|&i| near[i]).collect();
        for (region, values) in regions.iter().zip(&probe_values) {
            let whole = values[0].round();
            if values.iter().all(|w| (w - whole).abs() < AMBIGUOUS) {
                let s = classify(whole);
                for &i in region {
                    state[i] = s;
                }
            } else {
                exact.extend_from_slice(region);
            }
        }
        let computed: Vec<(bool, bool)> = exact.par_iter().map(|&i| classify(self.winding(&center(i)))).collect();
        for (&i, s) in exact.iter().zip(computed) {
            state[i] = s;
        }

        let ambiguous = state.iter().filter(|s| s.1).count();
        for (o, s) in grid.occupancy.iter_mut().zip(&state) {
            *o = s.0;
        }
        let fraction = ambiguous as f64 / total as f64;
        if fraction > max_ambiguous {
            return Err(Error::NonWatertight { fraction });
        }
        Ok(())
    }

    /// Voxels whose cell overlaps the bounding box of some triangle.
    fn near_voxels(&self, grid: &OccupancyGrid) -> Vec<bool> {
        let n = grid.resolution;
        let mut near = vec![false; n * n * n];
        let cell = |v: f64, axis: usize, pad: f64| {
            let t = (v - grid.origin[axis]) / grid.voxel_size + pad;
            t.floor().clamp(-1.0, n as f64) as isize
        };
        for t in &self.tris {
            let b = Aabb::from_points(t.iter());
            let lo: Vec<isize> = (0..3).map(|a| cell(b.min[a], a, -1e-6).max(0)).collect();
            let hi: Vec<isize> = (0..3).map(|a| cell(b.max[a], a, 1e-6).min(n as isize - 1)).collect();
            for z in lo[2]..=hi[2] {
                for y in lo[1]..=hi[1] {
                    for x in lo[0]..=hi[0] {
                        near[grid.index(x as usize, y as usize, z as usize)] = true;
                    }
                }
            }
        }
        near
    }
}

const PROBE_STRIDE: usize = 4;

/// Six-connected components of the voxels not marked `near`.
fn far_regions(near: &[bool], n: usize) -> Vec<Vec<usize>> {
    let mut seen = near.to_vec();
    let mut regions = Vec::new();
    let mut queue = Vec::new();
    for seed in 0..near.len() {
        if seen[seed] {
            continue;
        }
        seen[seed] = true;
        queue.push(seed);
        let mut region = Vec::new();
        while let Some(i) = queue.pop() {
            region.push(i);
            let (x, y, z) = (i % n, i / n % n, i / (n * n));
            let mut visit = |j: usize| {
                if !seen[j] {
                    seen[j] = true;
                    queue.push(j);
                }
            };
            if x > 0 {
                visit(i - 1);
            }
            if x + 1 < n {
                visit(i + 1);
            }
            if y > 0 {
                visit(i - n);
            }
            if y + 1 < n {
                visit(i + n);
            }
            if z > 0 {
                visit(i - n * n);
            }
            if z + 1 < n {
                visit(i + n * n);
            }
        }
        region.sort_unstable();
        regions.push(region);
    }
    regions
}

fn build_node(tris: &mut [[Vec3; 3]], start: usize, end: usize, nodes: &mut Vec<Node>) -> usize {
    let slice = &tris[start..end];
    let bounds = Aabb::from_points(slice.iter().flatten());
    let mut dipole = Vec3::zeros();
    let mut weighted = Vec3::zeros();
    let mut area = 0.0;
    for t in slice {
        let n2 = (t[1] - t[0]).cross(&(t[2] - t[0]));
        let a = 0.5 * n2.norm();
        dipole += 0.5 * n2;
        weighted += a * (t[0] + t[1] + t[2]) / 3.0;
        area += a;
    }
    let center = if area > 0.0 { weighted / area } else { bounds.center() };
    let radius = slice
        .iter()
        .flatten()
        .map(|p| (p - center).norm())
        .fold(0.0, f64::max);
    let id = nodes.len();
    nodes.push(Node {
        bounds,
        start,
        end,
        children: None,
        dipole,
        center,
        radius,
    });
    if end - start > LEAF {
        let axis = bounds.longest_axis();
        let mid = (start + end) / 2;
        let key = |t: &[Vec3; 3]| t[0][axis] + t[1][axis] + t[2][axis];
        tris[start..end].select_nth_unstable_by(mid - start, |a, b| key(a).total_cmp(&key(b)));
        let l = build_node(tris, start, mid, nodes);
        let r = build_node(tris, mid, end, nodes);
        nodes[id].children = Some([l, r]);
    }
    id
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use rand::{Rng, SeedableRng};

    #[test]
    fn inside_outside_of_sphere() {
        let m = fixtures::icosphere(0.4, 3);
        assert!((winding_number(&m, &Vec3::zeros()) - 1.0).abs() < 1e-9);
        assert!(winding_number(&m, &Vec3::new(0.5, 0.1, 0.0)).abs() < 1e-9);
    }

    #[test]
    fn flipped_inner_shell_carves_cavity() {
        let m = fixtures::nested_shells(0.4, 0.2, 3);
        assert!(winding_number(&m, &Vec3::zeros()).abs() < 1e-9);
        assert!((winding_number(&m, &Vec3::new(0.3, 0.0, 0.0)) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn tree_tracks_exact_sum() {
        let m = fixtures::fixture("cup_with_handle").unwrap().mesh;
        let m = crate::mesh::normalize_mesh(&m).unwrap();
        let tree = WindingTree::build(&m).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let mut worst = 0.0;
        for _ in 0..300 {
            let q = Vec3::new(rng.gen_range(-0.6..0.6), rng.gen_range(-0.6..0.6), rng.gen_range(-0.6..0.6));
            let exact = winding_number(&m, &q);
            let fast = tree.winding(&q);
            worst = f64::max(worst, (exact - fast).abs());
        }
        assert!(worst < 0.02, "{worst}");
    }

    #[test]
    fn region_fill_matches_voxelwise_winding() {
        for id in ["torus", "nested_shells", "cup_with_handle", "two_spheres"] {
            let m = crate::mesh::normalize_mesh(&fixtures::fixture(id).unwrap().mesh).unwrap();
            let mut g = OccupancyGrid::for_unit_cube(24);
            WindingTree::build(&m).unwrap().voxelize(&mut g, 0.01).unwrap();
            let mut expected = OccupancyGrid::for_unit_cube(24);
            expected.fill_with(|p| winding_number(&m, p) > 0.5);
            assert_eq!(g.agreement(&expected).unwrap(), 1.0, "{id}");
        }
    }

    #[test]
    fn open_surface_is_flagged() {
        let m = fixtures::hemisphere_dome(0.4, 12);
        let tree = WindingTree::build(&m).unwrap();
        let mut g = OccupancyGrid::spanning(16, 0.5);
        assert!(matches!(tree.voxelize(&mut g, 0.01), Err(Error::NonWatertight { .. })));
    }
}
