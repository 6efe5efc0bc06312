//! Geometry recovered from a spherical depth map: oriented points, parity
//! occupancy and direct grid triangulation.

use std::collections::HashMap;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::mesh::{TriangleMesh, Vec3};
use crate::sphere::{project, SpMap, SphericalGrid};

/// Padding of the occupancy box beyond the normalized `[-0.5, 0.5]` cube.
pub const OCCUPANCY_MARGIN: f64 = 0.01;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct OrientedPointCloud {
    pub points: Vec<Vec3>,
    pub normals: Vec<Vec3>,
    pub layer_of: Vec<usize>,
}

impl OrientedPointCloud {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

fn pixel_point(grid: &SphericalGrid, r: usize, c: usize, d: f32) -> Vec3 {
    grid.direction(r, c) * d as f64
}

/// One point per valid (layer, pixel). Normals come from the normal channel
/// when the map has one and are estimated from grid neighbors otherwise.
pub fn unproject_map(map: &SpMap) -> Result<OrientedPointCloud> {
    if map.valid_count() == 0 {
        return Err(Error::EmptyMap);
    }
    let grid = map.grid();
    let (h, w) = (grid.height(), grid.width());
    let mut cloud = OrientedPointCloud::default();
    for l in 0..map.layers() {
        for r in 0..h {
            for c in 0..w {
                let Some(d) = map.depth(l, r, c) else { continue };
                let dir = grid.direction(r, c);
                let p = dir * d as f64;
                let n = match map.normal(l, r, c) {
                    Some(n) => n.normalize(),
                    None => estimate_normal(map, l, r, c, p, dir),
                };
                cloud.points.push(p);
                cloud.normals.push(n);
                cloud.layer_of.push(l);
            }
        }
    }
    Ok(cloud)
}

fn estimate_normal(map: &SpMap, l: usize, r: usize, c: usize, p: Vec3, dir: Vec3) -> Vec3 {
    let grid = map.grid();
    let (h, w) = (grid.height(), grid.width());
    let at = |rr: usize, cc: usize| map.depth(l, rr, cc).map(|d| pixel_point(&grid, rr, cc, d));
    let diff = |a: Option<Vec3>, b: Option<Vec3>| match (a, b) {
        (Some(a), Some(b)) => Some(b - a),
        (Some(a), None) => Some(p - a),
        (None, Some(b)) => Some(b - p),
        (None, None) => None,
    };
    let tc = diff(at(r, (c + w - 1) % w), at(r, (c + 1) % w));
    // the first and last rows continue across the pole into the opposite column
    let across = (c + w / 2) % w;
    let up = if r > 0 { at(r - 1, c) } else if w % 2 == 0 { at(0, across) } else { None };
    let down = if r + 1 < h {
        at(r + 1, c)
    } else if w % 2 == 0 {
        at(h - 1, across)
    } else {
        None
    };
    let tr = diff(up, down);
    let n = match (tr, tc) {
        (Some(a), Some(b)) => a.cross(&b),
        _ => Vec3::zeros(),
    };
    let len = n.norm();
    if len < 1e-15 {
        return -dir;
    }
    let n = n / len;
    if n.dot(&dir) > 0.0 {
        -n
    } else {
        n
    }
}

/// Boolean voxel grid over an axis-aligned cube, stored x-fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyGrid {
    pub resolution: usize,
    pub origin: Vec3,
    pub voxel_size: f64,
    pub occupancy: Vec<bool>,
}

impl OccupancyGrid {
    /// Empty grid of `n` voxels per axis covering `[-half, half]^3`.
    pub fn spanning(n: usize, half: f64) -> OccupancyGrid {
        OccupancyGrid {
            resolution: n,
            origin: Vec3::repeat(-half),
            voxel_size: 2.0 * half / n as f64,
            occupancy: vec![false; n * n * n],
        }
    }

    /// Empty grid over the decoder's default box.
    pub fn for_unit_cube(n: usize) -> OccupancyGrid {
        OccupancyGrid::spanning(n, 0.5 + OCCUPANCY_MARGIN)
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        (z * self.resolution + y) * self.resolution + x
    }

    pub fn center(&self, x: usize, y: usize, z: usize) -> Vec3 {
        self.origin + Vec3::new(x as f64 + 0.5, y as f64 + 0.5, z as f64 + 0.5) * self.voxel_size
    }

    pub fn get(&self, x: usize, y: usize, z: usize) -> bool {
        self.occupancy[self.index(x, y, z)]
    }

    pub fn set(&mut self, x: usize, y: usize, z: usize, v: bool) {
        let i = self.index(x, y, z);
        self.occupancy[i] = v;
    }

    pub fn count(&self) -> usize {
        self.occupancy.iter().filter(|&&v| v).count()
    }

    /// Fills every voxel from a predicate on its center, in parallel over z.
    pub fn fill_with(&mut self, f: impl Fn(&Vec3) -> bool + Sync) {
        let n = self.resolution;
        let (origin, vs) = (self.origin, self.voxel_size);
        self.occupancy
            .par_chunks_mut(n * n)
            .enumerate()
            .for_each(|(z, slab)| {
                for y in 0..n {
                    for x in 0..n {
                        let p = origin + Vec3::new(x as f64 + 0.5, y as f64 + 0.5, z as f64 + 0.5) * vs;
                        slab[y * n + x] = f(&p);
                    }
                }
            });
    }

    /// Fraction of voxels on which two grids of the same shape agree.
    pub fn agreement(&self, other: &OccupancyGrid) -> Result<f64> {
        if self.resolution != other.resolution {
            return Err(Error::GridMismatch(format!(
                "{} vs {} voxels per axis",
                self.resolution, other.resolution
            )));
        }
        let same = self
            .occupancy
            .iter()
            .zip(&other.occupancy)
            .filter(|(a, b)| a == b)
            .count();
        Ok(same as f64 / self.occupancy.len() as f64)
    }
}

/// Per-voxel occupied volume fraction of an inside test.
#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyField {
    pub resolution: usize,
    pub origin: Vec3,
    pub voxel_size: f64,
    pub values: Vec<f32>,
}

impl OccupancyField {
    pub fn from_grid(grid: &OccupancyGrid) -> OccupancyField {
        OccupancyField {
            resolution: grid.resolution,
            origin: grid.origin,
            voxel_size: grid.voxel_size,
            values: grid.occupancy.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect(),
        }
    }

    /// Samples `inside` at every voxel center of `grid`'s box, then refines
    /// voxels next to a change of state with an `s x s x s` lattice.
    /// Voxels whose whole neighborhood agrees keep their center value.
    pub fn sample(grid: &OccupancyGrid, s: usize, inside: impl Fn(&Vec3) -> bool + Sync) -> OccupancyField {
        let n = grid.resolution;
        let mut coarse = grid.clone();
        coarse.fill_with(&inside);
        let mut values: Vec<f32> = coarse.occupancy.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
        let s = s.max(1);
        if s > 1 {
            let (origin, vs) = (grid.origin, grid.voxel_size);
            let sub = vs / s as f64;
            let total = (s * s * s) as f32;
            let state = |x: isize, y: isize, z: isize| {
                let inb = |v: isize| v >= 0 && (v as usize) < n;
                inb(x) && inb(y) && inb(z) && coarse.get(x as usize, y as usize, z as usize)
            };
            values.par_chunks_mut(n * n).enumerate().for_each(|(z, slab)| {
                for y in 0..n {
                    for x in 0..n {
                        let here = coarse.get(x, y, z);
                        let (xi, yi, zi) = (x as isize, y as isize, z as isize);
                        let mixed = (-1..=1).any(|dz| {
                            (-1..=1).any(|dy| (-1..=1).any(|dx| state(xi + dx, yi + dy, zi + dz) != here))
                        });
                        if !mixed {
                            continue;
                        }
                        let corner = origin + Vec3::new(x as f64, y as f64, z as f64) * vs;
                        let mut hits = 0u32;
                        for k in 0..s {
                            for j in 0..s {
                                for i in 0..s {
                                    let off = Vec3::new(i as f64 + 0.5, j as f64 + 0.5, k as f64 + 0.5) * sub;
                                    if inside(&(corner + off)) {
                                        hits += 1;
                                    }
                                }
                            }
                        }
                        slab[y * n + x] = hits as f32 / total;
                    }
                }
            });
        }
        OccupancyField {
            resolution: n,
            origin: grid.origin,
            voxel_size: grid.voxel_size,
            values,
        }
    }

    /// Voxels whose fraction exceeds one half.
    pub fn threshold(&self) -> OccupancyGrid {
        OccupancyGrid {
            resolution: self.resolution,
            origin: self.origin,
            voxel_size: self.voxel_size,
            occupancy: self.values.iter().map(|&v| v > 0.5).collect(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.values.iter().all(|&v| v <= 0.0)
    }
}

/// Parity test for a single point: inside iff an odd number of recorded
/// crossings along its pixel's ray lie beyond it.
pub fn parity_inside(map: &SpMap, p: &Vec3) -> bool {
    let grid = map.grid();
    let (r, c, radius) = match project(p) {
        Ok((theta, phi, d)) => {
            let (r, c) = grid.angles_to_pixel(theta, phi);
            (r, c, d)
        }
        Err(_) => (0, 0, 0.0),
    };
    let mut beyond = 0;
    for l in 0..map.layers() {
        match map.depth(l, r, c) {
            Some(d) if d as f64 > radius => beyond += 1,
            Some(_) => {}
            None => break,
        }
    }
    beyond % 2 == 1
}

/// Parity occupancy over `[-0.51, 0.51]^3` at `n` voxels per axis.
pub fn occupancy_from_map(map: &SpMap, n: usize) -> Result<OccupancyGrid> {
    if map.meta.truncation_count > 0 {
        return Err(Error::TruncatedMap(map.meta.truncation_count));
    }
    if n == 0 {
        return Err(Error::Config("voxel resolution must be positive".into()));
    }
    let mut grid = OccupancyGrid::for_unit_cube(n);
    grid.fill_with(|p| parity_inside(map, p));
    Ok(grid)
}

/// Fractional parity occupancy: voxels along the surface are refined with
/// `s^3` sub-samples each.
pub fn occupancy_field_from_map(map: &SpMap, n: usize, s: usize) -> Result<OccupancyField> {
    if map.meta.truncation_count > 0 {
        return Err(Error::TruncatedMap(map.meta.truncation_count));
    }
    if n == 0 {
        return Err(Error::Config("voxel resolution must be positive".into()));
    }
    Ok(OccupancyField::sample(&OccupancyGrid::for_unit_cube(n), s, |p| parity_inside(map, p)))
}

/// Where a vertex of [`grid_triangulate_indexed`] came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum VertexSource {
    Pixel { layer: usize, row: usize, col: usize },
    NorthPole { layer: usize },
    SouthPole { layer: usize },
}

#[derive(Debug, Clone)]
pub struct GridMesh {
    pub mesh: TriangleMesh,
    pub sources: Vec<VertexSource>,
}

/// Four inter-pixel arc lengths at the median valid depth.
pub fn default_discontinuity_tol(map: &SpMap) -> f64 {
    let mut d: Vec<f32> = map
        .depth_buffer()
        .iter()
        .zip(map.valid_buffer())
        .filter(|(_, &v)| v)
        .map(|(&d, _)| d)
        .collect();
    if d.is_empty() {
        return 0.0;
    }
    let mid = d.len() / 2;
    let (_, m, _) = d.select_nth_unstable_by(mid, f32::total_cmp);
    4.0 * map.grid().d_theta() * *m as f64
}

pub fn grid_triangulate(map: &SpMap, discontinuity_tol: f64) -> Result<TriangleMesh> {
    grid_triangulate_indexed(map, discontinuity_tol).map(|g| g.mesh)
}

/// Meshes each layer over the pixel grid. Neighboring valid pixels are
/// joined when their depths differ by less than `discontinuity_tol`; the
/// azimuth wraps and the first and last rows close with pole fans.
pub fn grid_triangulate_indexed(map: &SpMap, discontinuity_tol: f64) -> Result<GridMesh> {
    if map.valid_count() == 0 {
        return Err(Error::EmptyMap);
    }
    let grid = map.grid();
    let (h, w) = (grid.height(), grid.width());
    let mut faces: Vec<[VertexSource; 3]> = Vec::new();
    let mut pole_depth = HashMap::new();
    for l in 0..map.layers() {
        for (row, pole) in [
            (0, VertexSource::NorthPole { layer: l }),
            (h - 1, VertexSource::SouthPole { layer: l }),
        ] {
            let mut ds: Vec<f32> = (0..w).filter_map(|c| map.depth(l, row, c)).collect();
            if ds.is_empty() {
                continue;
            }
            // sorted so the mean does not depend on the column order
            ds.sort_by(f32::total_cmp);
            let mean = ds.iter().map(|&d| d as f64).sum::<f64>() / ds.len() as f64;
            pole_depth.insert(pole, mean);
        }
    }
    let depth = |v: VertexSource| -> Option<f64> {
        match v {
            VertexSource::Pixel { layer, row, col } => map.depth(layer, row, col).map(f64::from),
            _ => pole_depth.get(&v).copied(),
        }
    };
    let mut emit = |tri: [VertexSource; 3]| {
        let [Some(a), Some(b), Some(c)] = tri.map(depth) else { return };
        let tol = discontinuity_tol;
        if (a - b).abs() < tol && (b - c).abs() < tol && (a - c).abs() < tol {
            faces.push(tri);
        }
    };

    for l in 0..map.layers() {
        let px = |row: usize, col: usize| VertexSource::Pixel { layer: l, row, col };
        let valid = |v| depth(v).is_some();
        for r in 0..h - 1 {
            for c in 0..w {
                let cn = (c + 1) % w;
                let (a, b, cc, d) = (px(r, c), px(r, cn), px(r + 1, cn), px(r + 1, c));
                emit([a, d, cc]);
                emit([a, cc, b]);
                // a quad missing one end of the split diagonal still spans
                // one triangle across its three valid pixels
                if !valid(a) && valid(b) && valid(cc) && valid(d) {
                    emit([b, d, cc]);
                } else if !valid(cc) && valid(a) && valid(b) && valid(d) {
                    emit([a, d, b]);
                }
            }
        }
        for c in 0..w {
            let cn = (c + 1) % w;
            emit([VertexSource::NorthPole { layer: l }, px(0, c), px(0, cn)]);
            emit([px(h - 1, c), VertexSource::SouthPole { layer: l }, px(h - 1, cn)]);
        }
    }

    let mut index = HashMap::new();
    let mut sources = Vec::new();
    let mut vertices = Vec::new();
    let mut tri_ids = Vec::with_capacity(faces.len());
    for tri in &faces {
        let mut ids = [0u32; 3];
        for (k, &v) in tri.iter().enumerate() {
            ids[k] = *index.entry(v).or_insert_with(|| {
                sources.push(v);
                vertices.push(source_position(map, &pole_depth, v));
                (vertices.len() - 1) as u32
            });
        }
        tri_ids.push(ids);
    }
    let mesh = TriangleMesh::new(vertices, tri_ids)?;
    Ok(GridMesh { mesh, sources })
}

fn source_position(
    map: &SpMap,
    poles: &HashMap<VertexSource, f64>,
    v: VertexSource,
) -> Vec3 {
    match v {
        VertexSource::Pixel { layer, row, col } => {
            pixel_point(&map.grid(), row, col, map.depth(layer, row, col).unwrap())
        }
        VertexSource::NorthPole { .. } => Vec3::new(0.0, 0.0, poles[&v]),
        VertexSource::SouthPole { .. } => Vec3::new(0.0, 0.0, -poles[&v]),
    }
}
