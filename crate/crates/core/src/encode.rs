//! Mesh to multi-layer spherical depth map.
//!
//! One ray is cast from the origin through every pixel center. The hits of
//! a ray, sorted by distance, are written into the layers in reverse: layer
//! 0 receives the outermost crossing, layer 1 the next one inward, and so
//! on. A ray with more than `k` crossings keeps its `k` outermost ones.

use rayon::prelude::*;

use crate::decode::unproject_map;
use crate::error::{Error, Result};
use crate::kdtree::KdTree;
use crate::mesh::{TriangleMesh, MAX_RADIUS};
use crate::raycast::{intersect_all_with_retry, Bvh, HitList, Ray, DEFAULT_PARALLEL_COS, DEFAULT_PERTURB_SIGMA};
use crate::sampling::sample_surface;
use crate::sphere::{SpMap, SpMeta, SphericalGrid};

pub const ENCODER_VERSION: u16 = 1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EncodeConfig {
    pub grid: SphericalGrid,
    pub layers: usize,
    pub parallel_cos_threshold: f64,
    pub perturb_sigma: f64,
    pub store_normals: bool,
}

impl Default for EncodeConfig {
    fn default() -> Self {
        EncodeConfig {
            grid: SphericalGrid::new(256, 512).unwrap(),
            layers: 4,
            parallel_cos_threshold: DEFAULT_PARALLEL_COS,
            perturb_sigma: DEFAULT_PERTURB_SIGMA,
            store_normals: false,
        }
    }
}

impl EncodeConfig {
    pub fn new(grid: SphericalGrid, layers: usize) -> Self {
        EncodeConfig {
            grid,
            layers,
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct EncodeStats {
    /// Hits dropped beyond the `k` outermost.
    pub truncated_hits: u64,
    /// Pixels whose ray crossed the surface more than `k` times.
    pub truncated_pixels: u64,
    /// Rays recast after a near-parallel rejection.
    pub retried_rays: u64,
    pub max_hits: usize,
}

pub fn encode(mesh: &TriangleMesh, cfg: &EncodeConfig) -> Result<SpMap> {
    encode_with_stats(mesh, cfg).map(|(m, _)| m)
}

/// Per-pixel layer fill: the `k` outermost hits in outermost-first order.
pub fn fill_order(hits: &HitList, k: usize) -> impl Iterator<Item = &crate::raycast::Hit> {
    hits.hits.iter().rev().take(k)
}

pub fn encode_with_stats(mesh: &TriangleMesh, cfg: &EncodeConfig) -> Result<(SpMap, EncodeStats)> {
    let radius = mesh.max_radius();
    if !mesh.is_empty() && radius > MAX_RADIUS + 1e-6 {
        return Err(Error::UnnormalizedMesh {
            radius,
            limit: MAX_RADIUS + 1e-6,
        });
    }
    encode_unbounded(mesh, cfg)
}

/// Encodes without the normalization check, for geometry that may poke
/// slightly out of the unit cube, such as a decoded surface.
pub fn encode_unbounded(mesh: &TriangleMesh, cfg: &EncodeConfig) -> Result<(SpMap, EncodeStats)> {
    if cfg.layers == 0 {
        return Err(Error::Config("layer count must be at least 1".into()));
    }
    if mesh.is_empty() {
        return Err(Error::EmptyMesh);
    }
    let bvh = Bvh::build(mesh)?;
    let grid = cfg.grid;
    let (h, w) = (grid.height(), grid.width());

    let rows: Vec<Vec<HitList>> = (0..h)
        .into_par_iter()
        .map(|r| {
            (0..w)
                .map(|c| {
                    let ray = Ray::from_origin(grid.direction(r, c));
                    intersect_all_with_retry(
                        &bvh,
                        mesh,
                        &ray,
                        cfg.parallel_cos_threshold,
                        cfg.perturb_sigma,
                        (r * w + c) as u64,
                    )
                })
                .collect()
        })
        .collect();

    let mut map = SpMap::empty(grid, cfg.layers, cfg.store_normals);
    let mut stats = EncodeStats::default();
    for (r, row) in rows.iter().enumerate() {
        for (c, hits) in row.iter().enumerate() {
            let dir = grid.direction(r, c);
            let m = hits.len();
            stats.max_hits = stats.max_hits.max(m);
            if m > cfg.layers {
                stats.truncated_pixels += 1;
                stats.truncated_hits += (m - cfg.layers) as u64;
            }
            if hits.retried {
                stats.retried_rays += 1;
            }
            for (layer, hit) in fill_order(hits, cfg.layers).enumerate() {
                let normal = if hit.normal.dot(&dir) > 0.0 { -hit.normal } else { hit.normal };
                map.set(layer, r, c, hit.t as f32, Some(normal));
            }
        }
    }
    map.meta = SpMeta {
        source_hash: mesh_hash(mesh),
        encoder_version: ENCODER_VERSION,
        truncation_count: stats.truncated_hits.min(u32::MAX as u64) as u32,
    };
    if stats.truncated_hits > 0 {
        log::info!(
            "encode: {} hits dropped on {} pixels (k = {})",
            stats.truncated_hits,
            stats.truncated_pixels,
            cfg.layers
        );
    }
    Ok((map, stats))
}

/// Leading 8 bytes of the SHA-256 over vertex coordinates and face indices.
pub fn mesh_hash(mesh: &TriangleMesh) -> u64 {
    use sha2::{Digest, Sha256};
    let mut hasher = Sha256::new();
    for v in &mesh.vertices {
        for c in v.iter() {
            hasher.update(c.to_le_bytes());
        }
    }
    for f in &mesh.faces {
        for i in f {
            hasher.update(i.to_le_bytes());
        }
    }
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().unwrap())
}

/// Fraction of area-uniform surface samples lying within `tol` of a decoded
/// map point.
pub fn coverage(mesh: &TriangleMesh, map: &SpMap, n_samples: usize, tol: f64, seed: u64) -> Result<f64> {
    let samples = sample_surface(mesh, n_samples, seed)?;
    let cloud = match unproject_map(map) {
        Ok(c) => c,
        Err(Error::EmptyMap) => return Ok(0.0),
        Err(e) => return Err(e),
    };
    let tree = KdTree::build(&cloud.points);
    let covered = samples
        .par_iter()
        .filter(|p| tree.nearest(p).map(|(_, d)| d <= tol).unwrap_or(false))
        .count();
    Ok(covered as f64 / samples.len() as f64)
}

/// Pixel counts by number of valid layers: entry `i` counts pixels with
/// exactly `i` hits recorded.
pub fn layer_histogram(map: &SpMap) -> Vec<usize> {
    let g = map.grid();
    let mut hist = vec![0; map.layers() + 1];
    for r in 0..g.height() {
        for c in 0..g.width() {
            hist[map.hit_count(r, c)] += 1;
        }
    }
    hist
}
