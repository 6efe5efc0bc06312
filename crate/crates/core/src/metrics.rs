//! Reconstruction metrics: Chamfer distance, F-score and volume IoU on
//! meshes normalized to `[-1, 1]`, rotation alignment, regional depth error
//! and storage accounting.
//!
//! Chamfer distance here is the mean of the two directed mean
//! nearest-neighbor L2 distances.

use std::io::Write;

use nalgebra::Matrix3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::decode::OccupancyGrid;
use crate::error::{Error, Result};
use crate::kdtree::KdTree;
use crate::mesh::{normalize_to, TriangleMesh, Vec3};
use crate::sampling::sample_surface;
use crate::sphere::SpMap;
use crate::spm;
use crate::winding::WindingTree;

pub const DEFAULT_SAMPLES: usize = 100_000;
pub const DEFAULT_TAU: f64 = 0.1;
pub const DEFAULT_IOU_RESOLUTION: usize = 64;
/// Largest fraction of voxels allowed an ambiguous winding number.
pub const MAX_AMBIGUOUS_FRACTION: f64 = 0.01;

/// Centers the bounding box and scales the longest axis onto `[-1, 1]`.
pub fn normalize_unit(mesh: &TriangleMesh) -> Result<TriangleMesh> {
    normalize_to(mesh, 1.0)
}

fn distances_to(from: &[Vec3], tree: &KdTree) -> Vec<f64> {
    from.par_iter()
        .map(|p| tree.nearest(p).map_or(f64::INFINITY, |(_, d)| d))
        .collect()
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Nearest-neighbor distances in both directions, in input order.
pub struct PairDistances {
    pub a_to_b: Vec<f64>,
    pub b_to_a: Vec<f64>,
}

impl PairDistances {
    pub fn compute(a: &[Vec3], b: &[Vec3]) -> Result<PairDistances> {
        if a.is_empty() || b.is_empty() {
            return Err(Error::EmptySet);
        }
        let (ta, tb) = (KdTree::build(a), KdTree::build(b));
        Ok(PairDistances {
            a_to_b: distances_to(a, &tb),
            b_to_a: distances_to(b, &ta),
        })
    }

    pub fn chamfer(&self) -> f64 {
        0.5 * (mean(&self.a_to_b) + mean(&self.b_to_a))
    }

    pub fn f_score(&self, tau: f64) -> f64 {
        let within = |d: &[f64]| d.iter().filter(|&&x| x < tau).count() as f64 / d.len() as f64;
        let (precision, recall) = (within(&self.a_to_b), within(&self.b_to_a));
        if precision + recall == 0.0 {
            0.0
        } else {
            100.0 * 2.0 * precision * recall / (precision + recall)
        }
    }
}

pub fn chamfer(a: &[Vec3], b: &[Vec3]) -> Result<f64> {
    Ok(PairDistances::compute(a, b)?.chamfer())
}

/// F-score in percent at distance threshold `tau`.
pub fn f_score(a: &[Vec3], b: &[Vec3], tau: f64) -> Result<f64> {
    Ok(PairDistances::compute(a, b)?.f_score(tau))
}

fn voxelize_unit(m: &TriangleMesh, n: usize) -> Result<OccupancyGrid> {
    let mut g = OccupancyGrid::spanning(n, 1.0);
    WindingTree::build(m)?.voxelize(&mut g, MAX_AMBIGUOUS_FRACTION)?;
    Ok(g)
}

fn grid_iou(a: &OccupancyGrid, b: &OccupancyGrid) -> f64 {
    let (mut inter, mut union) = (0usize, 0usize);
    for (&x, &y) in a.occupancy.iter().zip(&b.occupancy) {
        inter += (x && y) as usize;
        union += (x || y) as usize;
    }
    if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    }
}

/// Volume IoU of two closed meshes, classified by winding number at the
/// voxel centers of an `n^3` grid over `[-1, 1]^3`.
pub fn volume_iou(a: &TriangleMesh, b: &TriangleMesh, n: usize) -> Result<f64> {
    Ok(grid_iou(&voxelize_unit(a, n)?, &voxelize_unit(b, n)?))
}

/// The 24 proper rotations mapping coordinate axes onto coordinate axes.
/// Identity comes first; the rest are ordered by their matrix entries.
pub fn octahedral_rotations() -> Vec<Matrix3<f64>> {
    let perms = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
    let mut out = Vec::new();
    for p in perms {
        for signs in 0..8 {
            let mut m = Matrix3::zeros();
            for (row, &col) in p.iter().enumerate() {
                m[(row, col)] = if signs >> row & 1 == 1 { -1.0 } else { 1.0 };
            }
            if m.determinant() > 0.0 {
                out.push(m);
            }
        }
    }
    out.sort_by(|a, b| {
        let key = |m: &Matrix3<f64>| (*m != Matrix3::identity(), m.iter().map(|v| -v as i8).collect::<Vec<_>>());
        key(a).cmp(&key(b))
    });
    out
}

pub fn rotation_z(degrees: f64) -> Matrix3<f64> {
    let (s, c) = degrees.to_radians().sin_cos();
    Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RotationSet {
    Identity,
    Octahedral,
    /// Octahedral search followed by 15 degree steps about z.
    OctahedralAzimuth,
}

impl std::str::FromStr for RotationSet {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "identity" => Ok(RotationSet::Identity),
            "octahedral" => Ok(RotationSet::Octahedral),
            "octahedral_azimuth" => Ok(RotationSet::OctahedralAzimuth),
            _ => Err(Error::Config(format!("unknown rotation set {s:?}"))),
        }
    }
}

/// Rotation picked by [`align_rotation`]: octahedral element `id`, then
/// `azimuth_deg` about z.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RotationChoice {
    pub id: usize,
    pub azimuth_deg: f64,
}

impl RotationChoice {
    pub fn matrix(&self) -> Matrix3<f64> {
        rotation_z(self.azimuth_deg) * octahedral_rotations()[self.id]
    }
}

impl std::fmt::Display for RotationChoice {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "o{}+z{}", self.id, self.azimuth_deg)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalOptions {
    pub samples: usize,
    pub seed: u64,
    pub tau: f64,
    pub iou_resolution: usize,
    pub rotations: RotationSet,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            samples: DEFAULT_SAMPLES,
            seed: 0,
            tau: DEFAULT_TAU,
            iou_resolution: DEFAULT_IOU_RESOLUTION,
            rotations: RotationSet::Octahedral,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub chamfer: f64,
    pub vol_iou: Option<f64>,
    pub f_score: f64,
    pub rotation_chosen: RotationChoice,
    pub storage_bytes: Option<u64>,
    pub seam_abs_rel: Option<f64>,
    pub pole_abs_rel: Option<f64>,
    pub equator_abs_rel: Option<f64>,
}

fn rotate_points(points: &[Vec3], m: &Matrix3<f64>) -> Vec<Vec3> {
    points.iter().map(|p| m * p).collect()
}

/// Reference side of an evaluation, normalized and sampled once so that
/// many reconstructions can be scored against it.
#[derive(Debug, Clone)]
pub struct EvalTarget {
    pub mesh: TriangleMesh,
    samples: Vec<Vec3>,
    tree: KdTree,
    occupancy: Option<OccupancyGrid>,
}

impl EvalTarget {
    /// Samples `gt` with `opts.seed + 1`. With `solid` set the mesh is also
    /// voxelized for volume IoU, which fails on open meshes.
    pub fn new(gt: &TriangleMesh, opts: &EvalOptions, solid: bool) -> Result<EvalTarget> {
        let mesh = normalize_unit(gt)?;
        let samples = sample_surface(&mesh, opts.samples, opts.seed.wrapping_add(1))?;
        let tree = KdTree::build(&samples);
        let occupancy = if solid {
            Some(voxelize_unit(&mesh, opts.iou_resolution)?)
        } else {
            None
        };
        Ok(EvalTarget {
            mesh,
            samples,
            tree,
            occupancy,
        })
    }
}

/// Searches `set` for the rotation of `pred` with the lowest Chamfer
/// distance to `gt`; both are normalized to `[-1, 1]` first. Ties go to the
/// lowest rotation id. Volume IoU is left unset.
pub fn align_rotation(
    pred: &TriangleMesh,
    gt: &TriangleMesh,
    set: RotationSet,
    opts: &EvalOptions,
) -> Result<(RotationChoice, EvalReport)> {
    align_to_target(pred, &EvalTarget::new(gt, opts, false)?, set, opts)
}

/// [`align_rotation`] against a prepared target.
pub fn align_to_target(
    pred: &TriangleMesh,
    target: &EvalTarget,
    set: RotationSet,
    opts: &EvalOptions,
) -> Result<(RotationChoice, EvalReport)> {
    let pred = normalize_unit(pred)?;
    let ps = sample_surface(&pred, opts.samples, opts.seed)?;
    let (gs, gt_tree) = (&target.samples, &target.tree);

    let score = |m: &Matrix3<f64>| -> Result<PairDistances> {
        let rp = rotate_points(&ps, m);
        let tree = KdTree::build(&rp);
        Ok(PairDistances {
            a_to_b: distances_to(&rp, gt_tree),
            b_to_a: distances_to(gs, &tree),
        })
    };
    let ids: Vec<usize> = match set {
        RotationSet::Identity => vec![0],
        _ => (0..24).collect(),
    };
    let rots = octahedral_rotations();
    let mut best = RotationChoice { id: 0, azimuth_deg: 0.0 };
    let mut best_d = score(&rots[0])?;
    for &id in &ids[1..] {
        let d = score(&rots[id])?;
        if d.chamfer() < best_d.chamfer() {
            best = RotationChoice { id, azimuth_deg: 0.0 };
            best_d = d;
        }
    }
    if set == RotationSet::OctahedralAzimuth {
        let base = best;
        for step in 1..24 {
            let cand = RotationChoice {
                id: base.id,
                azimuth_deg: 15.0 * step as f64,
            };
            let d = score(&cand.matrix())?;
            if d.chamfer() < best_d.chamfer() {
                best = cand;
                best_d = d;
            }
        }
    }
    let report = EvalReport {
        chamfer: best_d.chamfer(),
        vol_iou: None,
        f_score: best_d.f_score(opts.tau),
        rotation_chosen: best,
        storage_bytes: None,
        seam_abs_rel: None,
        pole_abs_rel: None,
        equator_abs_rel: None,
    };
    Ok((best, report))
}

/// Full comparison of a reconstruction against its source. Volume IoU is
/// computed only when `solid` is set.
pub fn evaluate(pred: &TriangleMesh, gt: &TriangleMesh, solid: bool, opts: &EvalOptions) -> Result<EvalReport> {
    evaluate_against(pred, &EvalTarget::new(gt, opts, solid)?, solid, opts)
}

/// [`evaluate`] against a prepared target; volume IoU needs a target built
/// with `solid` set.
pub fn evaluate_against(pred: &TriangleMesh, target: &EvalTarget, solid: bool, opts: &EvalOptions) -> Result<EvalReport> {
    let (rot, mut report) = align_to_target(pred, target, opts.rotations, opts)?;
    if solid {
        let reference = target
            .occupancy
            .as_ref()
            .ok_or_else(|| Error::Config("target was prepared without volume".into()))?;
        let m = rot.matrix();
        let p = normalize_unit(pred)?.map_vertices(|v| m * v);
        report.vol_iou = Some(grid_iou(&voxelize_unit(&p, reference.resolution)?, reference));
    }
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Region {
    /// First and last two columns.
    Seam,
    /// Top and bottom 15% of rows.
    Polar,
    /// Middle 30% of rows.
    Equator,
    All,
}

impl Region {
    pub fn contains(&self, h: usize, w: usize, r: usize, c: usize) -> bool {
        let band = (0.15 * h as f64).ceil() as usize;
        match self {
            Region::Seam => c < 2 || c + 2 >= w,
            Region::Polar => r < band || r + band >= h,
            Region::Equator => {
                let lo = (0.35 * h as f64).round() as usize;
                let hi = (0.65 * h as f64).round() as usize;
                (lo..hi).contains(&r)
            }
            Region::All => true,
        }
    }
}

/// Mean relative depth error over pixels valid in both maps within `region`.
pub fn regional_abs_rel(map: &SpMap, reference: &SpMap, region: Region) -> Result<f64> {
    if map.grid() != reference.grid() || map.layers() != reference.layers() {
        return Err(Error::GridMismatch(format!(
            "{}x{} vs {}x{} layers",
            map.grid(),
            map.layers(),
            reference.grid(),
            reference.layers()
        )));
    }
    let g = map.grid();
    let (h, w) = (g.height(), g.width());
    let (mut sum, mut count) = (0.0, 0usize);
    for l in 0..map.layers() {
        for r in 0..h {
            for c in 0..w {
                if !region.contains(h, w, r, c) {
                    continue;
                }
                if let (Some(a), Some(b)) = (map.depth(l, r, c), reference.depth(l, r, c)) {
                    sum += ((a as f64) - (b as f64)).abs() / b as f64;
                    count += 1;
                }
            }
        }
    }
    if count == 0 {
        return Err(Error::EmptySet);
    }
    Ok(sum / count as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StorageMode {
    Raw,
    Deflated,
}

/// Length of `bytes` after deflate at level 6.
pub fn deflated_len(bytes: &[u8]) -> u64 {
    let mut enc = flate2::write::DeflateEncoder::new(Vec::new(), flate2::Compression::new(6));
    enc.write_all(bytes).expect("writing to memory");
    enc.finish().expect("writing to memory").len() as u64
}

pub fn storage_bytes(map: &SpMap, mode: StorageMode) -> u64 {
    let bytes = spm::to_bytes(map);
    match mode {
        StorageMode::Raw => bytes.len() as u64,
        StorageMode::Deflated => deflated_len(&bytes),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::sphere::SphericalGrid;

    fn opts(samples: usize) -> EvalOptions {
        EvalOptions {
            samples,
            ..Default::default()
        }
    }

    #[test]
    fn normalize_unit_examples() {
        let cube = fixtures::box_mesh(Vec3::repeat(-0.5), Vec3::repeat(0.5));
        let n = normalize_unit(&cube).unwrap();
        assert!(n.vertices.iter().all(|v| v.abs().max() == 1.0));
        assert_eq!(normalize_unit(&n).unwrap().vertices, n.vertices);
        let b = fixtures::box_mesh(Vec3::zeros(), Vec3::new(4.0, 2.0, 1.0));
        let e = normalize_unit(&b).unwrap().aabb().extent();
        assert!((e - Vec3::new(2.0, 1.0, 0.5)).norm() < 1e-12);
    }

    #[test]
    fn chamfer_of_concentric_spheres() {
        let s = fixtures::icosphere(1.0, 5);
        let a = sample_surface(&s, 20_000, 1).unwrap();
        let b: Vec<Vec3> = a.iter().map(|p| p * 1.01).collect();
        assert_eq!(chamfer(&a, &a).unwrap(), 0.0);
        let cd = chamfer(&a, &b).unwrap();
        assert!((cd - 0.01).abs() < 0.001, "{cd}");
        assert_eq!(cd, chamfer(&b, &a).unwrap());
    }

    #[test]
    fn f_score_examples() {
        let s = fixtures::icosphere(1.0, 3);
        let a = sample_surface(&s, 5000, 1).unwrap();
        assert_eq!(f_score(&a, &a, 0.1).unwrap(), 100.0);
        let far: Vec<Vec3> = a.iter().map(|p| p + Vec3::new(10.0, 0.0, 0.0)).collect();
        assert_eq!(f_score(&a, &far, 0.1).unwrap(), 0.0);
        let big: Vec<Vec3> = a.iter().map(|p| p * 1.05).collect();
        assert_eq!(f_score(&a, &big, 0.1).unwrap(), 100.0);
        assert!(matches!(f_score(&[], &a, 0.1), Err(Error::EmptySet)));
    }

    #[test]
    fn volume_iou_examples() {
        let full = fixtures::box_mesh(Vec3::repeat(-1.0), Vec3::repeat(1.0));
        let half = fixtures::box_mesh(Vec3::repeat(-0.5), Vec3::repeat(0.5));
        assert_eq!(volume_iou(&full, &full, 32).unwrap(), 1.0);
        let iou = volume_iou(&half, &full, 32).unwrap();
        assert!((iou - 0.125).abs() < 0.02, "{iou}");
    }

    #[test]
    fn rotation_group() {
        let rots = octahedral_rotations();
        assert_eq!(rots.len(), 24);
        assert_eq!(rots[0], Matrix3::identity());
        for (i, a) in rots.iter().enumerate() {
            assert!((a * a.transpose() - Matrix3::identity()).norm() < 1e-12);
            assert!(rots[i + 1..].iter().all(|b| a != b));
        }
    }

    #[test]
    fn alignment_undoes_quarter_turn() {
        let m = fixtures::fixture("cup_with_handle").unwrap().mesh;
        let turned = m.map_vertices(|v| rotation_z(90.0) * v);
        let (rot, report) = align_rotation(&turned, &m, RotationSet::Octahedral, &opts(4000)).unwrap();
        let composed = rot.matrix() * rotation_z(90.0);
        assert!((composed - Matrix3::identity()).norm() < 1e-9);
        let (same, _) = align_rotation(&m, &m, RotationSet::Octahedral, &opts(4000)).unwrap();
        assert_eq!(same.id, 0);
        assert!(report.chamfer < 0.05);
    }

    #[test]
    fn azimuth_refinement_helps_off_axis_turn() {
        let m = fixtures::fixture("cup_with_handle").unwrap().mesh;
        let turned = m.map_vertices(|v| rotation_z(45.0) * v);
        let o = opts(4000);
        let (_, coarse) = align_rotation(&turned, &m, RotationSet::Octahedral, &o).unwrap();
        let (_, fine) = align_rotation(&turned, &m, RotationSet::OctahedralAzimuth, &o).unwrap();
        assert!(fine.chamfer < coarse.chamfer);
    }

    #[test]
    fn regional_error_of_scaled_map() {
        let grid = SphericalGrid::with_height(20).unwrap();
        let mut a = SpMap::empty(grid, 1, false);
        let mut b = SpMap::empty(grid, 1, false);
        for r in 0..20 {
            for c in 0..40 {
                let d = 0.2 + 0.01 * r as f32;
                a.set(0, r, c, d, None);
                b.set(0, r, c, d * 1.01, None);
            }
        }
        for region in [Region::Seam, Region::Polar, Region::Equator, Region::All] {
            assert_eq!(regional_abs_rel(&a, &a, region).unwrap(), 0.0);
            let e = regional_abs_rel(&b, &a, region).unwrap();
            assert!((e - 0.01).abs() < 1e-6, "{region:?} {e}");
        }
        let other = SpMap::empty(SphericalGrid::with_height(10).unwrap(), 1, false);
        assert!(matches!(regional_abs_rel(&a, &other, Region::All), Err(Error::GridMismatch(_))));
    }

    #[test]
    fn storage_examples() {
        let m = SpMap::empty(SphericalGrid::new(256, 512).unwrap(), 4, false);
        assert_eq!(storage_bytes(&m, StorageMode::Raw), 2_162_720);
        assert!(storage_bytes(&m, StorageMode::Deflated) < 2_162_720 / 50);
    }
}
