//! Single-cell round trips: encode a normalized mesh in one representation,
//! decode it, and score the reconstruction against the source.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::decode::{default_discontinuity_tol, grid_triangulate, occupancy_field_from_map};
use crate::encode::{coverage, encode_unbounded, encode_with_stats, mesh_hash, EncodeConfig, ENCODER_VERSION};
use crate::error::{Error, Result};
use crate::marching::{marching_cubes_field, McOptions};
use crate::mesh::TriangleMesh;
use crate::metrics::{
    evaluate_against, regional_abs_rel, storage_bytes, EvalOptions, EvalTarget, Region, RotationSet, StorageMode,
};
use crate::nested::{encode_nested, fuse_nested_field, nested_storage_bytes, read_stacks, write_stacks, FusionRule};
use crate::quality::{combined_quality, QualityScores, QualityWeights};
use crate::sphere::{SpMap, SphericalGrid};
use crate::spm::{read_spm, write_spm};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Representation {
    Sp,
    Nested,
}

impl fmt::Display for Representation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Representation::Sp => "sp",
            Representation::Nested => "nested",
        })
    }
}

impl FromStr for Representation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "sp" => Ok(Representation::Sp),
            "nested" => Ok(Representation::Nested),
            _ => Err(Error::Config(format!("unknown representation {s:?}"))),
        }
    }
}

/// How a reconstruction was obtained from its encoding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decoder {
    /// Parity or vote occupancy followed by marching cubes.
    Occupancy,
    /// Direct triangulation of the spherical grid.
    Grid,
}

impl fmt::Display for Decoder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Decoder::Occupancy => "occupancy",
            Decoder::Grid => "grid",
        })
    }
}

pub const AUTO_VOXEL_CAP: usize = 128;

/// Everything besides the cell coordinates that shapes a result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricOptions {
    pub samples: usize,
    /// Taken from the enclosing configuration.
    #[serde(skip)]
    pub seed: u64,
    pub tau: f64,
    pub iou_resolution: usize,
    pub rotations: RotationSet,
    /// Voxels per axis for occupancy decoding; `None` uses the map height
    /// up to [`AUTO_VOXEL_CAP`].
    pub voxels: Option<usize>,
    /// Sub-samples per axis in voxels that straddle the surface.
    pub supersample: usize,
    pub fusion: FusionRule,
    pub quality: QualityWeights,
    pub coverage_samples: usize,
    pub coverage_tol: f64,
}

impl Default for MetricOptions {
    fn default() -> Self {
        MetricOptions {
            samples: crate::metrics::DEFAULT_SAMPLES,
            seed: 0,
            tau: crate::metrics::DEFAULT_TAU,
            iou_resolution: crate::metrics::DEFAULT_IOU_RESOLUTION,
            rotations: RotationSet::Identity,
            voxels: None,
            supersample: 3,
            fusion: FusionRule::Majority,
            quality: QualityWeights::default(),
            coverage_samples: 20_000,
            coverage_tol: 0.01,
        }
    }
}

impl MetricOptions {
    pub fn eval(&self) -> EvalOptions {
        EvalOptions {
            samples: self.samples,
            seed: self.seed,
            tau: self.tau,
            iou_resolution: self.iou_resolution,
            rotations: self.rotations,
        }
    }

    pub fn voxels_for(&self, height: usize) -> usize {
        self.voxels.unwrap_or(height.min(AUTO_VOXEL_CAP))
    }
}

/// One point of the sweep grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Cell {
    pub repr: Representation,
    /// Map height; spherical maps are `H x 2H`, stacks are `H x H`.
    pub height: usize,
    pub layers: usize,
}

impl Cell {
    pub fn resolution_label(&self) -> String {
        match self.repr {
            Representation::Sp => format!("{}x{}", self.height, 2 * self.height),
            Representation::Nested => format!("{}x{}", self.height, self.height),
        }
    }

    pub fn encode_config(&self) -> Result<EncodeConfig> {
        Ok(EncodeConfig::new(SphericalGrid::with_height(self.height)?, self.layers))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub mesh_id: String,
    pub repr: Representation,
    pub resolution: String,
    pub k: usize,
    pub decoder: Decoder,
    pub voxels: usize,
    pub chamfer: f64,
    pub vol_iou: Option<f64>,
    pub f_score: f64,
    pub storage_raw: u64,
    pub storage_deflated: u64,
    pub seam_abs_rel: Option<f64>,
    pub polar_abs_rel: Option<f64>,
    pub equator_abs_rel: Option<f64>,
    pub truncation_count: u32,
    pub coverage: Option<f64>,
    pub quality: Option<QualityScores>,
}

/// Where encodings are kept between runs, keyed by mesh and configuration.
#[derive(Debug, Clone)]
pub struct EncodingCache {
    pub dir: PathBuf,
}

impl EncodingCache {
    pub fn new(dir: impl Into<PathBuf>) -> Result<EncodingCache> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir)?;
        Ok(EncodingCache { dir })
    }

    /// Cache file for a mesh hash and a canonical configuration string.
    pub fn path(&self, mesh: u64, config: &str, ext: &str) -> PathBuf {
        let mut h = Sha256::new();
        h.update(mesh.to_le_bytes());
        h.update(config.as_bytes());
        let digest = h.finalize();
        let name: String = digest[..12].iter().map(|b| format!("{b:02x}")).collect();
        self.dir.join(format!("{name}.{ext}"))
    }
}

fn sp_config_key(cfg: &EncodeConfig) -> String {
    format!(
        "sp v{} {} k{} cos{} sigma{} n{}",
        ENCODER_VERSION, cfg.grid, cfg.layers, cfg.parallel_cos_threshold, cfg.perturb_sigma, cfg.store_normals
    )
}

/// Encodes, or loads the cached encoding when one exists.
pub fn encode_cached(mesh: &TriangleMesh, cfg: &EncodeConfig, cache: Option<&EncodingCache>) -> Result<SpMap> {
    let Some(cache) = cache else {
        return Ok(encode_with_stats(mesh, cfg)?.0);
    };
    let path = cache.path(mesh_hash(mesh), &sp_config_key(cfg), "spm");
    if path.exists() {
        log::debug!("cache hit {}", path.display());
        return read_spm(&path);
    }
    let map = encode_with_stats(mesh, cfg)?.0;
    write_spm(&map, &path)?;
    Ok(map)
}

/// Surface recovered from a map: parity occupancy when the source is closed
/// and nothing was truncated, grid triangulation otherwise.
pub fn decode_map(map: &SpMap, watertight: bool, voxels: usize, supersample: usize) -> Result<(TriangleMesh, Decoder)> {
    if watertight && map.meta.truncation_count == 0 {
        let field = occupancy_field_from_map(map, voxels, supersample)?;
        return Ok((marching_cubes_field(&field, &McOptions::default())?, Decoder::Occupancy));
    }
    let mesh = grid_triangulate(map, default_discontinuity_tol(map))?;
    Ok((mesh, Decoder::Grid))
}

/// A normalized source mesh with its evaluation target, shared by all cells.
#[derive(Debug, Clone)]
pub struct PreparedMesh {
    pub id: String,
    pub mesh: TriangleMesh,
    pub watertight: bool,
    pub target: EvalTarget,
}

impl PreparedMesh {
    pub fn new(id: &str, mesh: TriangleMesh, watertight: bool, opts: &MetricOptions) -> Result<PreparedMesh> {
        let target = EvalTarget::new(&mesh, &opts.eval(), watertight)?;
        Ok(PreparedMesh {
            id: id.to_string(),
            mesh,
            watertight,
            target,
        })
    }
}

/// Round trip of a prepared mesh through one cell.
pub fn run_cell(
    src: &PreparedMesh,
    cell: &Cell,
    opts: &MetricOptions,
    cache: Option<&EncodingCache>,
) -> Result<CellResult> {
    match cell.repr {
        Representation::Sp => run_sp(src, cell, opts, cache),
        Representation::Nested => run_nested(src, cell, opts, cache),
    }
}

fn run_sp(src: &PreparedMesh, cell: &Cell, opts: &MetricOptions, cache: Option<&EncodingCache>) -> Result<CellResult> {
    let cfg = cell.encode_config()?;
    let map = encode_cached(&src.mesh, &cfg, cache)?;
    let voxels = opts.voxels_for(cell.height);
    let (recon, decoder) = decode_map(&map, src.watertight, voxels, opts.supersample)?;
    let solid = decoder == Decoder::Occupancy;
    let report = evaluate_against(&recon, &src.target, solid, &opts.eval())?;

    // a second encoding of the reconstruction, compared pixel by pixel
    let (again, _) = encode_unbounded(&recon, &cfg)?;
    let region = |r| regional_abs_rel(&again, &map, r).ok();
    let quality = combined_quality(&again, &map, &opts.quality)?;
    let cov = coverage(&src.mesh, &map, opts.coverage_samples, opts.coverage_tol, opts.seed)?;

    Ok(CellResult {
        mesh_id: src.id.clone(),
        repr: cell.repr,
        resolution: cell.resolution_label(),
        k: cell.layers,
        decoder,
        voxels: if solid { voxels } else { 0 },
        chamfer: report.chamfer,
        vol_iou: report.vol_iou,
        f_score: report.f_score,
        storage_raw: storage_bytes(&map, StorageMode::Raw),
        storage_deflated: storage_bytes(&map, StorageMode::Deflated),
        seam_abs_rel: region(Region::Seam),
        polar_abs_rel: region(Region::Polar),
        equator_abs_rel: region(Region::Equator),
        truncation_count: map.meta.truncation_count,
        coverage: Some(cov),
        quality: Some(quality),
    })
}

fn run_nested(src: &PreparedMesh, cell: &Cell, opts: &MetricOptions, cache: Option<&EncodingCache>) -> Result<CellResult> {
    let stacks = match cache {
        Some(c) => {
            let key = format!("nested v{} n{} k{}", ENCODER_VERSION, cell.height, cell.layers);
            let path = c.path(mesh_hash(&src.mesh), &key, "spn");
            if path.exists() {
                read_stacks(&path)?
            } else {
                let s = encode_nested(&src.mesh, cell.height, cell.layers)?;
                write_stacks(&s, &path)?;
                s
            }
        }
        None => encode_nested(&src.mesh, cell.height, cell.layers)?,
    };
    let voxels = opts.voxels_for(cell.height);
    let field = fuse_nested_field(&stacks, voxels, opts.fusion, opts.supersample)?;
    let recon = marching_cubes_field(&field, &McOptions::default())?;
    let report = evaluate_against(&recon, &src.target, src.watertight, &opts.eval())?;
    Ok(CellResult {
        mesh_id: src.id.clone(),
        repr: cell.repr,
        resolution: cell.resolution_label(),
        k: cell.layers,
        decoder: Decoder::Occupancy,
        voxels,
        chamfer: report.chamfer,
        vol_iou: report.vol_iou,
        f_score: report.f_score,
        storage_raw: nested_storage_bytes(&stacks, StorageMode::Raw),
        storage_deflated: nested_storage_bytes(&stacks, StorageMode::Deflated),
        seam_abs_rel: None,
        polar_abs_rel: None,
        equator_abs_rel: None,
        truncation_count: stacks.iter().map(|s| s.truncation_count).sum(),
        coverage: None,
        quality: None,
    })
}

/// Cache directory default beside a given output path.
pub fn default_cache_dir(out: &Path) -> PathBuf {
    out.join("cache")
}
