//! Nested orthographic depth stacks: the six-view baseline.
//!
//! For each of the six axis directions, parallel rays are cast through the
//! pixel centers of an `N x N` grid covering `[-0.5, 0.5]^2`, starting just
//! outside the normalized cube. Each pixel keeps its `k` nearest crossings.
//! A voxel is solid for one view when it lies between an entry and the
//! following exit, and the views are combined by vote.

use std::fmt;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::decode::{OccupancyField, OccupancyGrid, OCCUPANCY_MARGIN};
use crate::encode::ENCODER_VERSION;
use crate::error::{Error, Result};
use crate::marching::marching_cubes;
use crate::mesh::{TriangleMesh, Vec3};
use crate::metrics::{deflated_len, StorageMode};
use crate::raycast::{intersect_all_with_retry, Bvh, Ray, DEFAULT_PARALLEL_COS, DEFAULT_PERTURB_SIGMA};
use crate::sphere::SENTINEL;
use crate::spm::{read_body, write_body, Body, SpHeader, FLAG_DEPTH, NESTED_MAGIC};

/// Distance of the ray origins from the center, along the view axis.
pub const RAY_START: f64 = 0.5 + OCCUPANCY_MARGIN;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Axis {
    PosX,
    NegX,
    PosY,
    NegY,
    PosZ,
    NegZ,
}

impl Axis {
    pub const ALL: [Axis; 6] = [Axis::PosX, Axis::NegX, Axis::PosY, Axis::NegY, Axis::PosZ, Axis::NegZ];

    /// Coordinate index the rays travel along.
    pub fn index(self) -> usize {
        self.tag() as usize / 2
    }

    /// `+1` when rays travel toward increasing coordinate.
    pub fn sign(self) -> f64 {
        if self.tag() % 2 == 0 {
            1.0
        } else {
            -1.0
        }
    }

    pub fn tag(self) -> u8 {
        Axis::ALL.iter().position(|&a| a == self).unwrap() as u8
    }

    pub fn from_tag(tag: u8) -> Result<Axis> {
        Axis::ALL
            .get(tag as usize)
            .copied()
            .ok_or_else(|| Error::HeaderMismatch(format!("unknown axis tag {tag}")))
    }

    /// The two image axes, in (column, row) order.
    pub fn image_axes(self) -> (usize, usize) {
        let a = self.index();
        ((a + 1) % 3, (a + 2) % 3)
    }

    pub fn direction(self) -> Vec3 {
        let mut d = Vec3::zeros();
        d[self.index()] = self.sign();
        d
    }
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Axis::PosX => "+x",
            Axis::NegX => "-x",
            Axis::PosY => "+y",
            Axis::NegY => "-y",
            Axis::PosZ => "+z",
            Axis::NegZ => "-z",
        };
        f.write_str(s)
    }
}

/// One view: `k` layers of `N x N` depths measured from the ray origins.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthStack {
    pub axis: Axis,
    pub resolution: usize,
    pub layers: usize,
    /// Layer-major, then row-major; `-1` where invalid.
    pub depth: Vec<f32>,
    pub valid: Vec<bool>,
    pub truncation_count: u32,
}

impl DepthStack {
    pub fn empty(axis: Axis, resolution: usize, layers: usize) -> DepthStack {
        let n = layers * resolution * resolution;
        DepthStack {
            axis,
            resolution,
            layers,
            depth: vec![SENTINEL; n],
            valid: vec![false; n],
            truncation_count: 0,
        }
    }

    pub fn index(&self, layer: usize, row: usize, col: usize) -> usize {
        (layer * self.resolution + row) * self.resolution + col
    }

    pub fn depth(&self, layer: usize, row: usize, col: usize) -> Option<f32> {
        let i = self.index(layer, row, col);
        self.valid[i].then_some(self.depth[i])
    }

    pub fn hit_count(&self, row: usize, col: usize) -> usize {
        (0..self.layers).take_while(|&l| self.valid[self.index(l, row, col)]).count()
    }

    /// Origin of the ray through pixel `(row, col)`.
    pub fn ray_origin(&self, row: usize, col: usize) -> Vec3 {
        let (cu, rv) = self.axis.image_axes();
        let step = 1.0 / self.resolution as f64;
        let mut o = Vec3::zeros();
        o[self.axis.index()] = -self.axis.sign() * RAY_START;
        o[cu] = -0.5 + (col as f64 + 0.5) * step;
        o[rv] = -0.5 + (row as f64 + 0.5) * step;
        o
    }

    /// Depths ascend strictly per pixel and valid layers are front-packed.
    pub fn check_invariants(&self) -> Result<()> {
        for r in 0..self.resolution {
            for c in 0..self.resolution {
                let mut prev = f32::NEG_INFINITY;
                let mut ended = false;
                for l in 0..self.layers {
                    match self.depth(l, r, c) {
                        Some(d) if ended || d <= prev => {
                            return Err(Error::InvalidMap(format!("stack {} pixel ({r}, {c}) out of order", self.axis)))
                        }
                        Some(d) => prev = d,
                        None => ended = true,
                    }
                }
            }
        }
        Ok(())
    }

    /// Whether the view classifies `p` as solid: `p` sits between an entry
    /// and its exit. A trailing unpaired entry runs to the far side of the box.
    pub fn inside(&self, p: &Vec3) -> bool {
        let (cu, rv) = self.axis.image_axes();
        let n = self.resolution as f64;
        let col = ((p[cu] + 0.5) * n).floor();
        let row = ((p[rv] + 0.5) * n).floor();
        if col < 0.0 || row < 0.0 || col >= n || row >= n {
            return false;
        }
        let (row, col) = (row as usize, col as usize);
        let t = p[self.axis.index()] * self.axis.sign() + RAY_START;
        let hits = self.hit_count(row, col);
        (0..hits.div_ceil(2)).any(|m| {
            let entry = self.depth[self.index(2 * m, row, col)] as f64;
            let exit = if 2 * m + 1 < hits { self.depth[self.index(2 * m + 1, row, col)] as f64 } else { f64::INFINITY };
            entry <= t && t < exit
        })
    }
}

/// Casts the six views of a normalized mesh.
pub fn encode_nested(mesh: &TriangleMesh, resolution: usize, layers: usize) -> Result<Vec<DepthStack>> {
    if mesh.is_empty() {
        return Err(Error::EmptyMesh);
    }
    if resolution == 0 || layers == 0 {
        return Err(Error::Config("stack resolution and layer count must be positive".into()));
    }
    let bvh = Bvh::build(mesh)?;
    let n = resolution;
    Axis::ALL
        .iter()
        .map(|&axis| {
            let mut stack = DepthStack::empty(axis, n, layers);
            let rows: Vec<Vec<Vec<f64>>> = (0..n)
                .into_par_iter()
                .map(|r| {
                    (0..n)
                        .map(|c| {
                            let ray = Ray::new(stack.ray_origin(r, c), axis.direction());
                            let seed = ((axis.tag() as usize * n + r) * n + c) as u64;
                            intersect_all_with_retry(&bvh, mesh, &ray, DEFAULT_PARALLEL_COS, DEFAULT_PERTURB_SIGMA, seed)
                                .hits
                                .iter()
                                .map(|h| h.t)
                                .collect()
                        })
                        .collect()
                })
                .collect();
            let mut dropped = 0u64;
            for (r, row) in rows.iter().enumerate() {
                for (c, ts) in row.iter().enumerate() {
                    dropped += ts.len().saturating_sub(layers) as u64;
                    for (l, &t) in ts.iter().take(layers).enumerate() {
                        let i = stack.index(l, r, c);
                        stack.depth[i] = t as f32;
                        stack.valid[i] = true;
                    }
                }
            }
            stack.truncation_count = dropped.min(u32::MAX as u64) as u32;
            Ok(stack)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FusionRule {
    /// All six views agree.
    Intersection,
    /// At least four of six views.
    Majority,
    /// Any single view.
    Union,
}

impl FusionRule {
    pub fn votes_needed(self) -> usize {
        match self {
            FusionRule::Intersection => 6,
            FusionRule::Majority => 4,
            FusionRule::Union => 1,
        }
    }
}

impl std::str::FromStr for FusionRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "intersection" => Ok(FusionRule::Intersection),
            "majority" => Ok(FusionRule::Majority),
            "union" => Ok(FusionRule::Union),
            _ => Err(Error::Config(format!("unknown fusion rule {s:?}"))),
        }
    }
}

fn check_stacks(stacks: &[DepthStack]) -> Result<()> {
    if stacks.len() != 6 {
        return Err(Error::StackMismatch(format!("expected 6 stacks, got {}", stacks.len())));
    }
    let mut axes: Vec<Axis> = stacks.iter().map(|s| s.axis).collect();
    axes.sort();
    if axes != Axis::ALL {
        return Err(Error::StackMismatch("every axis direction must appear once".into()));
    }
    let (n, k) = (stacks[0].resolution, stacks[0].layers);
    if stacks.iter().any(|s| s.resolution != n || s.layers != k) {
        return Err(Error::StackMismatch("stacks differ in resolution or layer count".into()));
    }
    Ok(())
}

/// Votes the six views into an occupancy grid over the decoder's box.
pub fn fuse_nested(stacks: &[DepthStack], n_vox: usize, rule: FusionRule) -> Result<OccupancyGrid> {
    check_stacks(stacks)?;
    let mut grid = OccupancyGrid::for_unit_cube(n_vox);
    let need = rule.votes_needed();
    grid.fill_with(|p| stacks.iter().filter(|s| s.inside(p)).count() >= need);
    Ok(grid)
}

/// Fractional form of [`fuse_nested`]; see [`OccupancyField::sample`].
pub fn fuse_nested_field(stacks: &[DepthStack], n_vox: usize, rule: FusionRule, s: usize) -> Result<OccupancyField> {
    check_stacks(stacks)?;
    let need = rule.votes_needed();
    let base = OccupancyGrid::for_unit_cube(n_vox);
    Ok(OccupancyField::sample(&base, s, |p| stacks.iter().filter(|st| st.inside(p)).count() >= need))
}

pub fn reconstruct_nested(stacks: &[DepthStack], n_vox: usize, rule: FusionRule) -> Result<TriangleMesh> {
    marching_cubes(&fuse_nested(stacks, n_vox, rule)?)
}

/// One stack as an `SPN1` file; the axis tag replaces the source hash.
pub fn stack_to_bytes(stack: &DepthStack) -> Vec<u8> {
    let header = SpHeader {
        magic: NESTED_MAGIC,
        height: stack.resolution as u32,
        width: stack.resolution as u32,
        layers: stack.layers as u32,
        flags: FLAG_DEPTH,
        encoder_version: ENCODER_VERSION,
        truncation_count: stack.truncation_count,
        source_hash: stack.axis.tag() as u64,
    };
    let mut out = Vec::with_capacity(header.file_len());
    out.extend_from_slice(&header.to_bytes());
    write_body(
        &mut out,
        &Body {
            depth: &stack.depth,
            valid: &stack.valid,
            normals: None,
        },
    );
    out
}

pub fn stack_from_bytes(bytes: &[u8]) -> Result<DepthStack> {
    let header = SpHeader::parse(bytes, NESTED_MAGIC)?;
    if header.height != header.width || header.layers == 0 {
        return Err(Error::HeaderMismatch("stacks are square with at least one layer".into()));
    }
    let axis = Axis::from_tag(bytes[24])?;
    let body = read_body(bytes, &header)?;
    Ok(DepthStack {
        axis,
        resolution: header.height as usize,
        layers: header.layers as usize,
        depth: body.depth,
        valid: body.valid,
        truncation_count: header.truncation_count,
    })
}

/// The six stacks back to back.
pub fn stacks_to_bytes(stacks: &[DepthStack]) -> Vec<u8> {
    stacks.iter().flat_map(stack_to_bytes).collect()
}

pub fn stacks_from_bytes(bytes: &[u8]) -> Result<Vec<DepthStack>> {
    let mut out = Vec::new();
    let mut rest = bytes;
    while !rest.is_empty() {
        let len = SpHeader::parse(rest, NESTED_MAGIC)?.file_len();
        if rest.len() < len {
            return Err(Error::HeaderMismatch("truncated stack file".into()));
        }
        out.push(stack_from_bytes(&rest[..len])?);
        rest = &rest[len..];
    }
    check_stacks(&out)?;
    Ok(out)
}

pub fn write_stacks(stacks: &[DepthStack], path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, stacks_to_bytes(stacks))?;
    Ok(())
}

pub fn read_stacks(path: impl AsRef<Path>) -> Result<Vec<DepthStack>> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(Error::FileNotFound(path.to_path_buf()));
    }
    stacks_from_bytes(&fs::read(path)?)
}

pub fn nested_storage_bytes(stacks: &[DepthStack], mode: StorageMode) -> u64 {
    let bytes = stacks_to_bytes(stacks);
    match mode {
        StorageMode::Raw => bytes.len() as u64,
        StorageMode::Deflated => deflated_len(&bytes),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    #[test]
    fn cube_gives_two_flat_layers() {
        let cube = fixtures::box_mesh(Vec3::repeat(-0.5), Vec3::repeat(0.5));
        let stacks = encode_nested(&cube, 8, 4).unwrap();
        let z = stacks.iter().find(|s| s.axis == Axis::PosZ).unwrap();
        for r in 0..8 {
            for c in 0..8 {
                assert_eq!(z.hit_count(r, c), 2);
                assert!((z.depth(0, r, c).unwrap() as f64 - OCCUPANCY_MARGIN).abs() < 1e-6);
                assert!((z.depth(1, r, c).unwrap() as f64 - (1.0 + OCCUPANCY_MARGIN)).abs() < 1e-6);
            }
        }
        for s in &stacks {
            s.check_invariants().unwrap();
        }
    }

    #[test]
    fn sphere_chords() {
        let m = fixtures::icosphere(0.4, 4);
        let stacks = encode_nested(&m, 16, 2).unwrap();
        for s in &stacks {
            for r in 0..16 {
                for c in 0..16 {
                    let o = s.ray_origin(r, c);
                    let rho2 = o.norm_squared() - RAY_START * RAY_START;
                    if let Some(entry) = s.depth(0, r, c) {
                        let half_chord = RAY_START - entry as f64;
                        assert!((half_chord * half_chord + rho2 - 0.16).abs() < 0.01);
                    }
                }
            }
        }
    }

    #[test]
    fn fusion_rules() {
        let m = fixtures::icosphere(0.4, 4);
        let stacks = encode_nested(&m, 32, 2).unwrap();
        let g = fuse_nested(&stacks, 32, FusionRule::Majority).unwrap();
        for z in 0..32 {
            for y in 0..32 {
                for x in 0..32 {
                    let r = g.center(x, y, z).norm();
                    if (r - 0.4).abs() > 2.0 * g.voxel_size {
                        assert_eq!(g.get(x, y, z), r < 0.4);
                    }
                }
            }
        }
        let mut rev = stacks.clone();
        rev.reverse();
        assert_eq!(fuse_nested(&rev, 32, FusionRule::Majority).unwrap(), g);
        let none: Vec<DepthStack> = Axis::ALL.iter().map(|&a| DepthStack::empty(a, 8, 2)).collect();
        assert_eq!(fuse_nested(&none, 16, FusionRule::Union).unwrap().count(), 0);
        assert!(matches!(fuse_nested(&stacks[..5], 8, FusionRule::Majority), Err(Error::StackMismatch(_))));
    }

    #[test]
    fn single_layer_votes_keep_a_convex_shape() {
        let m = fixtures::icosphere(0.4, 4);
        let g = fuse_nested(&encode_nested(&m, 32, 1).unwrap(), 32, FusionRule::Majority).unwrap();
        let mut wrong = 0;
        for z in 0..32 {
            for y in 0..32 {
                for x in 0..32 {
                    let r = g.center(x, y, z).norm();
                    if (r - 0.4).abs() > 2.0 * g.voxel_size && g.get(x, y, z) != (r < 0.4) {
                        wrong += 1;
                    }
                }
            }
        }
        assert_eq!(wrong, 0);
    }

    #[test]
    fn watertight_views_have_even_counts() {
        let m = crate::mesh::normalize_mesh(&fixtures::fixture("torus").unwrap().mesh).unwrap();
        for s in encode_nested(&m, 24, 8).unwrap() {
            for r in 0..24 {
                for c in 0..24 {
                    assert_eq!(s.hit_count(r, c) % 2, 0, "{} ({r}, {c})", s.axis);
                }
            }
        }
    }

    #[test]
    fn container_round_trip() {
        let m = fixtures::nested_shells(0.4, 0.2, 3);
        let stacks = encode_nested(&m, 8, 3).unwrap();
        let bytes = stacks_to_bytes(&stacks);
        assert_eq!(&bytes[..4], b"SPN1");
        assert_eq!(stacks_from_bytes(&bytes).unwrap(), stacks);
        assert!(matches!(stacks_from_bytes(&bytes[..bytes.len() - 1]), Err(Error::HeaderMismatch(_))));
        assert_eq!(nested_storage_bytes(&stacks, StorageMode::Raw), bytes.len() as u64);
    }
}
