//! Equirectangular grid, spherical mapping and the multi-layer depth map.
//!
//! Pixel `(r, c)` is sampled at its center: polar angle
//! `phi = (r + 0.5) * pi / H` and azimuth `theta = -pi/2 + (c + 0.5) * 2pi / W`.
//! Azimuth lives in `[-pi/2, 3pi/2)`, so column 0 and column `W - 1` meet at
//! the seam `theta = -pi/2`.

use std::f64::consts::{FRAC_PI_2, PI, TAU};
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::mesh::{Vec3, MAX_RADIUS};

pub const THETA_MIN: f64 = -FRAC_PI_2;
/// Depth stored for pixels without a hit.
pub const SENTINEL: f32 = -1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SphericalGrid {
    height: usize,
    width: usize,
}

impl SphericalGrid {
    pub fn new(height: usize, width: usize) -> Result<Self> {
        if height < 2 || width < 4 {
            return Err(Error::InvalidGrid(format!(
                "need H >= 2 and W >= 4, got {height}x{width}"
            )));
        }
        Ok(SphericalGrid { height, width })
    }

    /// `H x 2H` preset.
    pub fn with_height(height: usize) -> Result<Self> {
        SphericalGrid::new(height, 2 * height)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn pixel_count(&self) -> usize {
        self.height * self.width
    }

    pub fn d_theta(&self) -> f64 {
        TAU / self.width as f64
    }

    pub fn d_phi(&self) -> f64 {
        PI / self.height as f64
    }

    /// Angles `(theta, phi)` of a pixel center.
    pub fn pixel_to_angles(&self, r: usize, c: usize) -> Result<(f64, f64)> {
        if r >= self.height || c >= self.width {
            return Err(Error::OutOfRange {
                row: r,
                col: c,
                height: self.height,
                width: self.width,
            });
        }
        Ok(self.angles_unchecked(r, c))
    }

    #[inline]
    pub(crate) fn angles_unchecked(&self, r: usize, c: usize) -> (f64, f64) {
        let theta = THETA_MIN + (c as f64 + 0.5) * self.d_theta();
        let phi = (r as f64 + 0.5) * self.d_phi();
        (theta, phi)
    }

    /// Pixel containing the given direction. `theta` may be any real value;
    /// it is wrapped into the azimuth window first.
    pub fn angles_to_pixel(&self, theta: f64, phi: f64) -> (usize, usize) {
        let t = wrap_theta(theta) - THETA_MIN;
        let c = ((t / self.d_theta()) as usize).min(self.width - 1);
        let r = ((phi.max(0.0) / self.d_phi()) as usize).min(self.height - 1);
        (r, c)
    }

    /// Unit ray direction through a pixel center.
    pub fn direction(&self, r: usize, c: usize) -> Vec3 {
        let (theta, phi) = self.angles_unchecked(r, c);
        unit_direction(theta, phi)
    }
}

impl fmt::Display for SphericalGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.height, self.width)
    }
}

impl FromStr for SphericalGrid {
    type Err = Error;

    /// Parses `HxW`.
    fn from_str(s: &str) -> Result<Self> {
        let (h, w) = s
            .split_once(['x', 'X'])
            .ok_or_else(|| Error::InvalidGrid(format!("expected HxW, got {s:?}")))?;
        let parse = |v: &str| {
            v.trim()
                .parse::<usize>()
                .map_err(|_| Error::InvalidGrid(format!("bad dimension {v:?}")))
        };
        SphericalGrid::new(parse(h)?, parse(w)?)
    }
}

/// Wraps an azimuth into `[-pi/2, 3pi/2)`.
pub fn wrap_theta(theta: f64) -> f64 {
    let mut t = (theta - THETA_MIN).rem_euclid(TAU);
    if t >= TAU {
        t = 0.0;
    }
    t + THETA_MIN
}

#[inline]
fn unit_direction(theta: f64, phi: f64) -> Vec3 {
    let (st, ct) = theta.sin_cos();
    let (sp, cp) = phi.sin_cos();
    Vec3::new(sp * ct, sp * st, cp)
}

/// Point at distance `d` along the direction `(theta, phi)`.
pub fn unproject(theta: f64, phi: f64, d: f64) -> Result<Vec3> {
    if !(d > 0.0) {
        return Err(Error::NonPositiveDepth(d));
    }
    Ok(unit_direction(theta, phi) * d)
}

/// Spherical coordinates `(theta, phi, d)` of a point.
///
/// At the poles (`sin(phi) < 1e-12`) the azimuth is reported as 0.
pub fn project(p: &Vec3) -> Result<(f64, f64, f64)> {
    let d = p.norm();
    if d == 0.0 {
        return Err(Error::OriginPoint);
    }
    let rho = p.x.hypot(p.y);
    let phi = rho.atan2(p.z);
    let theta = if rho / d < 1e-12 {
        0.0
    } else {
        wrap_theta(p.y.atan2(p.x))
    };
    Ok((theta, phi, d))
}

/// Provenance carried alongside a map and stored in the file header.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SpMeta {
    /// Leading 8 bytes of the SHA-256 of the source mesh.
    pub source_hash: u64,
    pub encoder_version: u16,
    /// Hits dropped because a ray crossed the surface more than `k` times.
    pub truncation_count: u32,
}

/// `k` layers of `H x W` depths. Layer 0 holds the outermost hit.
#[derive(Debug, Clone, PartialEq)]
pub struct SpMap {
    grid: SphericalGrid,
    layers: usize,
    depth: Vec<f32>,
    valid: Vec<bool>,
    normals: Option<Vec<[f32; 3]>>,
    pub meta: SpMeta,
}

impl SpMap {
    pub fn empty(grid: SphericalGrid, layers: usize, with_normals: bool) -> SpMap {
        let n = layers * grid.pixel_count();
        SpMap {
            grid,
            layers,
            depth: vec![SENTINEL; n],
            valid: vec![false; n],
            normals: with_normals.then(|| vec![[0.0; 3]; n]),
            meta: SpMeta::default(),
        }
    }

    /// Assembles a map from raw buffers and checks every map invariant.
    pub fn from_parts(
        grid: SphericalGrid,
        layers: usize,
        depth: Vec<f32>,
        valid: Vec<bool>,
        normals: Option<Vec<[f32; 3]>>,
        meta: SpMeta,
    ) -> Result<SpMap> {
        let n = layers * grid.pixel_count();
        if layers == 0 || depth.len() != n || valid.len() != n || normals.as_ref().is_some_and(|v| v.len() != n) {
            return Err(Error::InvalidMap("buffer sizes disagree with grid".into()));
        }
        let map = SpMap {
            grid,
            layers,
            depth,
            valid,
            normals,
            meta,
        };
        map.check_invariants()?;
        Ok(map)
    }

    pub fn grid(&self) -> SphericalGrid {
        self.grid
    }

    pub fn layers(&self) -> usize {
        self.layers
    }

    pub fn has_normals(&self) -> bool {
        self.normals.is_some()
    }

    #[inline]
    pub fn index(&self, layer: usize, r: usize, c: usize) -> usize {
        (layer * self.grid.height + r) * self.grid.width + c
    }

    #[inline]
    pub fn depth(&self, layer: usize, r: usize, c: usize) -> Option<f32> {
        let i = self.index(layer, r, c);
        self.valid[i].then(|| self.depth[i])
    }

    pub fn normal(&self, layer: usize, r: usize, c: usize) -> Option<Vec3> {
        let i = self.index(layer, r, c);
        let n = self.normals.as_ref()?[i];
        self.valid[i]
            .then(|| Vec3::new(n[0] as f64, n[1] as f64, n[2] as f64))
    }

    /// Number of valid layers at a pixel.
    pub fn hit_count(&self, r: usize, c: usize) -> usize {
        (0..self.layers)
            .take_while(|&l| self.valid[self.index(l, r, c)])
            .count()
    }

    pub fn set(&mut self, layer: usize, r: usize, c: usize, depth: f32, normal: Option<Vec3>) {
        let i = self.index(layer, r, c);
        self.depth[i] = depth;
        self.valid[i] = true;
        if let (Some(buf), Some(n)) = (self.normals.as_mut(), normal) {
            buf[i] = [n.x as f32, n.y as f32, n.z as f32];
        }
    }

    pub fn clear(&mut self, layer: usize, r: usize, c: usize) {
        let i = self.index(layer, r, c);
        self.depth[i] = SENTINEL;
        self.valid[i] = false;
        if let Some(buf) = self.normals.as_mut() {
            buf[i] = [0.0; 3];
        }
    }

    pub fn depth_buffer(&self) -> &[f32] {
        &self.depth
    }

    pub fn valid_buffer(&self) -> &[bool] {
        &self.valid
    }

    pub fn normal_buffer(&self) -> Option<&[[f32; 3]]> {
        self.normals.as_deref()
    }

    /// Depths of one layer, row-major.
    pub fn layer_depths(&self, layer: usize) -> &[f32] {
        let n = self.grid.pixel_count();
        &self.depth[layer * n..(layer + 1) * n]
    }

    pub fn layer_valid(&self, layer: usize) -> &[bool] {
        let n = self.grid.pixel_count();
        &self.valid[layer * n..(layer + 1) * n]
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }

    /// Copy with every column shifted right by `shift` (cyclically).
    pub fn rotate_columns(&self, shift: usize) -> SpMap {
        let w = self.grid.width;
        let mut out = self.clone();
        for l in 0..self.layers {
            for r in 0..self.grid.height {
                for c in 0..w {
                    let src = self.index(l, r, c);
                    let dst = self.index(l, r, (c + shift) % w);
                    out.depth[dst] = self.depth[src];
                    out.valid[dst] = self.valid[src];
                    if let (Some(o), Some(s)) = (out.normals.as_mut(), self.normals.as_ref()) {
                        o[dst] = s[src];
                    }
                }
            }
        }
        out
    }

    /// Checks sentinel, front-packing, depth range and per-pixel ordering.
    pub fn check_invariants(&self) -> Result<()> {
        let limit = (MAX_RADIUS + 1e-6) as f32;
        for r in 0..self.grid.height {
            for c in 0..self.grid.width {
                let mut prev = f32::INFINITY;
                let mut ended = false;
                for l in 0..self.layers {
                    let i = self.index(l, r, c);
                    if !self.valid[i] {
                        if self.depth[i].to_bits() != SENTINEL.to_bits() {
                            return Err(Error::InvalidMap(format!("pixel ({r},{c}) layer {l}: invalid without sentinel")));
                        }
                        ended = true;
                        continue;
                    }
                    let d = self.depth[i];
                    if ended {
                        return Err(Error::InvalidMap(format!("pixel ({r},{c}): layer {l} valid after a gap")));
                    }
                    if !(d > 0.0 && d <= limit) {
                        return Err(Error::InvalidMap(format!("pixel ({r},{c}) layer {l}: depth {d} out of range")));
                    }
                    if d >= prev {
                        return Err(Error::InvalidMap(format!("pixel ({r},{c}): depths not decreasing")));
                    }
                    prev = d;
                }
            }
        }
        Ok(())
    }
}

/// Depth and validity layers with azimuth wrap and polar clamping applied.
#[derive(Debug, Clone, PartialEq)]
pub struct PaddedLayers {
    pub height: usize,
    pub width: usize,
    pub layers: usize,
    pub pad: usize,
    pub depth: Vec<f32>,
    pub valid: Vec<bool>,
}

impl PaddedLayers {
    #[inline]
    pub fn index(&self, layer: usize, r: usize, c: usize) -> usize {
        (layer * self.height + r) * self.width + c
    }
}

/// Pads every layer by `pad` pixels on each side: columns wrap around the
/// seam, rows repeat the pole rows.
pub fn circular_pad(map: &SpMap, pad: usize) -> Result<PaddedLayers> {
    let (h, w) = (map.grid.height, map.grid.width);
    if pad >= w {
        return Err(Error::PadTooLarge { pad, width: w });
    }
    let (ph, pw) = (h + 2 * pad, w + 2 * pad);
    let n = map.layers * ph * pw;
    let mut out = PaddedLayers {
        height: ph,
        width: pw,
        layers: map.layers,
        pad,
        depth: vec![SENTINEL; n],
        valid: vec![false; n],
    };
    for l in 0..map.layers {
        for pr in 0..ph {
            let r = (pr as isize - pad as isize).clamp(0, h as isize - 1) as usize;
            for pc in 0..pw {
                let c = (pc as isize - pad as isize).rem_euclid(w as isize) as usize;
                let src = map.index(l, r, c);
                let dst = out.index(l, pr, pc);
                out.depth[dst] = map.depth[src];
                out.valid[dst] = map.valid[src];
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn g() -> SphericalGrid {
        SphericalGrid::new(256, 512).unwrap()
    }

    #[test]
    fn pixel_center_formula() {
        let (t, p) = g().pixel_to_angles(127, 255).unwrap();
        assert_eq!(p, 127.5 * PI / 256.0);
        assert_eq!(t, -FRAC_PI_2 + 255.5 * TAU / 512.0);
        let (t, p) = g().pixel_to_angles(0, 0).unwrap();
        assert_eq!(p, 0.5 * PI / 256.0);
        assert!((t - (-FRAC_PI_2 + PI / 512.0)).abs() < 1e-15);
        assert!(matches!(g().pixel_to_angles(256, 0), Err(Error::OutOfRange { .. })));
    }

    #[test]
    fn angles_to_pixel_inverts_every_pixel() {
        let grid = g();
        for r in 0..256 {
            for c in 0..512 {
                let (t, p) = grid.pixel_to_angles(r, c).unwrap();
                assert_eq!(grid.angles_to_pixel(t, p), (r, c));
            }
        }
    }

    #[test]
    fn grid_rejects_tiny_sizes_and_parses() {
        assert!(SphericalGrid::new(1, 4).is_err());
        assert!(SphericalGrid::new(2, 3).is_err());
        assert_eq!("32x64".parse::<SphericalGrid>().unwrap(), SphericalGrid::new(32, 64).unwrap());
        assert!("32".parse::<SphericalGrid>().is_err());
    }

    #[test]
    fn unproject_known_points() {
        let p = unproject(0.0, FRAC_PI_2, 1.0).unwrap();
        assert!((p - Vec3::x()).norm() < 1e-15);
        let p = unproject(FRAC_PI_2, FRAC_PI_2, 0.5).unwrap();
        assert!((p - Vec3::new(0.0, 0.5, 0.0)).norm() < 1e-15);
        assert!(matches!(unproject(0.0, 1.0, 0.0), Err(Error::NonPositiveDepth(_))));
    }

    #[test]
    fn project_known_points() {
        let (t, p, d) = project(&Vec3::x()).unwrap();
        assert_eq!((t, p, d), (0.0, FRAC_PI_2, 1.0));
        let (t, p, d) = project(&Vec3::new(0.0, 0.0, 0.5)).unwrap();
        assert_eq!((t, p, d), (0.0, 0.0, 0.5));
        assert!(matches!(project(&Vec3::zeros()), Err(Error::OriginPoint)));
        // -x lies at theta = pi, inside the window
        let (t, _, _) = project(&Vec3::new(-1.0, 0.0, 0.0)).unwrap();
        assert!((t - PI).abs() < 1e-15);
        // just below the seam in -y wraps to the top of the window
        let (t, _, _) = project(&Vec3::new(-1e-3, -1.0, 0.0)).unwrap();
        assert!(t > PI && t < 1.5 * PI);
    }

    proptest! {
        #[test]
        fn project_inverts_unproject(t in -FRAC_PI_2..1.5 * PI, p in 0.01..PI - 0.01, d in 1e-3f64..2.0) {
            let (t2, p2, d2) = project(&unproject(t, p, d).unwrap()).unwrap();
            prop_assert!((t2 - t).abs() < 1e-9);
            prop_assert!((p2 - p).abs() < 1e-9);
            prop_assert!((d2 - d).abs() < 1e-9);
        }

        #[test]
        fn unproject_inverts_project(x in -1.0f64..1.0, y in -1.0f64..1.0, z in -1.0f64..1.0) {
            let v = Vec3::new(x, y, z);
            prop_assume!(v.norm() > 1e-3);
            let (t, p, d) = project(&v).unwrap();
            prop_assert!((unproject(t, p, d).unwrap() - v).norm() < 1e-9);
        }
    }

    fn sample_map() -> SpMap {
        let grid = SphericalGrid::new(8, 16).unwrap();
        let mut m = SpMap::empty(grid, 2, false);
        for r in 0..8 {
            for c in 0..16 {
                m.set(0, r, c, 0.1 + 0.01 * (r * 16 + c) as f32 / 128.0, None);
                if c % 3 == 0 {
                    m.set(1, r, c, 0.05, None);
                }
            }
        }
        m
    }

    #[test]
    fn pad_wraps_columns_and_clamps_rows() {
        let m = sample_map();
        let p = circular_pad(&m, 1).unwrap();
        assert_eq!((p.height, p.width), (10, 18));
        for l in 0..2 {
            for r in 0..8 {
                let src = m.index(l, r, 15);
                assert_eq!(p.depth[p.index(l, r + 1, 0)].to_bits(), m.depth_buffer()[src].to_bits());
                assert_eq!(p.valid[p.index(l, r + 1, 0)], m.valid_buffer()[src]);
            }
            // top padded row repeats row 0
            assert_eq!(p.depth[p.index(l, 0, 5)], m.depth_buffer()[m.index(l, 0, 4)]);
        }
        let id = circular_pad(&m, 0).unwrap();
        assert_eq!(id.depth, m.depth_buffer());
        assert!(matches!(circular_pad(&m, 16), Err(Error::PadTooLarge { .. })));
    }

    #[test]
    fn invariants_catch_gaps_and_order() {
        let grid = SphericalGrid::new(2, 4).unwrap();
        let mut m = SpMap::empty(grid, 2, false);
        m.set(1, 0, 0, 0.2, None);
        assert!(m.check_invariants().is_err());
        m.set(0, 0, 0, 0.1, None);
        assert!(m.check_invariants().is_err());
        m.set(0, 0, 0, 0.3, None);
        assert!(m.check_invariants().is_ok());
        assert_eq!(m.hit_count(0, 0), 2);
    }

    #[test]
    fn rotate_columns_wraps() {
        let m = sample_map();
        let r = m.rotate_columns(3);
        assert_eq!(r.depth(0, 2, 3), m.depth(0, 2, 0));
        assert_eq!(r.depth(0, 2, 1), m.depth(0, 2, 14));
        assert_eq!(m.rotate_columns(16), m);
    }
}
