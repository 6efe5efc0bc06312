//! Depth-map comparison scores: an edge-weighted L1 built on a dilated Sobel
//! mask, a high-pass spectral loss over phase and magnitude, and their
//! weighted sum with plain L1.
//!
//! All scores work on single layers. Invalid pixels take the value `-1`
//! wherever a dense image is needed, which makes silhouettes strong edges.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sphere::{SpMap, SENTINEL};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QualityWeights {
    /// Share of the edge term given to the edge region.
    pub mu: f64,
    /// Weight of the magnitude difference against the phase difference.
    pub zeta: f64,
    pub alpha: f64,
    pub beta: f64,
    /// High-pass cutoff as a fraction of `min(H, W) / 2`.
    pub highpass_radius_frac: f64,
    /// Sobel threshold as a fraction of the reference depth range.
    pub sobel_threshold_frac: f64,
    pub margin: usize,
}

impl Default for QualityWeights {
    fn default() -> Self {
        QualityWeights {
            mu: 0.8,
            zeta: 0.1,
            alpha: 1.0,
            beta: 0.1,
            highpass_radius_frac: 0.25,
            sobel_threshold_frac: 0.05,
            margin: 2,
        }
    }
}

impl QualityWeights {
    pub fn validate(&self) -> Result<()> {
        let ok = (0.0..=1.0).contains(&self.mu)
            && self.zeta >= 0.0
            && self.alpha >= 0.0
            && self.beta >= 0.0
            && self.highpass_radius_frac >= 0.0
            && self.sobel_threshold_frac >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid quality weights {self:?}")))
        }
    }
}

/// One dense layer: depths with invalid pixels at `-1`.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthLayer {
    pub height: usize,
    pub width: usize,
    pub values: Vec<f64>,
    pub valid: Vec<bool>,
}

impl DepthLayer {
    pub fn from_map(map: &SpMap, layer: usize) -> DepthLayer {
        let g = map.grid();
        DepthLayer {
            height: g.height(),
            width: g.width(),
            values: map.layer_depths(layer).iter().map(|&d| d as f64).collect(),
            valid: map.layer_valid(layer).to_vec(),
        }
    }

    /// Dense layer with every pixel valid.
    pub fn from_values(height: usize, width: usize, values: Vec<f64>) -> DepthLayer {
        assert_eq!(values.len(), height * width);
        DepthLayer {
            height,
            width,
            valid: vec![true; values.len()],
            values,
        }
    }

    fn same_shape(&self, other: &DepthLayer) -> Result<()> {
        if self.height != other.height || self.width != other.width {
            return Err(Error::GridMismatch(format!(
                "{}x{} vs {}x{}",
                self.height, self.width, other.height, other.width
            )));
        }
        Ok(())
    }

    fn dense(&self, i: usize) -> f64 {
        if self.valid[i] {
            self.values[i]
        } else {
            SENTINEL as f64
        }
    }

    /// Spread between the smallest and largest valid depth.
    pub fn depth_range(&self) -> f64 {
        let valid = self.values.iter().zip(&self.valid).filter(|(_, &v)| v).map(|(&d, _)| d);
        let (lo, hi) = valid.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), d| (lo.min(d), hi.max(d)));
        if hi >= lo {
            hi - lo
        } else {
            0.0
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EdgeMask {
    pub height: usize,
    pub width: usize,
    pub margin: usize,
    pub mask: Vec<bool>,
}

impl EdgeMask {
    pub fn get(&self, r: usize, c: usize) -> bool {
        self.mask[r * self.width + c]
    }

    pub fn count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }
}

/// Sobel gradient magnitude; columns wrap, rows clamp at the poles.
pub fn sobel_magnitude(layer: &DepthLayer) -> Vec<f64> {
    let (h, w) = (layer.height, layer.width);
    let at = |r: isize, c: isize| {
        let r = r.clamp(0, h as isize - 1) as usize;
        let c = c.rem_euclid(w as isize) as usize;
        layer.dense(r * w + c)
    };
    let mut out = vec![0.0; h * w];
    for r in 0..h as isize {
        for c in 0..w as isize {
            let gx = (at(r - 1, c + 1) + 2.0 * at(r, c + 1) + at(r + 1, c + 1))
                - (at(r - 1, c - 1) + 2.0 * at(r, c - 1) + at(r + 1, c - 1));
            let gy = (at(r + 1, c - 1) + 2.0 * at(r + 1, c) + at(r + 1, c + 1))
                - (at(r - 1, c - 1) + 2.0 * at(r - 1, c) + at(r - 1, c + 1));
            out[r as usize * w + c as usize] = gx.hypot(gy);
        }
    }
    out
}

/// Pixels whose Sobel magnitude exceeds `threshold`, dilated by a square of
/// half-width `margin` (wrapping in azimuth).
pub fn edge_mask(layer: &DepthLayer, margin: usize, threshold: f64) -> EdgeMask {
    let (h, w) = (layer.height, layer.width);
    let mag = sobel_magnitude(layer);
    let seed: Vec<bool> = mag.iter().map(|&m| m > threshold).collect();
    let m = margin as isize;
    // separable dilation: along columns, then along rows
    let mut horiz = vec![false; h * w];
    for r in 0..h {
        for c in 0..w {
            horiz[r * w + c] = (-m..=m).any(|dc| seed[r * w + (c as isize + dc).rem_euclid(w as isize) as usize]);
        }
    }
    let mut mask = vec![false; h * w];
    for r in 0..h {
        for c in 0..w {
            let lo = r.saturating_sub(margin);
            let hi = (r + margin).min(h - 1);
            mask[r * w + c] = (lo..=hi).any(|rr| horiz[rr * w + c]);
        }
    }
    EdgeMask {
        height: h,
        width: w,
        margin,
        mask,
    }
}

/// Edge mask of a reference layer with the threshold taken relative to its
/// depth range.
pub fn reference_mask(reference: &DepthLayer, weights: &QualityWeights) -> EdgeMask {
    edge_mask(reference, weights.margin, weights.sobel_threshold_frac * reference.depth_range())
}

/// Mean absolute difference over pixels valid in both layers; 0 when there
/// are none.
pub fn plain_l1(cand: &DepthLayer, reference: &DepthLayer) -> Result<f64> {
    cand.same_shape(reference)?;
    let (mut sum, mut n) = (0.0, 0usize);
    for i in 0..cand.values.len() {
        if cand.valid[i] && reference.valid[i] {
            sum += (cand.values[i] - reference.values[i]).abs();
            n += 1;
        }
    }
    Ok(if n == 0 { 0.0 } else { sum / n as f64 })
}

/// `mu` times the mean error inside the mask plus `1 - mu` times the mean
/// error outside it, both over co-valid pixels. An empty region adds 0.
pub fn edge_weighted_l1(cand: &DepthLayer, reference: &DepthLayer, mask: &EdgeMask, mu: f64) -> Result<f64> {
    cand.same_shape(reference)?;
    if mask.height != cand.height || mask.width != cand.width {
        return Err(Error::GridMismatch("edge mask shape differs from layers".into()));
    }
    let (mut s_in, mut n_in, mut s_out, mut n_out) = (0.0, 0usize, 0.0, 0usize);
    for i in 0..cand.values.len() {
        if !(cand.valid[i] && reference.valid[i]) {
            continue;
        }
        let e = (cand.values[i] - reference.values[i]).abs();
        if mask.mask[i] {
            s_in += e;
            n_in += 1;
        } else {
            s_out += e;
            n_out += 1;
        }
    }
    let mean = |s: f64, n: usize| if n == 0 { 0.0 } else { s / n as f64 };
    Ok(mu * mean(s_in, n_in) + (1.0 - mu) * mean(s_out, n_out))
}

/// Orthonormal 2-D DFT, row-major, unshifted.
pub fn fft2(height: usize, width: usize, data: &[f64]) -> Vec<Complex<f64>> {
    let mut planner = FftPlanner::<f64>::new();
    let mut buf: Vec<Complex<f64>> = data.iter().map(|&v| Complex::new(v, 0.0)).collect();
    let row_fft = planner.plan_fft_forward(width);
    for row in buf.chunks_mut(width) {
        row_fft.process(row);
    }
    let col_fft = planner.plan_fft_forward(height);
    let mut col = vec![Complex::new(0.0, 0.0); height];
    for c in 0..width {
        for r in 0..height {
            col[r] = buf[r * width + c];
        }
        col_fft.process(&mut col);
        for r in 0..height {
            buf[r * width + c] = col[r];
        }
    }
    let scale = 1.0 / ((height * width) as f64).sqrt();
    buf.iter_mut().for_each(|v| *v *= scale);
    buf
}

/// Signed frequency of DFT bin `i` out of `n`, i.e. its offset from the
/// center after an fftshift.
fn signed_freq(i: usize, n: usize) -> f64 {
    let shifted = (i + n / 2) % n;
    shifted as f64 - (n / 2) as f64
}

/// Bins passed by the high-pass filter: farther than
/// `frac * min(H, W) / 2` from the centered spectrum's origin.
pub fn highpass_mask(height: usize, width: usize, frac: f64) -> Vec<bool> {
    let radius = frac * height.min(width) as f64 / 2.0;
    let mut out = Vec::with_capacity(height * width);
    for r in 0..height {
        for c in 0..width {
            out.push(signed_freq(r, height).hypot(signed_freq(c, width)) > radius);
        }
    }
    out
}

/// Mean over high-pass bins of the wrapped phase difference plus `zeta`
/// times the modulus difference.
pub fn spectral_loss(cand: &DepthLayer, reference: &DepthLayer, weights: &QualityWeights) -> Result<f64> {
    cand.same_shape(reference)?;
    let (h, w) = (cand.height, cand.width);
    let dense = |l: &DepthLayer| (0..h * w).map(|i| l.dense(i)).collect::<Vec<_>>();
    let a = fft2(h, w, &dense(cand));
    let b = fft2(h, w, &dense(reference));
    let pass = highpass_mask(h, w, weights.highpass_radius_frac);
    let peak = a.iter().chain(&b).map(|z| z.norm()).fold(0.0, f64::max);
    // below this modulus a bin's phase is rounding noise
    let floor = 1e-9 * peak;
    let (mut sum, mut n) = (0.0, 0usize);
    for i in (0..h * w).filter(|&i| pass[i]) {
        let (ma, mb) = (a[i].norm(), b[i].norm());
        let phase = if ma > floor && mb > floor {
            (a[i] * b[i].conj()).arg().abs()
        } else {
            0.0
        };
        sum += phase + weights.zeta * (ma - mb).abs();
        n += 1;
    }
    Ok(if n == 0 { 0.0 } else { sum / n as f64 })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QualityScores {
    pub l1: f64,
    pub l_edge: f64,
    pub l_spec: f64,
    pub l_total: f64,
}

/// Layer-averaged `l1 + alpha * l_edge + beta * l_spec`, with each edge mask
/// taken from the reference layer.
pub fn combined_quality(cand: &SpMap, reference: &SpMap, weights: &QualityWeights) -> Result<QualityScores> {
    weights.validate()?;
    if cand.grid() != reference.grid() || cand.layers() != reference.layers() {
        return Err(Error::GridMismatch(format!(
            "{} with {} layers vs {} with {} layers",
            cand.grid(),
            cand.layers(),
            reference.grid(),
            reference.layers()
        )));
    }
    let k = cand.layers();
    let (mut l1, mut edge, mut spec) = (0.0, 0.0, 0.0);
    for l in 0..k {
        let c = DepthLayer::from_map(cand, l);
        let r = DepthLayer::from_map(reference, l);
        let mask = reference_mask(&r, weights);
        l1 += plain_l1(&c, &r)?;
        edge += edge_weighted_l1(&c, &r, &mask, weights.mu)?;
        spec += spectral_loss(&c, &r, weights)?;
    }
    let (l1, l_edge, l_spec) = (l1 / k as f64, edge / k as f64, spec / k as f64);
    Ok(QualityScores {
        l1,
        l_edge,
        l_spec,
        l_total: l1 + weights.alpha * l_edge + weights.beta * l_spec,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn step(h: usize, w: usize, at: usize) -> DepthLayer {
        let v = (0..h * w).map(|i| if i % w >= at { 0.4 } else { 0.2 }).collect();
        DepthLayer::from_values(h, w, v)
    }

    fn rotate(l: &DepthLayer, s: usize) -> DepthLayer {
        let mut out = l.clone();
        for r in 0..l.height {
            for c in 0..l.width {
                out.values[r * l.width + (c + s) % l.width] = l.values[r * l.width + c];
                out.valid[r * l.width + (c + s) % l.width] = l.valid[r * l.width + c];
            }
        }
        out
    }

    #[test]
    fn constant_layer_has_no_edges() {
        let l = DepthLayer::from_values(8, 16, vec![0.3; 128]);
        assert_eq!(edge_mask(&l, 2, 0.0).count(), 0);
    }

    #[test]
    fn step_mask_band() {
        // steps at column 10 and, through the wrap, at column 0
        let l = step(8, 32, 10);
        let m = edge_mask(&l, 2, 0.01);
        let cols: Vec<usize> = (0..32).filter(|&c| m.get(4, c)).collect();
        let mut expect: Vec<usize> = (7..=12).collect();
        expect.extend([0, 1, 2, 29, 30, 31]);
        expect.sort();
        assert_eq!(cols, expect);
        assert!((0..8).all(|r| (0..32).all(|c| m.get(r, c) == m.get(0, c))));
    }

    #[test]
    fn mask_commutes_with_rotation() {
        let l = step(8, 32, 10);
        for s in [1, 5, 31] {
            let a = edge_mask(&rotate(&l, s), 2, 0.01);
            let b = edge_mask(&l, 2, 0.01);
            let rb = rotate(
                &DepthLayer::from_values(8, 32, b.mask.iter().map(|&v| v as u8 as f64).collect()),
                s,
            );
            assert_eq!(a.mask, rb.values.iter().map(|&v| v == 1.0).collect::<Vec<_>>());
        }
    }

    #[test]
    fn edge_l1_properties() {
        let r = step(8, 32, 10);
        let m = edge_mask(&r, 1, 0.01);
        assert_eq!(edge_weighted_l1(&r, &r, &m, 0.8).unwrap(), 0.0);
        let mut c = r.clone();
        for i in 0..c.values.len() {
            if m.mask[i] {
                c.values[i] += 0.05;
            }
        }
        let hi = edge_weighted_l1(&c, &r, &m, 0.9).unwrap();
        let mid = edge_weighted_l1(&c, &r, &m, 0.5).unwrap();
        assert!(hi > mid);
        assert!((mid - 0.5 * 0.05).abs() < 1e-12);
    }

    #[test]
    fn spectral_examples() {
        let w = QualityWeights::default();
        let r = step(16, 32, 10);
        assert_eq!(spectral_loss(&r, &r, &w).unwrap(), 0.0);
        let shifted = DepthLayer::from_values(16, 32, r.values.iter().map(|v| v + 0.07).collect());
        assert!(spectral_loss(&shifted, &r, &w).unwrap() < 1e-12);
        let mut last = 0.0;
        for a in [0.01, 0.02, 0.04] {
            let checker = DepthLayer::from_values(
                16,
                32,
                r.values
                    .iter()
                    .enumerate()
                    .map(|(i, v)| v + if (i / 32 + i % 32) % 2 == 0 { a } else { -a })
                    .collect(),
            );
            let s = spectral_loss(&checker, &r, &w).unwrap();
            assert!(s > last, "{a}: {s} <= {last}");
            last = s;
        }
    }

    #[test]
    fn cosine_energy_in_two_bins() {
        let (h, w) = (16, 32);
        let v: Vec<f64> = (0..h * w)
            .map(|i| (std::f64::consts::TAU * (3.0 * (i % w) as f64 / w as f64 + 2.0 * (i / w) as f64 / h as f64)).cos())
            .collect();
        let s = fft2(h, w, &v);
        let total: f64 = s.iter().map(|z| z.norm_sqr()).sum();
        let peak = s[2 * w + 3].norm_sqr() + s[(h - 2) * w + (w - 3)].norm_sqr();
        assert!(peak / total > 0.99);
        // orthonormal scaling preserves energy
        assert!((total - v.iter().map(|x| x * x).sum::<f64>()).abs() < 1e-9);
    }

    #[test]
    fn mismatched_shapes() {
        let a = step(8, 16, 3);
        let b = step(8, 32, 3);
        assert!(matches!(plain_l1(&a, &b), Err(Error::GridMismatch(_))));
        assert!(matches!(spectral_loss(&a, &b, &QualityWeights::default()), Err(Error::GridMismatch(_))));
    }
}
