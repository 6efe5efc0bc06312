//! Slow, obviously-correct reference implementations used as oracles.

#![allow(dead_code)]

use spmap::mesh::{TriangleMesh, Vec3};

/// Every crossing of a ray with every triangle, sorted, with crossings
/// closer than `merge` folded together. Each entry is `(t, |cos|)`.
pub fn brute_force_hits(mesh: &TriangleMesh, origin: Vec3, dir: Vec3, merge: f64) -> Vec<(f64, f64)> {
    let dir = dir.normalize();
    let mut hits: Vec<(f64, f64)> = mesh
        .faces
        .iter()
        .filter_map(|f| {
            let [a, b, c] = f.map(|i| mesh.vertices[i as usize]);
            moller_trumbore(origin, dir, a, b, c)
        })
        .collect();
    hits.sort_by(|x, y| x.0.total_cmp(&y.0));
    let mut out: Vec<(f64, f64)> = Vec::new();
    for h in hits {
        if out.last().map_or(true, |p| h.0 - p.0 >= merge) {
            out.push(h);
        }
    }
    out
}

/// Textbook Möller–Trumbore with a small tolerance on the barycentric
/// bounds; returns `(t, |cos incidence|)` for `t > 1e-6`.
pub fn moller_trumbore(o: Vec3, d: Vec3, a: Vec3, b: Vec3, c: Vec3) -> Option<(f64, f64)> {
    const EPS: f64 = 1e-12;
    let e1 = b - a;
    let e2 = c - a;
    let h = d.cross(&e2);
    let det = e1.dot(&h);
    if det.abs() < 1e-15 {
        return None;
    }
    let f = 1.0 / det;
    let s = o - a;
    let u = f * s.dot(&h);
    if u < -EPS || u > 1.0 + EPS {
        return None;
    }
    let q = s.cross(&e1);
    let v = f * d.dot(&q);
    if v < -EPS || u + v > 1.0 + EPS {
        return None;
    }
    let t = f * e2.dot(&q);
    if t <= 1e-6 {
        return None;
    }
    let n = e1.cross(&e2).normalize();
    Some((t, n.dot(&d).abs()))
}

/// Winding number by direct summation of signed solid angles, using the
/// l'Huilier-free formula of the triple product over the angle sum.
pub fn exact_winding(mesh: &TriangleMesh, q: Vec3) -> f64 {
    let mut total = 0.0;
    for f in &mesh.faces {
        let [a, b, c] = f.map(|i| mesh.vertices[i as usize] - q);
        let (la, lb, lc) = (a.norm(), b.norm(), c.norm());
        let num = a.dot(&b.cross(&c));
        let den = la * lb * lc + a.dot(&b) * lc + b.dot(&c) * la + c.dot(&a) * lb;
        total += 2.0 * num.atan2(den);
    }
    total / (4.0 * std::f64::consts::PI)
}

/// Inside test by counting crossings along the three positive axis
/// directions and taking the majority of the three parities.
pub fn inside_by_axis_parity(mesh: &TriangleMesh, q: Vec3) -> bool {
    let votes = [Vec3::x(), Vec3::y(), Vec3::z()]
        .iter()
        .filter(|d| brute_force_hits(mesh, q, **d, 1e-9).len() % 2 == 1)
        .count();
    votes >= 2
}

/// Occupancy of all voxel centers of an `n^3` grid at `origin` with spacing
/// `step`, by scanline parity along x: each line through a row of centers
/// is intersected with every triangle once.
pub fn scanline_occupancy(mesh: &TriangleMesh, n: usize, origin: Vec3, step: f64) -> Vec<bool> {
    let mut out = vec![false; n * n * n];
    let start_x = origin.x - 1.0;
    for z in 0..n {
        for y in 0..n {
            let p = Vec3::new(start_x, origin.y + (y as f64 + 0.5) * step, origin.z + (z as f64 + 0.5) * step);
            let crossings: Vec<f64> = brute_force_hits(mesh, p, Vec3::x(), 1e-9).iter().map(|h| h.0 + start_x).collect();
            for x in 0..n {
                let cx = origin.x + (x as f64 + 0.5) * step;
                let beyond = crossings.iter().filter(|&&c| c > cx).count();
                out[(z * n + y) * n + x] = beyond % 2 == 1;
            }
        }
    }
    out
}

/// Distance from `p` to the closest point of triangle `abc`
/// (region-based closest-point construction).
pub fn point_triangle_distance(p: Vec3, a: Vec3, b: Vec3, c: Vec3) -> f64 {
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return (p - a).norm();
    }
    let bp = p - b;
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3 >= 0.0 && d4 <= d3 {
        return (p - b).norm();
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let v = d1 / (d1 - d3);
        return (p - (a + ab * v)).norm();
    }
    let cp = p - c;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= 0.0 && d5 <= d6 {
        return (p - c).norm();
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let w = d2 / (d2 - d6);
        return (p - (a + ac * w)).norm();
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return (p - (b + (c - b) * w)).norm();
    }
    let denom = 1.0 / (va + vb + vc);
    let v = vb * denom;
    let w = vc * denom;
    (p - (a + ab * v + ac * w)).norm()
}

pub fn point_mesh_distance(p: Vec3, mesh: &TriangleMesh) -> f64 {
    mesh.faces
        .iter()
        .map(|f| {
            let [a, b, c] = f.map(|i| mesh.vertices[i as usize]);
            point_triangle_distance(p, a, b, c)
        })
        .fold(f64::INFINITY, f64::min)
}

/// Uniform direction from two numbers in `[0, 1)`.
pub fn sphere_direction(u: f64, v: f64) -> Vec3 {
    let z = 2.0 * u - 1.0;
    let r = (1.0 - z * z).max(0.0).sqrt();
    let a = std::f64::consts::TAU * v;
    Vec3::new(r * a.cos(), r * a.sin(), z)
}
