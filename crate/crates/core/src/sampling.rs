use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::mesh::{TriangleMesh, Vec3};

/// Draws `n` points uniformly by area from the mesh surface.
pub fn sample_surface(mesh: &TriangleMesh, n: usize, seed: u64) -> Result<Vec<Vec3>> {
    if mesh.is_empty() {
        return Err(Error::EmptyMesh);
    }
    let mut cdf = Vec::with_capacity(mesh.faces.len());
    let mut total = 0.0;
    for i in 0..mesh.faces.len() {
        total += mesh.face_area(i);
        cdf.push(total);
    }
    if total <= 0.0 {
        return Err(Error::EmptyMesh);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let x = rng.gen::<f64>() * total;
        let face = cdf.partition_point(|&c| c < x).min(cdf.len() - 1);
        let [a, b, c] = mesh.triangle(face);
        let (u, v): (f64, f64) = (rng.gen(), rng.gen());
        let su = u.sqrt();
        out.push(a * (1.0 - su) + b * (su * (1.0 - v)) + c * (su * v));
    }
    Ok(out)
}
