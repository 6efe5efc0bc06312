//! Edge-weighted and spectral comparison of a map against noisy copies.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand::Rng;

use spmap::encode::{encode, EncodeConfig};
use spmap::quality::{combined_quality, reference_mask, DepthLayer, QualityWeights};
use spmap::sphere::SphericalGrid;

fn main() -> spmap::Result<()> {
    let mesh = spmap::fixtures::fixture("box_with_hole").unwrap().mesh;
    let reference = encode(&mesh, &EncodeConfig::new(SphericalGrid::new(64, 128)?, 2))?;
    let weights = QualityWeights::default();
    let mask = reference_mask(&DepthLayer::from_map(&reference, 0), &weights);
    println!("edge band covers {} of {} pixels in layer 0", mask.count(), 64 * 128);

    for sigma in [0.0, 0.005, 0.01, 0.02, 0.04] {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut noisy = reference.clone();
        for l in 0..reference.layers() {
            for r in 0..64 {
                for c in 0..128 {
                    if let Some(d) = reference.depth(l, r, c) {
                        let jitter: f64 = rng.gen_range(-1.0..1.0) * sigma;
                        noisy.set(l, r, c, (d as f64 + jitter).max(1e-3) as f32, None);
                    }
                }
            }
        }
        let s = combined_quality(&noisy, &reference, &weights)?;
        println!("noise {sigma:<6} l1 {:.5}  edge {:.5}  spectral {:.5}  total {:.5}", s.l1, s.l_edge, s.l_spec, s.l_total);
    }
    Ok(())
}
