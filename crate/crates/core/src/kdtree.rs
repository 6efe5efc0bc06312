//! Static 3-d tree for exact nearest-neighbor queries.

use crate::mesh::Vec3;

const LEAF: usize = 8;

#[derive(Debug, Clone)]
pub struct KdTree {
    points: Vec<Vec3>,
    ids: Vec<u32>,
    // split axis of the subtree whose median sits at this position
    axis: Vec<u8>,
}

impl KdTree {
    pub fn build(points: &[Vec3]) -> KdTree {
        let mut ids: Vec<u32> = (0..points.len() as u32).collect();
        let mut axis = vec![0u8; points.len()];
        split(points, &mut ids, 0, &mut axis);
        KdTree {
            points: ids.iter().map(|&i| points[i as usize]).collect(),
            ids,
            axis,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Index (into the build slice) and distance of the closest point.
    pub fn nearest(&self, q: &Vec3) -> Option<(usize, f64)> {
        if self.points.is_empty() {
            return None;
        }
        let mut best = (usize::MAX, f64::INFINITY);
        self.search(0, self.points.len(), q, &mut best);
        Some((self.ids[best.0] as usize, best.1.sqrt()))
    }

    fn search(&self, lo: usize, hi: usize, q: &Vec3, best: &mut (usize, f64)) {
        if hi - lo <= LEAF {
            for i in lo..hi {
                consider(i, (self.points[i] - q).norm_squared(), best);
            }
            return;
        }
        let mid = (lo + hi) / 2;
        let a = self.axis[mid] as usize;
        consider(mid, (self.points[mid] - q).norm_squared(), best);
        let diff = q[a] - self.points[mid][a];
        let (near, far) = if diff < 0.0 {
            ((lo, mid), (mid + 1, hi))
        } else {
            ((mid + 1, hi), (lo, mid))
        };
        self.search(near.0, near.1, q, best);
        if diff * diff <= best.1 {
            self.search(far.0, far.1, q, best);
        }
    }
}

#[inline]
fn consider(i: usize, d2: f64, best: &mut (usize, f64)) {
    if d2 < best.1 || (d2 == best.1 && i < best.0) {
        *best = (i, d2);
    }
}

fn split(points: &[Vec3], ids: &mut [u32], offset: usize, axis: &mut [u8]) {
    if ids.len() <= LEAF {
        return;
    }
    let mut lo = Vec3::repeat(f64::INFINITY);
    let mut hi = Vec3::repeat(f64::NEG_INFINITY);
    for &i in ids.iter() {
        lo = lo.inf(&points[i as usize]);
        hi = hi.sup(&points[i as usize]);
    }
    let a = (hi - lo).imax();
    let mid = ids.len() / 2;
    ids.select_nth_unstable_by(mid, |&x, &y| {
        points[x as usize][a]
            .total_cmp(&points[y as usize][a])
            .then(x.cmp(&y))
    });
    axis[offset + mid] = a as u8;
    let (left, right) = ids.split_at_mut(mid);
    split(points, left, offset, axis);
    split(points, &mut right[1..], offset + mid + 1, axis);
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn matches_exhaustive_search() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let pts: Vec<Vec3> = (0..1000)
            .map(|_| Vec3::new(rng.gen(), rng.gen(), rng.gen()))
            .collect();
        let tree = KdTree::build(&pts);
        for _ in 0..1000 {
            let q = Vec3::new(rng.gen_range(-0.2..1.2), rng.gen(), rng.gen());
            let brute = pts.iter().map(|p| (p - q).norm()).fold(f64::INFINITY, f64::min);
            let (i, d) = tree.nearest(&q).unwrap();
            assert_eq!(d, brute);
            assert_eq!((pts[i] - q).norm(), brute);
        }
    }

    #[test]
    fn empty_tree() {
        assert!(KdTree::build(&[]).nearest(&Vec3::zeros()).is_none());
    }
}
