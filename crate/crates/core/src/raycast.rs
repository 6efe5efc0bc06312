//! All-hits ray casting against triangle meshes.
//!
//! Rays report every crossing with the surface, not just the nearest one.
//! Crossings whose incidence is close to tangential are rejected because
//! their depth is numerically unstable; [`intersect_all_with_retry`] recasts
//! such rays along a slightly perturbed direction.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::mesh::{Aabb, TriangleMesh, Vec3};

/// Hits at or below this distance are ignored.
pub const T_MIN: f64 = 1e-6;
/// Hits closer than this in `t` collapse into one.
pub const MERGE_EPS: f64 = 1e-6;
pub const DEFAULT_PARALLEL_COS: f64 = 1e-4;
pub const DEFAULT_PERTURB_SIGMA: f64 = 1e-5;

const MAX_LEAF: usize = 8;
// tolerance on barycentric bounds so rays through shared edges are not lost
const BARY_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ray {
    pub origin: Vec3,
    pub direction: Vec3,
}

impl Ray {
    /// Ray with a normalized direction.
    pub fn new(origin: Vec3, direction: Vec3) -> Ray {
        Ray {
            origin,
            direction: direction.normalize(),
        }
    }

    pub fn from_origin(direction: Vec3) -> Ray {
        Ray::new(Vec3::zeros(), direction)
    }

    pub fn at(&self, t: f64) -> Vec3 {
        self.origin + self.direction * t
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hit {
    pub t: f64,
    pub face_id: u32,
    /// Geometric face normal (right-hand rule), not oriented to the ray.
    pub normal: Vec3,
    /// `|dot(direction, normal)|`.
    pub cos_incidence: f64,
}

/// Sorted, deduplicated crossings of one ray.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct HitList {
    pub hits: Vec<Hit>,
    /// Crossings dropped by the near-parallel test.
    pub parallel_rejections: u32,
    /// The hits come from a perturbed recast.
    pub retried: bool,
}

impl HitList {
    pub fn len(&self) -> usize {
        self.hits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hits.is_empty()
    }

    /// Sorts by `t` (ties by face id) and merges hits within [`MERGE_EPS`].
    fn finish(mut self) -> HitList {
        self.hits
            .sort_by(|a, b| a.t.total_cmp(&b.t).then(a.face_id.cmp(&b.face_id)));
        let mut merged: Vec<Hit> = Vec::with_capacity(self.hits.len());
        for h in self.hits {
            match merged.last() {
                Some(prev) if h.t - prev.t < MERGE_EPS => {}
                _ => merged.push(h),
            }
        }
        HitList {
            hits: merged,
            ..self
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TriangleHit {
    Hit { t: f64, normal: Vec3, cos_incidence: f64 },
    /// The ray crosses the triangle but too close to tangency.
    Parallel,
}

/// Möller–Trumbore test with near-parallel classification.
///
/// Returns `None` when the ray misses or the crossing lies at `t <= T_MIN`.
pub fn intersect_triangle(ray: &Ray, tri: &[Vec3; 3], parallel_cos: f64) -> Option<TriangleHit> {
    let [a, b, c] = *tri;
    let e1 = b - a;
    let e2 = c - a;
    let cross = e1.cross(&e2);
    let area2 = cross.norm();
    if area2 == 0.0 {
        return None;
    }
    let p = ray.direction.cross(&e2);
    let det = e1.dot(&p);
    let cos = det.abs() / area2;

    if det.abs() <= area2 * 1e-13 {
        // direction lies in the triangle plane
        return coplanar_crossing(ray, tri, &(cross / area2)).then_some(TriangleHit::Parallel);
    }

    let inv = 1.0 / det;
    let s = ray.origin - a;
    let u = s.dot(&p) * inv;
    if !(-BARY_EPS..=1.0 + BARY_EPS).contains(&u) {
        return None;
    }
    let q = s.cross(&e1);
    let v = ray.direction.dot(&q) * inv;
    if v < -BARY_EPS || u + v > 1.0 + BARY_EPS {
        return None;
    }
    let t = e2.dot(&q) * inv;
    if t <= T_MIN {
        return None;
    }
    if cos < parallel_cos {
        return Some(TriangleHit::Parallel);
    }
    Some(TriangleHit::Hit {
        t,
        normal: cross / area2,
        cos_incidence: cos.min(1.0),
    })
}

/// Whether a ray lying in the triangle's plane passes through the triangle.
fn coplanar_crossing(ray: &Ray, tri: &[Vec3; 3], n: &Vec3) -> bool {
    if (ray.origin - tri[0]).dot(n).abs() > 1e-9 {
        return false;
    }
    // drop the dominant normal axis
    let k = n.iamax();
    let (i, j) = ((k + 1) % 3, (k + 2) % 3);
    let p2 = |v: &Vec3| (v[i], v[j]);
    let o = p2(&ray.origin);
    let d = (ray.direction[i], ray.direction[j]);
    let t2: Vec<(f64, f64)> = tri.iter().map(p2).collect();
    let cross2 = |a: (f64, f64), b: (f64, f64)| a.0 * b.1 - a.1 * b.0;
    for e in 0..3 {
        let a = t2[e];
        let b = t2[(e + 1) % 3];
        let seg = (b.0 - a.0, b.1 - a.1);
        let denom = cross2(d, seg);
        if denom.abs() < 1e-300 {
            continue;
        }
        let ao = (a.0 - o.0, a.1 - o.1);
        let t = cross2(ao, seg) / denom;
        let s = cross2(ao, d) / denom;
        if t > T_MIN && (0.0..=1.0).contains(&s) {
            return true;
        }
    }
    false
}

#[derive(Debug, Clone)]
struct BvhNode {
    bounds: Aabb,
    // leaf: range into `order`; inner: children indices
    start: u32,
    count: u32,
    left: u32,
    right: u32,
}

/// Bounding-volume hierarchy over the faces of one mesh.
#[derive(Debug, Clone)]
pub struct Bvh {
    nodes: Vec<BvhNode>,
    order: Vec<u32>,
}

impl Bvh {
    /// Median split on the longest node axis; leaves hold at most 8 faces.
    pub fn build(mesh: &TriangleMesh) -> Result<Bvh> {
        if mesh.is_empty() {
            return Err(Error::EmptyMesh);
        }
        let boxes: Vec<Aabb> = (0..mesh.faces.len())
            .map(|i| Aabb::from_points(mesh.triangle(i).iter()))
            .collect();
        let centroids: Vec<Vec3> = boxes.iter().map(|b| b.center()).collect();
        let mut order: Vec<u32> = (0..mesh.faces.len() as u32).collect();
        let mut nodes = Vec::with_capacity(2 * mesh.faces.len() / MAX_LEAF + 1);
        build_node(&mut nodes, &mut order, 0, &boxes, &centroids);
        Ok(Bvh { nodes, order })
    }

    pub fn root_bounds(&self) -> Aabb {
        self.nodes[0].bounds
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[BvhNode], i: usize) -> usize {
            let n = &nodes[i];
            if n.count > 0 {
                1
            } else {
                1 + walk(nodes, n.left as usize).max(walk(nodes, n.right as usize))
            }
        }
        walk(&self.nodes, 0)
    }

    /// Face lists of all leaves, in traversal order.
    pub fn leaves(&self) -> Vec<&[u32]> {
        self.nodes
            .iter()
            .filter(|n| n.count > 0)
            .map(|n| &self.order[n.start as usize..(n.start + n.count) as usize])
            .collect()
    }

    /// Every inner node box encloses both child boxes.
    pub fn is_nested(&self) -> bool {
        self.nodes.iter().all(|n| {
            n.count > 0
                || (n.bounds.encloses(&self.nodes[n.left as usize].bounds)
                    && n.bounds.encloses(&self.nodes[n.right as usize].bounds))
        })
    }

    /// Visits every face whose leaf box the ray may touch within `[0, t_max]`.
    pub fn traverse(&self, ray: &Ray, t_max: f64, mut visit: impl FnMut(u32)) {
        let inv = Vec3::new(1.0 / ray.direction.x, 1.0 / ray.direction.y, 1.0 / ray.direction.z);
        let mut stack: Vec<u32> = Vec::with_capacity(64);
        stack.push(0);
        while let Some(i) = stack.pop() {
            let node = &self.nodes[i as usize];
            if !slab_test(&node.bounds, ray, &inv, t_max) {
                continue;
            }
            if node.count > 0 {
                for &f in &self.order[node.start as usize..(node.start + node.count) as usize] {
                    visit(f);
                }
            } else {
                stack.push(node.right);
                stack.push(node.left);
            }
        }
    }
}

fn build_node(
    nodes: &mut Vec<BvhNode>,
    order: &mut [u32],
    offset: usize,
    boxes: &[Aabb],
    centroids: &[Vec3],
) -> u32 {
    let bounds = order
        .iter()
        .fold(Aabb::empty(), |acc, &f| acc.union(&boxes[f as usize]));
    let index = nodes.len() as u32;
    nodes.push(BvhNode {
        bounds,
        start: offset as u32,
        count: order.len() as u32,
        left: 0,
        right: 0,
    });
    if order.len() <= MAX_LEAF {
        return index;
    }
    let axis = bounds.longest_axis();
    let mid = order.len() / 2;
    order.select_nth_unstable_by(mid, |&a, &b| {
        centroids[a as usize][axis]
            .total_cmp(&centroids[b as usize][axis])
            .then(a.cmp(&b))
    });
    let (lo, hi) = order.split_at_mut(mid);
    let left = build_node(nodes, lo, offset, boxes, centroids);
    let right = build_node(nodes, hi, offset + mid, boxes, centroids);
    let node = &mut nodes[index as usize];
    node.count = 0;
    node.left = left;
    node.right = right;
    index
}

#[inline]
fn slab_test(b: &Aabb, ray: &Ray, inv: &Vec3, t_max: f64) -> bool {
    let mut t0 = 0.0f64;
    let mut t1 = t_max;
    for i in 0..3 {
        let mut ta = (b.min[i] - ray.origin[i]) * inv[i];
        let mut tb = (b.max[i] - ray.origin[i]) * inv[i];
        if ta > tb {
            std::mem::swap(&mut ta, &mut tb);
        }
        // NaN (origin on a slab with zero direction) leaves the bound unchanged
        t0 = t0.max(ta);
        t1 = t1.min(tb * (1.0 + 1e-12));
        if t1 < t0 {
            return false;
        }
    }
    true
}

/// All crossings of `ray` with the mesh, sorted by distance.
pub fn intersect_all(bvh: &Bvh, mesh: &TriangleMesh, ray: &Ray, parallel_cos: f64) -> HitList {
    let mut out = HitList::default();
    bvh.traverse(ray, f64::INFINITY, |f| {
        match intersect_triangle(ray, &mesh.triangle(f as usize), parallel_cos) {
            Some(TriangleHit::Hit {
                t,
                normal,
                cos_incidence,
            }) => out.hits.push(Hit {
                t,
                face_id: f,
                normal,
                cos_incidence,
            }),
            Some(TriangleHit::Parallel) => out.parallel_rejections += 1,
            None => {}
        }
    });
    out.finish()
}

/// Like [`intersect_all`], but a ray that lost a crossing to the
/// near-parallel test is recast once along a direction tilted by
/// `perturb_sigma` radians. The tilt is drawn from a generator seeded by
/// `seed`, so results are reproducible per ray.
pub fn intersect_all_with_retry(
    bvh: &Bvh,
    mesh: &TriangleMesh,
    ray: &Ray,
    parallel_cos: f64,
    perturb_sigma: f64,
    seed: u64,
) -> HitList {
    let first = intersect_all(bvh, mesh, ray, parallel_cos);
    if first.parallel_rejections == 0 {
        return first;
    }
    let retry = perturbed(ray, perturb_sigma, seed);
    HitList {
        retried: true,
        ..intersect_all(bvh, mesh, &retry, parallel_cos)
    }
}

/// Tilts a ray direction by `sigma` radians along a seeded random tangent.
pub fn perturbed(ray: &Ray, sigma: f64, seed: u64) -> Ray {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = ray.direction;
    let helper = if d.x.abs() < 0.9 { Vec3::x() } else { Vec3::y() };
    let u = d.cross(&helper).normalize();
    let v = d.cross(&u);
    let angle: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
    let tangent = u * angle.cos() + v * angle.sin();
    Ray::new(ray.origin, d + tangent * sigma.tan())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    #[test]
    fn single_triangle_bvh_is_one_leaf() {
        let m = TriangleMesh::new(vec![Vec3::zeros(), Vec3::x(), Vec3::y()], vec![[0, 1, 2]]).unwrap();
        let bvh = Bvh::build(&m).unwrap();
        assert_eq!(bvh.leaves().len(), 1);
        assert_eq!(bvh.depth(), 1);
    }

    #[test]
    fn empty_mesh_has_no_bvh() {
        let m = TriangleMesh::new(vec![], vec![]).unwrap();
        assert!(matches!(Bvh::build(&m), Err(Error::EmptyMesh)));
    }

    #[test]
    fn root_box_matches_mesh_box() {
        let m = fixtures::icosphere(0.4, 3);
        let bvh = Bvh::build(&m).unwrap();
        let (a, b) = (bvh.root_bounds(), m.aabb());
        assert!((a.min - b.min).norm() < 1e-9 && (a.max - b.max).norm() < 1e-9);
        assert!(bvh.is_nested());
        let mut seen: Vec<u32> = bvh.leaves().concat();
        seen.sort_unstable();
        assert_eq!(seen, (0..1280).collect::<Vec<u32>>());
        assert!(bvh.leaves().iter().all(|l| l.len() <= 8));
    }

    #[test]
    fn ray_from_center_of_sphere() {
        let m = fixtures::icosphere(0.4, 4);
        let bvh = Bvh::build(&m).unwrap();
        let h = intersect_all(&bvh, &m, &Ray::from_origin(Vec3::x()), DEFAULT_PARALLEL_COS);
        assert_eq!(h.len(), 1);
        assert!((h.hits[0].t - 0.4).abs() < 2e-3);
    }

    #[test]
    fn nested_shells_give_two_ordered_hits() {
        let m = fixtures::nested_shells(0.4, 0.2, 4);
        let bvh = Bvh::build(&m).unwrap();
        let h = intersect_all(&bvh, &m, &Ray::from_origin(Vec3::x()), DEFAULT_PARALLEL_COS);
        assert_eq!(h.len(), 2);
        assert!((h.hits[0].t - 0.2).abs() < 1e-3);
        assert!((h.hits[1].t - 0.4).abs() < 2e-3);
    }

    #[test]
    fn ray_through_shared_vertex_counts_once() {
        let m = fixtures::box_mesh(Vec3::repeat(-0.5), Vec3::repeat(0.5));
        let bvh = Bvh::build(&m).unwrap();
        let h = intersect_all(&bvh, &m, &Ray::from_origin(Vec3::repeat(1.0)), DEFAULT_PARALLEL_COS);
        assert_eq!(h.len(), 1);
        assert!((h.hits[0].t - 0.75f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn edge_on_ray_is_rejected_then_retried() {
        let m = fixtures::half_ball(0.4, 16);
        let bvh = Bvh::build(&m).unwrap();
        // lies exactly in the base disk plane z = 0
        let ray = Ray::from_origin(Vec3::new(1.0, 0.3, 0.0));
        let first = intersect_all(&bvh, &m, &ray, DEFAULT_PARALLEL_COS);
        assert!(first.parallel_rejections > 0);
        let retried = intersect_all_with_retry(&bvh, &m, &ray, DEFAULT_PARALLEL_COS, DEFAULT_PERTURB_SIGMA, 7);
        assert_eq!(retried.parallel_rejections, 0);
        // either passes just above the disk into the dome, or misses cleanly below it
        assert!(retried.len() <= 1);
        if let Some(h) = retried.hits.first() {
            assert!((h.t - 0.4).abs() < 5e-3);
            assert!(h.cos_incidence > 0.5);
        }
        let again = intersect_all_with_retry(&bvh, &m, &ray, DEFAULT_PARALLEL_COS, DEFAULT_PERTURB_SIGMA, 7);
        assert_eq!(again, retried);
    }

    #[test]
    fn retry_is_noop_without_rejections() {
        let m = fixtures::icosphere(0.4, 3);
        let bvh = Bvh::build(&m).unwrap();
        let ray = Ray::from_origin(Vec3::new(0.3, -0.2, 0.9));
        assert_eq!(
            intersect_all(&bvh, &m, &ray, DEFAULT_PARALLEL_COS),
            intersect_all_with_retry(&bvh, &m, &ray, DEFAULT_PARALLEL_COS, DEFAULT_PERTURB_SIGMA, 1)
        );
    }

    #[test]
    fn perturbation_has_requested_angle() {
        let ray = Ray::from_origin(Vec3::new(0.2, 0.5, -0.3));
        let p = perturbed(&ray, 1e-3, 42);
        let angle = ray.direction.dot(&p.direction).clamp(-1.0, 1.0).acos();
        assert!((angle - 1e-3).abs() < 1e-9);
        assert_eq!(p, perturbed(&ray, 1e-3, 42));
    }
}
