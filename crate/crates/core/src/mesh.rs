//! Indexed triangle meshes, bounding boxes and the canonical object frame.
//!
//! Every mesh that enters the encoder is first brought into the canonical
//! frame by [`normalize_mesh`]: the bounding-box center sits at the origin
//! and the longest box axis spans `[-0.5, 0.5]`. All surface points of a
//! normalized mesh therefore lie within [`MAX_RADIUS`] of the origin.

use std::collections::HashMap;

use nalgebra::Vector3;

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;

/// Radius of the sphere enclosing `[-0.5, 0.5]^3`.
pub const MAX_RADIUS: f64 = 0.866_025_403_784_438_6;

/// Faces with less area than this are dropped on load.
pub const DEGENERATE_AREA: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb {
    pub min: Vec3,
    pub max: Vec3,
}

impl Aabb {
    pub fn empty() -> Self {
        Aabb {
            min: Vec3::repeat(f64::INFINITY),
            max: Vec3::repeat(f64::NEG_INFINITY),
        }
    }

    pub fn from_points<'a>(points: impl IntoIterator<Item = &'a Vec3>) -> Self {
        let mut b = Aabb::empty();
        for p in points {
            b.grow(p);
        }
        b
    }

    pub fn grow(&mut self, p: &Vec3) {
        self.min = self.min.inf(p);
        self.max = self.max.sup(p);
    }

    pub fn union(&self, other: &Aabb) -> Aabb {
        Aabb {
            min: self.min.inf(&other.min),
            max: self.max.sup(&other.max),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.min.x > self.max.x || self.min.y > self.max.y || self.min.z > self.max.z
    }

    pub fn center(&self) -> Vec3 {
        (self.min + self.max) * 0.5
    }

    pub fn extent(&self) -> Vec3 {
        self.max - self.min
    }

    pub fn longest_axis(&self) -> usize {
        self.extent().imax()
    }

    pub fn contains(&self, p: &Vec3) -> bool {
        (0..3).all(|i| p[i] >= self.min[i] && p[i] <= self.max[i])
    }

    pub fn encloses(&self, other: &Aabb) -> bool {
        (0..3).all(|i| self.min[i] <= other.min[i] && self.max[i] >= other.max[i])
    }
}

/// An indexed triangle mesh.
///
/// Construction through [`TriangleMesh::new`] checks that every index is in
/// range and that no face repeats a vertex.
#[derive(Debug, Clone, PartialEq)]
pub struct TriangleMesh {
    pub vertices: Vec<Vec3>,
    pub faces: Vec<[u32; 3]>,
    pub face_normals: Option<Vec<Vec3>>,
}

impl TriangleMesh {
    pub fn new(vertices: Vec<Vec3>, faces: Vec<[u32; 3]>) -> Result<Self> {
        validate_faces(&vertices, &faces).map_err(Error::InvalidMesh)?;
        Ok(TriangleMesh {
            vertices,
            faces,
            face_normals: None,
        })
    }

    /// Builds a mesh and drops faces whose area is below [`DEGENERATE_AREA`].
    /// Returns the mesh together with the number of dropped faces.
    pub fn from_raw(vertices: Vec<Vec3>, faces: Vec<[u32; 3]>) -> Result<(Self, usize)> {
        validate_faces(&vertices, &faces).map_err(Error::InvalidMesh)?;
        let before = faces.len();
        let faces: Vec<[u32; 3]> = faces
            .into_iter()
            .filter(|f| triangle_area(&vertices, f) >= DEGENERATE_AREA)
            .collect();
        let dropped = before - faces.len();
        Ok((
            TriangleMesh {
                vertices,
                faces,
                face_normals: None,
            },
            dropped,
        ))
    }

    pub fn is_empty(&self) -> bool {
        self.faces.is_empty()
    }

    pub fn aabb(&self) -> Aabb {
        Aabb::from_points(self.faces.iter().flat_map(|f| f.iter()).map(|&i| &self.vertices[i as usize]))
    }

    #[inline]
    pub fn triangle(&self, face: usize) -> [Vec3; 3] {
        let f = self.faces[face];
        [
            self.vertices[f[0] as usize],
            self.vertices[f[1] as usize],
            self.vertices[f[2] as usize],
        ]
    }

    pub fn face_area(&self, face: usize) -> f64 {
        triangle_area(&self.vertices, &self.faces[face])
    }

    /// Unit normal of a face following the right-hand rule.
    pub fn face_normal(&self, face: usize) -> Vec3 {
        if let Some(n) = &self.face_normals {
            return n[face];
        }
        let [a, b, c] = self.triangle(face);
        (b - a).cross(&(c - a)).normalize()
    }

    pub fn compute_face_normals(&mut self) {
        let normals = (0..self.faces.len())
            .map(|i| {
                let [a, b, c] = self.triangle(i);
                (b - a).cross(&(c - a)).normalize()
            })
            .collect();
        self.face_normals = Some(normals);
    }

    pub fn surface_area(&self) -> f64 {
        (0..self.faces.len()).map(|i| self.face_area(i)).sum()
    }

    /// Signed enclosed volume (positive for outward-oriented closed meshes).
    pub fn signed_volume(&self) -> f64 {
        (0..self.faces.len())
            .map(|i| {
                let [a, b, c] = self.triangle(i);
                a.dot(&b.cross(&c)) / 6.0
            })
            .sum()
    }

    pub fn max_radius(&self) -> f64 {
        self.vertices.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// Applies `f` to every vertex. Face normals are recomputed if present.
    pub fn map_vertices(&self, f: impl Fn(&Vec3) -> Vec3) -> TriangleMesh {
        let mut out = TriangleMesh {
            vertices: self.vertices.iter().map(f).collect(),
            faces: self.faces.clone(),
            face_normals: None,
        };
        if self.face_normals.is_some() {
            out.compute_face_normals();
        }
        out
    }

    /// Reverses the winding of every face.
    pub fn flipped(&self) -> TriangleMesh {
        TriangleMesh {
            vertices: self.vertices.clone(),
            faces: self.faces.iter().map(|f| [f[0], f[2], f[1]]).collect(),
            face_normals: self
                .face_normals
                .as_ref()
                .map(|n| n.iter().map(|v| -v).collect()),
        }
    }

    /// Concatenates meshes into one, reindexing faces.
    pub fn merge(parts: &[TriangleMesh]) -> TriangleMesh {
        let mut vertices = Vec::new();
        let mut faces = Vec::new();
        for p in parts {
            let base = vertices.len() as u32;
            vertices.extend_from_slice(&p.vertices);
            faces.extend(p.faces.iter().map(|f| [f[0] + base, f[1] + base, f[2] + base]));
        }
        TriangleMesh {
            vertices,
            faces,
            face_normals: None,
        }
    }

    pub fn topology(&self) -> Topology {
        Topology::of(self)
    }
}

fn validate_faces(vertices: &[Vec3], faces: &[[u32; 3]]) -> std::result::Result<(), String> {
    let n = vertices.len() as u32;
    for (i, f) in faces.iter().enumerate() {
        if f.iter().any(|&v| v >= n) {
            return Err(format!("face {i} references vertex outside 0..{n}"));
        }
        if f[0] == f[1] || f[1] == f[2] || f[0] == f[2] {
            return Err(format!("face {i} repeats a vertex index"));
        }
    }
    Ok(())
}

fn triangle_area(vertices: &[Vec3], f: &[u32; 3]) -> f64 {
    let a = vertices[f[0] as usize];
    let b = vertices[f[1] as usize];
    let c = vertices[f[2] as usize];
    0.5 * (b - a).cross(&(c - a)).norm()
}

/// Recenters the bounding box at the origin and scales uniformly so the
/// longest axis spans `[-half_extent, half_extent]`.
pub fn normalize_to(mesh: &TriangleMesh, half_extent: f64) -> Result<TriangleMesh> {
    if mesh.is_empty() {
        return Err(Error::EmptyMesh);
    }
    let bb = mesh.aabb();
    let center = bb.center();
    let longest = bb.extent().max();
    if longest <= 0.0 {
        return Err(Error::EmptyMesh);
    }
    let scale = 2.0 * half_extent / longest;
    Ok(mesh.map_vertices(|v| (v - center) * scale))
}

/// Brings a mesh into the canonical encoder frame (longest axis on `[-0.5, 0.5]`).
pub fn normalize_mesh(mesh: &TriangleMesh) -> Result<TriangleMesh> {
    normalize_to(mesh, 0.5)
}

/// Edge-incidence summary of a mesh.
#[derive(Debug, Clone)]
pub struct Topology {
    pub vertex_count: usize,
    pub edge_count: usize,
    pub face_count: usize,
    /// Undirected edges used by exactly one face.
    pub boundary_edges: Vec<(u32, u32)>,
    /// Undirected edges used by more than two faces.
    pub nonmanifold_edges: usize,
}

impl Topology {
    pub fn of(mesh: &TriangleMesh) -> Topology {
        let mut counts: HashMap<(u32, u32), u32> = HashMap::with_capacity(mesh.faces.len() * 2);
        let mut used = vec![false; mesh.vertices.len()];
        for f in &mesh.faces {
            for k in 0..3 {
                let (a, b) = (f[k], f[(k + 1) % 3]);
                used[a as usize] = true;
                *counts.entry((a.min(b), a.max(b))).or_insert(0) += 1;
            }
        }
        let mut boundary_edges: Vec<(u32, u32)> =
            counts.iter().filter(|(_, &c)| c == 1).map(|(&e, _)| e).collect();
        boundary_edges.sort_unstable();
        Topology {
            vertex_count: used.iter().filter(|&&u| u).count(),
            edge_count: counts.len(),
            face_count: mesh.faces.len(),
            nonmanifold_edges: counts.values().filter(|&&c| c > 2).count(),
            boundary_edges,
        }
    }

    /// V - E + F over referenced vertices.
    pub fn euler_characteristic(&self) -> i64 {
        self.vertex_count as i64 - self.edge_count as i64 + self.face_count as i64
    }

    /// Every edge is shared by exactly two faces.
    pub fn is_closed_manifold(&self) -> bool {
        self.boundary_edges.is_empty() && self.nonmanifold_edges == 0
    }

    /// Number of connected components of the boundary-edge graph.
    pub fn boundary_loops(&self) -> usize {
        let mut uf = UnionFind::default();
        for &(a, b) in &self.boundary_edges {
            uf.union(a, b);
        }
        uf.component_count()
    }
}

/// Number of face-connected components (faces sharing a vertex are connected).
pub fn connected_components(mesh: &TriangleMesh) -> usize {
    let mut uf = UnionFind::default();
    for f in &mesh.faces {
        uf.union(f[0], f[1]);
        uf.union(f[1], f[2]);
    }
    uf.component_count()
}

#[derive(Default)]
struct UnionFind {
    parent: HashMap<u32, u32>,
}

impl UnionFind {
    fn find(&mut self, x: u32) -> u32 {
        let p = *self.parent.entry(x).or_insert(x);
        if p == x {
            return x;
        }
        let root = self.find(p);
        self.parent.insert(x, root);
        root
    }

    fn union(&mut self, a: u32, b: u32) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.parent.insert(ra.max(rb), ra.min(rb));
        }
    }

    fn component_count(&mut self) -> usize {
        let keys: Vec<u32> = self.parent.keys().copied().collect();
        let mut roots: Vec<u32> = keys.into_iter().map(|k| self.find(k)).collect();
        roots.sort_unstable();
        roots.dedup();
        roots.len()
    }
}
