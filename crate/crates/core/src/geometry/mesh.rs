use std::collections::HashMap;

use crate::error::invalid;
use crate::{Error, Result, Vec3};

/// Axis-aligned bounding box.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Aabb {
    pub min: Vec3,
    pub max: Vec3,
}

impl Aabb {
    pub fn new(min: Vec3, max: Vec3) -> Self {
        Self { min, max }
    }

    /// Cube `[-half, half]^3`.
    pub fn cube(half: f64) -> Self {
        Self::new(Vec3::repeat(-half), Vec3::repeat(half))
    }

    pub fn empty() -> Self {
        Self::new(Vec3::repeat(f64::INFINITY), Vec3::repeat(f64::NEG_INFINITY))
    }

    pub fn from_points<'a>(points: impl IntoIterator<Item = &'a Vec3>) -> Self {
        let mut b = Self::empty();
        for p in points {
            b.grow(p);
        }
        b
    }

    pub fn grow(&mut self, p: &Vec3) {
        self.min = self.min.inf(p);
        self.max = self.max.sup(p);
    }

    pub fn merge(&self, other: &Aabb) -> Aabb {
        Aabb::new(self.min.inf(&other.min), self.max.sup(&other.max))
    }

    pub fn is_empty(&self) -> bool {
        (0..3).any(|i| self.min[i] > self.max[i])
    }

    pub fn extent(&self) -> Vec3 {
        self.max - self.min
    }

    pub fn center(&self) -> Vec3 {
        (self.min + self.max) * 0.5
    }

    pub fn contains(&self, p: &Vec3) -> bool {
        (0..3).all(|i| p[i] >= self.min[i] && p[i] <= self.max[i])
    }

    /// Slab test; returns the parametric entry/exit interval clipped to `[0, t_max]`.
    pub fn ray_interval(&self, origin: &Vec3, inv_dir: &Vec3, t_max: f64) -> Option<(f64, f64)> {
        let mut t0 = 0.0_f64;
        let mut t1 = t_max;
        for i in 0..3 {
            let mut near = (self.min[i] - origin[i]) * inv_dir[i];
            let mut far = (self.max[i] - origin[i]) * inv_dir[i];
            if near > far {
                std::mem::swap(&mut near, &mut far);
            }
            // NaN from 0 * inf means the ray lies in the slab plane; keep the interval.
            if near.is_nan() || far.is_nan() {
                continue;
            }
            t0 = t0.max(near);
            t1 = t1.min(far);
            if t0 > t1 {
                return None;
            }
        }
        Some((t0, t1))
    }
}

/// Indexed triangle surface.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TriangleMesh {
    pub vertices: Vec<Vec3>,
    pub triangles: Vec<[usize; 3]>,
}

impl TriangleMesh {
    /// Build a mesh, checking index bounds and rejecting triangles that repeat a vertex.
    pub fn new(vertices: Vec<Vec3>, triangles: Vec<[usize; 3]>) -> Result<Self> {
        let n = vertices.len();
        for (i, t) in triangles.iter().enumerate() {
            if t.iter().any(|&v| v >= n) {
                return Err(invalid(format!("triangle {i} references a vertex >= {n}")));
            }
            if t[0] == t[1] || t[1] == t[2] || t[0] == t[2] {
                return Err(invalid(format!("triangle {i} repeats a vertex index")));
            }
        }
        Ok(Self { vertices, triangles })
    }

    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }

    pub fn bounds(&self) -> Aabb {
        Aabb::from_points(self.vertices.iter())
    }

    pub fn corners(&self, tri: usize) -> [Vec3; 3] {
        let [a, b, c] = self.triangles[tri];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    /// Unnormalized normal; its length is twice the triangle area.
    pub fn area_normal(&self, tri: usize) -> Vec3 {
        let [a, b, c] = self.corners(tri);
        (b - a).cross(&(c - a))
    }

    pub fn triangle_area(&self, tri: usize) -> f64 {
        0.5 * self.area_normal(tri).norm()
    }

    /// Unit normal following the counter-clockwise winding; zero for degenerate triangles.
    pub fn triangle_normal(&self, tri: usize) -> Vec3 {
        let n = self.area_normal(tri);
        let len = n.norm();
        if len > 0.0 {
            n / len
        } else {
            Vec3::zeros()
        }
    }

    pub fn surface_area(&self) -> f64 {
        (0..self.triangles.len()).map(|t| self.triangle_area(t)).sum()
    }

    /// Signed enclosed volume (divergence theorem). Positive for outward winding.
    pub fn signed_volume(&self) -> f64 {
        (0..self.triangles.len())
            .map(|t| {
                let [a, b, c] = self.corners(t);
                a.dot(&b.cross(&c)) / 6.0
            })
            .sum()
    }

    /// Number of undirected edges not shared by exactly two triangles.
    pub fn open_edge_count(&self) -> usize {
        let mut counts: HashMap<(usize, usize), u32> = HashMap::new();
        for t in &self.triangles {
            for k in 0..3 {
                let (a, b) = (t[k], t[(k + 1) % 3]);
                *counts.entry((a.min(b), a.max(b))).or_default() += 1;
            }
        }
        counts.values().filter(|&&c| c != 2).count()
    }

    pub fn is_watertight(&self) -> bool {
        !self.is_empty() && self.open_edge_count() == 0
    }

    /// Error naming the open edge count when the mesh is not closed.
    pub fn require_watertight(&self) -> Result<()> {
        let open_edges = self.open_edge_count();
        if open_edges > 0 {
            return Err(Error::NotWatertight { open_edges });
        }
        Ok(())
    }

    /// Apply `p -> scale * (p + translation)`.
    pub fn transformed(&self, scale: f64, translation: &Vec3) -> TriangleMesh {
        TriangleMesh {
            vertices: self.vertices.iter().map(|v| (v + translation) * scale).collect(),
            triangles: self.triangles.clone(),
        }
    }

    pub fn rotated(&self, rotation: &nalgebra::Rotation3<f64>) -> TriangleMesh {
        TriangleMesh {
            vertices: self.vertices.iter().map(|v| rotation * v).collect(),
            triangles: self.triangles.clone(),
        }
    }

    /// Reverse the winding of every triangle.
    pub fn flipped(&self) -> TriangleMesh {
        TriangleMesh {
            vertices: self.vertices.clone(),
            triangles: self.triangles.iter().map(|t| [t[0], t[2], t[1]]).collect(),
        }
    }

    /// Drop vertices not referenced by any triangle.
    pub fn compacted(&self) -> TriangleMesh {
        let mut remap = vec![usize::MAX; self.vertices.len()];
        let mut vertices = Vec::new();
        let triangles = self
            .triangles
            .iter()
            .map(|t| {
                t.map(|v| {
                    if remap[v] == usize::MAX {
                        remap[v] = vertices.len();
                        vertices.push(self.vertices[v]);
                    }
                    remap[v]
                })
            })
            .collect();
        TriangleMesh { vertices, triangles }
    }
}

/// Result of centering a mesh and scaling its longest side to 2.
#[derive(Clone, Debug)]
pub struct Normalized {
    pub mesh: TriangleMesh,
    /// Uniform scale applied after the translation.
    pub scale: f64,
    /// Translation applied before scaling (`p' = scale * (p + translation)`).
    pub translation: Vec3,
}

/// Center the bounding box at the origin and scale the longest axis-aligned extent to exactly 2.
pub fn normalize_mesh(mesh: &TriangleMesh) -> Result<Normalized> {
    if mesh.vertices.is_empty() {
        return Err(Error::Degenerate("mesh has no vertices".into()));
    }
    let b = mesh.bounds();
    let longest = b.extent().max();
    if !(longest > 0.0) || !longest.is_finite() {
        return Err(Error::Degenerate("mesh has zero extent".into()));
    }
    let scale = 2.0 / longest;
    let translation = -b.center();
    let mut out = mesh.transformed(scale, &translation);
    // Pin the longest axis to exactly [-1, 1] against rounding in the affine map.
    let axis = b.extent().imax();
    for v in &mut out.vertices {
        v[axis] = v[axis].clamp(-1.0, 1.0);
    }
    for (v, src) in out.vertices.iter_mut().zip(&mesh.vertices) {
        if src[axis] == b.min[axis] {
            v[axis] = -1.0;
        } else if src[axis] == b.max[axis] {
            v[axis] = 1.0;
        }
    }
    Ok(Normalized {
        mesh: out,
        scale,
        translation,
    })
}
