//! Ray / triangle-mesh intersection accelerated by a bounding volume hierarchy.

use crate::error::invalid;
use crate::geometry::{Aabb, TriangleMesh};
use crate::{Result, Vec3};

/// Hits closer than this are ignored so a ray leaving a surface does not re-hit it.
pub const T_MIN: f64 = 1e-9;

const DIR_TOL: f64 = 1e-9;
const LEAF_SIZE: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Hit {
    pub t: f64,
    pub point: Vec3,
    /// Unit normal facing the ray (`normal . direction < 0`).
    pub normal: Vec3,
    pub triangle: usize,
}

/// Moller-Trumbore; the ray parameter of a hit in front of the origin.
#[inline]
pub fn ray_triangle(origin: &Vec3, dir: &Vec3, a: &Vec3, b: &Vec3, c: &Vec3) -> Option<f64> {
    let e1 = b - a;
    let e2 = c - a;
    let p = dir.cross(&e2);
    let det = e1.dot(&p);
    if det == 0.0 || !det.is_finite() {
        return None;
    }
    let inv = 1.0 / det;
    let s = origin - a;
    let u = s.dot(&p) * inv;
    if !(0.0..=1.0).contains(&u) {
        return None;
    }
    let q = s.cross(&e1);
    let v = dir.dot(&q) * inv;
    if v < 0.0 || u + v > 1.0 {
        return None;
    }
    let t = e2.dot(&q) * inv;
    (t > T_MIN).then_some(t)
}

fn check_direction(dir: &Vec3) -> Result<()> {
    if !((dir.norm() - 1.0).abs() <= DIR_TOL) {
        return Err(invalid(format!(
            "ray direction must be unit length, got norm {}",
            dir.norm()
        )));
    }
    Ok(())
}

fn make_hit(mesh: &TriangleMesh, origin: &Vec3, dir: &Vec3, t: f64, tri: usize) -> Hit {
    let mut normal = mesh.triangle_normal(tri);
    if normal.dot(dir) > 0.0 {
        normal = -normal;
    }
    Hit {
        t,
        point: origin + dir * t,
        normal,
        triangle: tri,
    }
}

/// Exhaustive nearest hit over every triangle. Reference path for the BVH.
pub fn ray_mesh_intersect_brute(origin: &Vec3, dir: &Vec3, mesh: &TriangleMesh) -> Result<Option<Hit>> {
    check_direction(dir)?;
    if mesh.is_empty() {
        return Err(invalid("cannot ray cast an empty mesh"));
    }
    let mut best: Option<(f64, usize)> = None;
    for tri in 0..mesh.triangles.len() {
        let [a, b, c] = mesh.corners(tri);
        if let Some(t) = ray_triangle(origin, dir, &a, &b, &c) {
            if best.is_none_or(|(bt, _)| t < bt) {
                best = Some((t, tri));
            }
        }
    }
    Ok(best.map(|(t, tri)| make_hit(mesh, origin, dir, t, tri)))
}

/// Nearest hit of a ray with a mesh. Builds a BVH per call; reuse a [`RayCaster`] for many rays.
pub fn ray_mesh_intersect(origin: &Vec3, dir: &Vec3, mesh: &TriangleMesh) -> Result<Option<Hit>> {
    check_direction(dir)?;
    if mesh.is_empty() {
        return Err(invalid("cannot ray cast an empty mesh"));
    }
    RayCaster::new(mesh.clone()).cast(origin, dir)
}

#[derive(Clone, Debug)]
enum Node {
    Leaf { bounds: Aabb, start: usize, end: usize },
    Inner { bounds: Aabb, left: usize, right: usize },
}

impl Node {
    fn bounds(&self) -> &Aabb {
        match self {
            Node::Leaf { bounds, .. } | Node::Inner { bounds, .. } => bounds,
        }
    }
}

/// A mesh with its bounding volume hierarchy.
#[derive(Clone, Debug)]
pub struct RayCaster {
    mesh: TriangleMesh,
    nodes: Vec<Node>,
    order: Vec<usize>,
}

impl RayCaster {
    pub fn new(mesh: TriangleMesh) -> Self {
        let mut order: Vec<usize> = (0..mesh.triangles.len()).collect();
        let boxes: Vec<Aabb> = (0..mesh.triangles.len())
            .map(|t| Aabb::from_points(mesh.corners(t).iter()))
            .collect();
        let centroids: Vec<Vec3> = boxes.iter().map(|b| b.center()).collect();
        let mut nodes = Vec::new();
        if !order.is_empty() {
            build(&mut nodes, &mut order, 0, &boxes, &centroids);
        }
        Self { mesh, nodes, order }
    }

    pub fn mesh(&self) -> &TriangleMesh {
        &self.mesh
    }

    pub fn into_mesh(self) -> TriangleMesh {
        self.mesh
    }

    /// Nearest hit with `t > T_MIN`.
    pub fn cast(&self, origin: &Vec3, dir: &Vec3) -> Result<Option<Hit>> {
        check_direction(dir)?;
        Ok(self
            .nearest(origin, dir, f64::INFINITY)
            .map(|(t, tri)| make_hit(&self.mesh, origin, dir, t, tri)))
    }

    /// Nearest hit no farther than `t_max`; skips the direction check.
    pub fn nearest(&self, origin: &Vec3, dir: &Vec3, t_max: f64) -> Option<(f64, usize)> {
        if self.nodes.is_empty() {
            return None;
        }
        let inv = Vec3::new(1.0 / dir.x, 1.0 / dir.y, 1.0 / dir.z);
        let mut best_t = t_max;
        let mut best = None;
        let mut stack = vec![0usize];
        while let Some(ni) = stack.pop() {
            let node = &self.nodes[ni];
            match node.bounds().ray_interval(origin, &inv, best_t) {
                Some((t0, _)) if t0 <= best_t => {}
                _ => continue,
            }
            match *node {
                Node::Leaf { start, end, .. } => {
                    for &tri in &self.order[start..end] {
                        let [a, b, c] = self.mesh.corners(tri);
                        if let Some(t) = ray_triangle(origin, dir, &a, &b, &c) {
                            if t < best_t || (t == best_t && best.is_some_and(|(_, bt)| tri < bt)) {
                                best_t = t;
                                best = Some((t, tri));
                            }
                        }
                    }
                }
                Node::Inner { left, right, .. } => {
                    let dl = self.nodes[left].bounds().ray_interval(origin, &inv, best_t);
                    let dr = self.nodes[right].bounds().ray_interval(origin, &inv, best_t);
                    match (dl, dr) {
                        (Some((a, _)), Some((b, _))) => {
                            // Push the farther child first so the nearer one is visited first.
                            if a <= b {
                                stack.push(right);
                                stack.push(left);
                            } else {
                                stack.push(left);
                                stack.push(right);
                            }
                        }
                        (Some(_), None) => stack.push(left),
                        (None, Some(_)) => stack.push(right),
                        (None, None) => {}
                    }
                }
            }
        }
        best
    }

    /// True when a segment from `origin` travelling `length` along `dir` hits the mesh.
    pub fn occluded(&self, origin: &Vec3, dir: &Vec3, length: f64) -> bool {
        self.nearest(origin, dir, length).is_some()
    }
}

fn build(
    nodes: &mut Vec<Node>,
    order: &mut [usize],
    offset: usize,
    boxes: &[Aabb],
    centroids: &[Vec3],
) -> usize {
    let bounds = order
        .iter()
        .fold(Aabb::empty(), |acc, &t| acc.merge(&boxes[t]));
    let id = nodes.len();
    if order.len() <= LEAF_SIZE {
        nodes.push(Node::Leaf {
            bounds,
            start: offset,
            end: offset + order.len(),
        });
        return id;
    }
    let cb = Aabb::from_points(order.iter().map(|&t| &centroids[t]));
    let axis = cb.extent().imax();
    let mid = order.len() / 2;
    order.select_nth_unstable_by(mid, |&a, &b| {
        centroids[a][axis]
            .total_cmp(&centroids[b][axis])
            .then(a.cmp(&b))
    });
    nodes.push(Node::Leaf {
        bounds,
        start: 0,
        end: 0,
    });
    let (lo, hi) = order.split_at_mut(mid);
    let left = build(nodes, lo, offset, boxes, centroids);
    let right = build(nodes, hi, offset + mid, boxes, centroids);
    nodes[id] = Node::Inner {
        bounds,
        left,
        right,
    };
    id
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::shapes::{box_mesh, icosphere};
    use rand::Rng;

    #[test]
    fn cube_face_hit() {
        let cube = box_mesh(Vec3::repeat(0.5), 2);
        let hit = ray_mesh_intersect(&Vec3::new(-2.0, 0.0, 0.0), &Vec3::x(), &cube)
            .unwrap()
            .unwrap();
        assert!((hit.t - 1.5).abs() < 1e-12);
        assert!((hit.point - Vec3::new(-0.5, 0.0, 0.0)).norm() < 1e-12);
        assert!(hit.normal.dot(&Vec3::x()) < 0.0);
    }

    #[test]
    fn ray_pointing_away_misses() {
        let s = icosphere(1.0, 2);
        let hit = ray_mesh_intersect(&Vec3::new(0.0, 0.0, -3.0), &-Vec3::z(), &s).unwrap();
        assert!(hit.is_none());
    }

    #[test]
    fn sphere_distance_matches_analytic() {
        // Analytic ray-sphere solution: origin 3 units out, unit sphere -> t = 2.
        let s = icosphere(1.0, 5);
        let hit = ray_mesh_intersect(&Vec3::new(0.0, 0.0, -3.0), &Vec3::z(), &s)
            .unwrap()
            .unwrap();
        // Tessellation sag of a level-5 icosphere is below 1e-3.
        assert!((hit.t - 2.0).abs() < 1e-3, "t = {}", hit.t);
        assert!(hit.t >= 2.0);
    }

    #[test]
    fn non_unit_direction_rejected() {
        let s = icosphere(1.0, 1);
        assert!(ray_mesh_intersect(&Vec3::zeros(), &Vec3::new(2.0, 0.0, 0.0), &s).is_err());
    }

    #[test]
    fn bvh_agrees_with_scan() {
        let mesh = icosphere(0.8, 3);
        let rc = RayCaster::new(mesh.clone());
        let mut rng = crate::rng_from_seed(5);
        for _ in 0..300 {
            let o = Vec3::new(
                rng.random_range(-2.0..2.0),
                rng.random_range(-2.0..2.0),
                rng.random_range(-2.0..2.0),
            );
            let target = Vec3::new(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            );
            let d = (target - o).normalize();
            let a = rc.cast(&o, &d).unwrap();
            let b = ray_mesh_intersect_brute(&o, &d, &mesh).unwrap();
            assert_eq!(a.map(|h| h.t), b.map(|h| h.t));
        }
    }
}
