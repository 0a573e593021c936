//! Bowyer-Watson Delaunay tetrahedralization and alpha shapes.

use std::collections::HashMap;

use rand::Rng as _;
use robust::insphere;

use super::hull::{c3, orient};
use crate::error::invalid;
use crate::geometry::{Aabb, TriangleMesh};
use crate::{rng_from_seed, Error, Result, Vec3};

const NONE: usize = usize::MAX;

/// Local vertex triples of the faces opposite vertex 0..4, wound so that the
/// opposite vertex lies on the inner side of a positively oriented tetrahedron.
const FACES: [[usize; 3]; 4] = [[1, 3, 2], [0, 2, 3], [0, 3, 1], [0, 1, 2]];

/// Tetrahedralization of a point set. Indices refer to the input points.
#[derive(Clone, Debug)]
pub struct Delaunay {
    /// Working coordinates (inputs plus a tiny deterministic perturbation).
    points: Vec<Vec3>,
    /// Positively oriented tetrahedra not touching the enclosing simplex.
    pub tetrahedra: Vec<[usize; 4]>,
    /// Neighbor across the face opposite each vertex, as an index into `tetrahedra`.
    pub neighbors: Vec<[Option<usize>; 4]>,
}

struct Builder {
    pts: Vec<Vec3>,
    tets: Vec<[usize; 4]>,
    adj: Vec<[usize; 4]>,
    alive: Vec<bool>,
    last: usize,
}

impl Builder {
    fn locate(&self, p: &Vec3) -> Result<usize> {
        let mut t = self.last;
        let mut turn = 0usize;
        let limit = 4 * self.tets.len() + 16;
        for _ in 0..limit {
            let v = self.tets[t];
            let mut moved = false;
            for s in 0..4 {
                let i = (s + turn) % 4;
                let f = FACES[i];
                if orient(&self.pts[v[f[0]]], &self.pts[v[f[1]]], &self.pts[v[f[2]]], p) < 0.0 {
                    let n = self.adj[t][i];
                    if n == NONE {
                        return Err(Error::Degenerate("point outside the enclosing simplex".into()));
                    }
                    t = n;
                    moved = true;
                    break;
                }
            }
            if !moved {
                return Ok(t);
            }
            turn += 1;
        }
        Err(Error::Degenerate("point location did not terminate".into()))
    }

    fn in_sphere(&self, t: usize, p: &Vec3) -> bool {
        let [a, b, c, d] = self.tets[t].map(|i| c3(&self.pts[i]));
        insphere(a, b, c, d, c3(p)) > 0.0
    }

    fn insert(&mut self, pi: usize) -> Result<()> {
        let p = self.pts[pi];
        let start = self.locate(&p)?;
        let mut bad = vec![start];
        let mut in_cavity: HashMap<usize, ()> = HashMap::from([(start, ())]);
        let mut k = 0;
        while k < bad.len() {
            let t = bad[k];
            k += 1;
            for &n in &self.adj[t] {
                if n != NONE && !in_cavity.contains_key(&n) && self.in_sphere(n, &p) {
                    in_cavity.insert(n, ());
                    bad.push(n);
                }
            }
        }
        let mut edges: HashMap<(usize, usize), (usize, usize)> = HashMap::new();
        let mut created = Vec::new();
        for &t in &bad {
            for i in 0..4 {
                let outer = self.adj[t][i];
                if outer != NONE && in_cavity.contains_key(&outer) {
                    continue;
                }
                let mut v = self.tets[t];
                v[i] = pi;
                let id = self.tets.len();
                self.tets.push(v);
                self.alive.push(true);
                let mut adj = [NONE; 4];
                adj[i] = outer;
                if outer != NONE {
                    let back = self.adj[outer].iter().position(|&x| x == t).expect("symmetric adjacency");
                    self.adj[outer][back] = id;
                }
                self.adj.push(adj);
                for j in (0..4).filter(|&j| j != i) {
                    let mut rest = (0..4).filter(|&m| m != i && m != j).map(|m| v[m]);
                    let (a, b) = (rest.next().unwrap(), rest.next().unwrap());
                    let key = (a.min(b), a.max(b));
                    if let Some((other, oj)) = edges.remove(&key) {
                        self.adj[id][j] = other;
                        self.adj[other][oj] = id;
                    } else {
                        edges.insert(key, (id, j));
                    }
                }
                created.push(id);
            }
        }
        if !edges.is_empty() {
            return Err(Error::Degenerate("cavity boundary is not closed".into()));
        }
        for &t in &bad {
            self.alive[t] = false;
        }
        self.last = *created.last().expect("cavity has a boundary");
        Ok(())
    }
}

impl Delaunay {
    /// Tetrahedralize `points`. Inputs are perturbed by about 1e-9 of their
    /// extent so that cospherical and coplanar configurations resolve consistently.
    pub fn new(points: &[Vec3]) -> Result<Self> {
        if points.len() < 4 {
            return Err(invalid("tetrahedralization needs at least four points"));
        }
        if points.iter().any(|p| !p.iter().all(|v| v.is_finite())) {
            return Err(invalid("points must be finite"));
        }
        let bounds = Aabb::from_points(points.iter());
        let extent = bounds.extent().max();
        if !(extent > 0.0) {
            return Err(Error::Degenerate("points coincide".into()));
        }
        // Rejects coplanar input with a clear error.
        super::hull::convex_hull(points)?;
        let mut rng = rng_from_seed(0x5eed);
        let eps = 1e-9 * extent;
        let mut pts: Vec<Vec3> = points
            .iter()
            .map(|p| p + Vec3::new(rng.random_range(-eps..eps), rng.random_range(-eps..eps), rng.random_range(-eps..eps)))
            .collect();
        let n = pts.len();
        let c = bounds.center();
        let r = 1e4 * extent;
        let mut sup = [
            c + r * Vec3::new(1.0, 1.0, 1.0),
            c + r * Vec3::new(1.0, -1.0, -1.0),
            c + r * Vec3::new(-1.0, 1.0, -1.0),
            c + r * Vec3::new(-1.0, -1.0, 1.0),
        ];
        if orient(&sup[0], &sup[1], &sup[2], &sup[3]) < 0.0 {
            sup.swap(2, 3);
        }
        pts.extend_from_slice(&sup);
        let mut b = Builder {
            pts,
            tets: vec![[n, n + 1, n + 2, n + 3]],
            adj: vec![[NONE; 4]],
            alive: vec![true],
            last: 0,
        };
        if orient(&b.pts[n], &b.pts[n + 1], &b.pts[n + 2], &b.pts[n + 3]) < 0.0 {
            b.tets[0].swap(2, 3);
        }
        for i in 0..n {
            b.insert(i)?;
        }
        let mut remap = vec![NONE; b.tets.len()];
        let mut tetrahedra = Vec::new();
        for (t, v) in b.tets.iter().enumerate() {
            if b.alive[t] && v.iter().all(|&i| i < n) {
                remap[t] = tetrahedra.len();
                tetrahedra.push(*v);
            }
        }
        let neighbors = (0..b.tets.len())
            .filter(|&t| remap[t] != NONE)
            .map(|t| b.adj[t].map(|x| (x != NONE && remap[x] != NONE).then(|| remap[x])))
            .collect();
        b.pts.truncate(n);
        Ok(Self { points: b.pts, tetrahedra, neighbors })
    }

    pub fn circumradius(&self, t: usize) -> f64 {
        let [a, b, c, d] = self.tetrahedra[t].map(|i| self.points[i]);
        let (u, v, w) = (b - a, c - a, d - a);
        let den = 2.0 * u.dot(&v.cross(&w));
        let num = u.norm_squared() * v.cross(&w) + v.norm_squared() * w.cross(&u) + w.norm_squared() * u.cross(&v);
        (num / den).norm()
    }

    /// True when the smallest circumsphere of `face` has radius <= `alpha`
    /// and none of `apexes` lies strictly inside it.
    fn face_exposed(&self, face: [usize; 3], apexes: &[usize], alpha: f64) -> bool {
        let [a, b, c] = face.map(|i| self.points[i]);
        let (u, v) = (b - a, c - a);
        let n = u.cross(&v);
        let den = 2.0 * n.norm_squared();
        if den == 0.0 {
            return false;
        }
        let center = a + (u.norm_squared() * v.cross(&n) + v.norm_squared() * n.cross(&u)) / den;
        let r = (center - a).norm();
        r <= alpha && apexes.iter().all(|&p| (self.points[p] - center).norm() >= r)
    }

    pub fn volume(&self, t: usize) -> f64 {
        let [a, b, c, d] = self.tetrahedra[t].map(|i| self.points[i]);
        (b - a).dot(&(c - a).cross(&(d - a))).abs() / 6.0
    }
}

/// Boundary surface of an alpha complex.
#[derive(Clone, Debug)]
pub struct AlphaShape {
    pub mesh: TriangleMesh,
    /// Boundary of the kept tetrahedra only; every edge is used an even number of times.
    pub solid: TriangleMesh,
    /// True when every mesh edge is shared by exactly two triangles.
    pub watertight: bool,
    /// Number of tetrahedra kept.
    pub tetrahedra: usize,
    /// Total volume of the kept tetrahedra.
    pub volume: f64,
}

/// Boundary of the union of Delaunay tetrahedra with circumradius <= `alpha`,
/// wound outward, over the input coordinates.
pub fn alpha_shape(points: &[Vec3], alpha: f64) -> Result<AlphaShape> {
    if !(alpha > 0.0) {
        return Err(invalid("alpha must be positive"));
    }
    let del = Delaunay::new(points)?;
    alpha_from(&del, points, alpha)
}

/// Alpha shape over an existing tetrahedralization of `points`.
///
/// A triangle is on the boundary when exactly one incident tetrahedron is
/// kept, or when none is but its smallest circumsphere has radius <= `alpha`
/// and excludes the opposite vertices. Such dangling triangles face away
/// from the centroid of the points.
pub fn alpha_from(del: &Delaunay, points: &[Vec3], alpha: f64) -> Result<AlphaShape> {
    let keep: Vec<bool> = (0..del.tetrahedra.len()).map(|t| del.circumradius(t) <= alpha).collect();
    let centroid = del.points.iter().sum::<Vec3>() / del.points.len() as f64;
    let mut triangles = Vec::new();
    let mut solid = Vec::new();
    let mut volume = 0.0;
    for (t, v) in del.tetrahedra.iter().enumerate() {
        if keep[t] {
            volume += del.volume(t);
        }
        for (i, f) in FACES.iter().enumerate() {
            let n = del.neighbors[t][i];
            if n.is_some_and(|n| n < t) {
                continue;
            }
            let face = f.map(|k| v[k]);
            match (keep[t], n.is_some_and(|n| keep[n])) {
                (true, true) => {}
                (true, false) => {
                    triangles.push(face);
                    solid.push(face);
                }
                (false, true) => {
                    triangles.push([face[0], face[2], face[1]]);
                    solid.push([face[0], face[2], face[1]]);
                }
                (false, false) => {
                    let mut apexes = vec![v[i]];
                    if let Some(n) = n {
                        apexes.extend(del.tetrahedra[n].iter().filter(|x| !face.contains(x)));
                    }
                    if del.face_exposed(face, &apexes, alpha) {
                        let [a, b, c] = face.map(|k| del.points[k]);
                        let outward = (b - a).cross(&(c - a)).dot(&(a - centroid)) >= 0.0;
                        triangles.push(if outward { face } else { [face[0], face[2], face[1]] });
                    }
                }
            }
        }
    }
    let mesh = TriangleMesh::new(points.to_vec(), triangles)?.compacted();
    let solid = TriangleMesh::new(points.to_vec(), solid)?.compacted();
    let watertight = mesh.is_watertight();
    Ok(AlphaShape { mesh, solid, watertight, tetrahedra: keep.iter().filter(|&&k| k).count(), volume })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::baselines::convex_hull;
    use crate::geometry::{chamfer_points, sample_surface, shapes::icosphere};

    fn random_points(n: usize, seed: u64) -> Vec<Vec3> {
        let mut rng = rng_from_seed(seed);
        (0..n)
            .map(|_| Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect()
    }

    #[test]
    fn empty_circumspheres() {
        let pts = random_points(150, 3);
        let del = Delaunay::new(&pts).unwrap();
        for v in &del.tetrahedra {
            let [a, b, c, d] = v.map(|i| c3(&del.points[i]));
            assert!(orient(&del.points[v[0]], &del.points[v[1]], &del.points[v[2]], &del.points[v[3]]) > 0.0);
            for (i, p) in del.points.iter().enumerate() {
                if !v.contains(&i) {
                    assert!(insphere(a, b, c, d, c3(p)) <= 0.0);
                }
            }
        }
        for (t, ns) in del.neighbors.iter().enumerate() {
            for n in ns.iter().flatten() {
                assert!(del.neighbors[*n].contains(&Some(t)));
            }
        }
    }

    #[test]
    fn tetrahedra_fill_the_hull() {
        let pts = random_points(300, 4);
        let del = Delaunay::new(&pts).unwrap();
        let total: f64 = (0..del.tetrahedra.len()).map(|t| del.volume(t)).sum();
        let hull = convex_hull(&pts).unwrap().signed_volume();
        assert!((total - hull).abs() < 1e-6 * hull, "{total} vs {hull}");
    }

    #[test]
    fn grid_input_is_handled() {
        let mut pts = Vec::new();
        for i in 0..5 {
            for j in 0..5 {
                for k in 0..5 {
                    pts.push(Vec3::new(i as f64, j as f64, k as f64));
                }
            }
        }
        let a = alpha_shape(&pts, 1e6).unwrap();
        assert!(a.watertight);
        assert!((a.mesh.signed_volume() - 64.0).abs() < 1e-6);
    }

    #[test]
    fn large_alpha_matches_hull() {
        let pts = random_points(200, 5);
        let a = alpha_shape(&pts, 1e9).unwrap();
        let hull = convex_hull(&pts).unwrap();
        assert!(a.watertight);
        assert!((a.mesh.signed_volume() - hull.signed_volume()).abs() < 1e-6);
        assert!((a.volume - hull.signed_volume()).abs() < 1e-6);
        assert_eq!(a.mesh, a.solid);
    }

    #[test]
    fn tiny_alpha_is_empty() {
        let pts = random_points(100, 6);
        let mut min_gap = f64::INFINITY;
        for i in 0..pts.len() {
            for j in 0..i {
                min_gap = min_gap.min((pts[i] - pts[j]).norm());
            }
        }
        let a = alpha_shape(&pts, 0.49 * min_gap).unwrap();
        assert!(a.mesh.is_empty());
        assert!(!a.watertight);
    }

    #[test]
    fn alpha_volume_within_hull() {
        let pts = random_points(200, 7);
        let hull = convex_hull(&pts).unwrap().signed_volume();
        for alpha in [0.2, 0.4, 0.8] {
            let a = alpha_shape(&pts, alpha).unwrap();
            assert!(a.volume <= hull + 1e-9);
        }
    }

    #[test]
    fn sphere_alpha_shape() {
        let sphere = icosphere(1.0, 5);
        let mut rng = rng_from_seed(8);
        let cloud = sample_surface(&sphere, 5000, &mut rng).unwrap();
        let a = alpha_shape(&cloud.points, 0.3).unwrap();
        let reference = sample_surface(&sphere, 5000, &mut rng).unwrap();
        let got = sample_surface(&a.mesh, 5000, &mut rng).unwrap();
        let cd = chamfer_points(&got.points, &reference.points).unwrap();
        assert!(cd <= 0.05, "chamfer {cd}");
    }

    #[test]
    fn rejects_bad_input() {
        assert!(alpha_shape(&random_points(3, 1), 1.0).is_err());
        assert!(alpha_shape(&random_points(10, 1), 0.0).is_err());
        let flat: Vec<Vec3> = (0..20).map(|i| Vec3::new(i as f64, (i % 3) as f64, 0.0)).collect();
        assert!(alpha_shape(&flat, 1.0).is_err());
    }
}
