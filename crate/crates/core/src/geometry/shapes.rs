//! Analytic solids as closed triangle meshes.

use std::collections::HashMap;

use crate::geometry::TriangleMesh;
use crate::Vec3;

/// Subdivided icosahedron projected onto a sphere. `subdivisions = 4` gives 5120 faces.
pub fn icosphere(radius: f64, subdivisions: u32) -> TriangleMesh {
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let mut vertices: Vec<Vec3> = [
        (-1.0, t, 0.0),
        (1.0, t, 0.0),
        (-1.0, -t, 0.0),
        (1.0, -t, 0.0),
        (0.0, -1.0, t),
        (0.0, 1.0, t),
        (0.0, -1.0, -t),
        (0.0, 1.0, -t),
        (t, 0.0, -1.0),
        (t, 0.0, 1.0),
        (-t, 0.0, -1.0),
        (-t, 0.0, 1.0),
    ]
    .iter()
    .map(|&(x, y, z)| Vec3::new(x, y, z).normalize())
    .collect();
    let mut faces: Vec<[usize; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    for _ in 0..subdivisions {
        let mut midpoints: HashMap<(usize, usize), usize> = HashMap::new();
        let mut mid = |a: usize, b: usize, verts: &mut Vec<Vec3>| -> usize {
            *midpoints.entry((a.min(b), a.max(b))).or_insert_with(|| {
                verts.push(((verts[a] + verts[b]) * 0.5).normalize());
                verts.len() - 1
            })
        };
        let mut next = Vec::with_capacity(faces.len() * 4);
        for [a, b, c] in faces {
            let ab = mid(a, b, &mut vertices);
            let bc = mid(b, c, &mut vertices);
            let ca = mid(c, a, &mut vertices);
            next.extend_from_slice(&[[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        faces = next;
    }
    for v in &mut vertices {
        *v *= radius;
    }
    TriangleMesh {
        vertices,
        triangles: faces,
    }
}

/// Axis-aligned box `[-h, h]` with each face split into `n x n` quads.
pub fn box_mesh(half: Vec3, n: usize) -> TriangleMesh {
    let n = n.max(1);
    let mut index: HashMap<[i64; 3], usize> = HashMap::new();
    let mut vertices = Vec::new();
    let mut triangles = Vec::new();
    let ni = n as i64;
    let mut vid = |c: [i64; 3], vertices: &mut Vec<Vec3>| -> usize {
        *index.entry(c).or_insert_with(|| {
            let p = Vec3::new(
                (2.0 * c[0] as f64 / n as f64 - 1.0) * half.x,
                (2.0 * c[1] as f64 / n as f64 - 1.0) * half.y,
                (2.0 * c[2] as f64 / n as f64 - 1.0) * half.z,
            );
            vertices.push(p);
            vertices.len() - 1
        })
    };
    for axis in 0..3 {
        let (u, v) = ((axis + 1) % 3, (axis + 2) % 3);
        for side in [0, ni] {
            for a in 0..ni {
                for b in 0..ni {
                    let corner = |du: i64, dv: i64| {
                        let mut c = [0i64; 3];
                        c[axis] = side;
                        c[u] = a + du;
                        c[v] = b + dv;
                        c
                    };
                    let q = [
                        vid(corner(0, 0), &mut vertices),
                        vid(corner(1, 0), &mut vertices),
                        vid(corner(1, 1), &mut vertices),
                        vid(corner(0, 1), &mut vertices),
                    ];
                    // e_u x e_v = +e_axis, so this winding faces +axis.
                    if side == ni {
                        triangles.push([q[0], q[1], q[2]]);
                        triangles.push([q[0], q[2], q[3]]);
                    } else {
                        triangles.push([q[0], q[2], q[1]]);
                        triangles.push([q[0], q[3], q[2]]);
                    }
                }
            }
        }
    }
    TriangleMesh {
        vertices,
        triangles,
    }
}

/// Reshape a unit-sphere mesh into a solid that is star-shaped about the origin.
///
/// `inside` must be true near the origin and false at `r_max`; each vertex
/// direction is bisected to the boundary.
pub fn radial_mesh(sphere: &TriangleMesh, r_max: f64, inside: impl Fn(&Vec3) -> bool) -> TriangleMesh {
    let vertices = sphere
        .vertices
        .iter()
        .map(|v| {
            let d = v.normalize();
            let (mut lo, mut hi) = (0.0, r_max);
            for _ in 0..60 {
                let mid = 0.5 * (lo + hi);
                if inside(&(d * mid)) {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            d * (0.5 * (lo + hi))
        })
        .collect();
    TriangleMesh {
        vertices,
        triangles: sphere.triangles.clone(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn icosphere_is_closed_and_outward() {
        let m = icosphere(1.0, 3);
        assert_eq!(m.triangles.len(), 20 * 64);
        assert!(m.is_watertight());
        let v = m.signed_volume();
        assert!(v > 0.0 && (v - 4.0 / 3.0 * std::f64::consts::PI).abs() < 0.05);
    }

    #[test]
    fn box_is_closed_and_outward() {
        let m = box_mesh(Vec3::new(1.0, 0.5, 0.25), 3);
        assert!(m.is_watertight());
        assert!((m.signed_volume() - 1.0).abs() < 1e-12);
        for t in 0..m.triangles.len() {
            let c = m.corners(t);
            let centroid = (c[0] + c[1] + c[2]) / 3.0;
            assert!(m.triangle_normal(t).dot(&centroid) > 0.0);
        }
    }

    #[test]
    fn radial_cube() {
        let s = icosphere(1.0, 2);
        let m = radial_mesh(&s, 3.0, |p| p.amax() < 0.5);
        for v in &m.vertices {
            assert!((v.amax() - 0.5).abs() < 1e-12);
        }
    }
}
