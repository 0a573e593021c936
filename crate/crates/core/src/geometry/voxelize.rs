//! Occupancy by ray-crossing parity along lattice columns.
//!
//! Each column of voxel centers is pierced by a ray along +z. Triangles are
//! projected to the xy-plane and tested with exact orientation predicates; a
//! top-left fill rule assigns points on shared edges to exactly one side, so
//! the crossing count is exact for closed meshes.

use std::collections::HashMap;

use robust::{orient2d, Coord};

use crate::geometry::{Aabb, Lattice, TriangleMesh, VoxelGrid};
use crate::{Error, Result, Vec3};

#[inline]
fn c2(p: &Vec3) -> Coord<f64> {
    Coord { x: p.x, y: p.y }
}

/// Edge `u -> v` of a counter-clockwise triangle owns its boundary points when
/// its left normal points to +x (or to +y when vertical).
#[inline]
fn owns_boundary(u: &Vec3, v: &Vec3) -> bool {
    let (nx, ny) = (-(v.y - u.y), v.x - u.x);
    nx > 0.0 || (nx == 0.0 && ny > 0.0)
}

/// Voxel value 1 iff the voxel center is inside `mesh`.
pub fn voxelize(mesh: &TriangleMesh, lattice: &Lattice) -> Result<VoxelGrid> {
    if mesh.is_empty() {
        return Ok(VoxelGrid::zeros(*lattice));
    }
    mesh.require_watertight()?;
    Ok(parity_fill(mesh, lattice))
}

/// Like [`voxelize`] but accepts any surface whose edges are each used an
/// even number of times (e.g. the boundary of a union of tetrahedra).
pub fn voxelize_parity(mesh: &TriangleMesh, lattice: &Lattice) -> Result<VoxelGrid> {
    let mut counts: HashMap<(usize, usize), u32> = HashMap::new();
    for t in &mesh.triangles {
        for k in 0..3 {
            let (a, b) = (t[k], t[(k + 1) % 3]);
            *counts.entry((a.min(b), a.max(b))).or_default() += 1;
        }
    }
    let odd = counts.values().filter(|&&c| c % 2 == 1).count();
    if odd > 0 {
        return Err(Error::NotWatertight { open_edges: odd });
    }
    Ok(parity_fill(mesh, lattice))
}

fn parity_fill(mesh: &TriangleMesh, lattice: &Lattice) -> VoxelGrid {
    let mut grid = VoxelGrid::zeros(*lattice);
    let [nx, ny, nz] = lattice.dims;
    let e = lattice.voxel_edge;
    let o = lattice.origin;
    let mut crossings: Vec<Vec<f64>> = vec![Vec::new(); nx * ny];

    for tri in 0..mesh.triangles.len() {
        let [a, mut b, mut c] = mesh.corners(tri);
        let s = orient2d(c2(&a), c2(&b), c2(&c));
        if s == 0.0 {
            continue;
        }
        if s < 0.0 {
            std::mem::swap(&mut b, &mut c);
        }
        let area = s.abs();
        let bb = Aabb::from_points([a, b, c].iter());
        let i0 = ((bb.min.x - o.x) / e - 0.5).ceil().max(0.0) as usize;
        let j0 = ((bb.min.y - o.y) / e - 0.5).ceil().max(0.0) as usize;
        let i1 = ((bb.max.x - o.x) / e - 0.5).floor();
        let j1 = ((bb.max.y - o.y) / e - 0.5).floor();
        if i1 < 0.0 || j1 < 0.0 {
            continue;
        }
        let i1 = (i1 as usize).min(nx - 1);
        let j1 = (j1 as usize).min(ny - 1);
        let own = [owns_boundary(&a, &b), owns_boundary(&b, &c), owns_boundary(&c, &a)];
        for i in i0..=i1 {
            for j in j0..=j1 {
                let p = Coord {
                    x: o.x + (i as f64 + 0.5) * e,
                    y: o.y + (j as f64 + 0.5) * e,
                };
                let w = [
                    orient2d(c2(&a), c2(&b), p),
                    orient2d(c2(&b), c2(&c), p),
                    orient2d(c2(&c), c2(&a), p),
                ];
                let inside = w
                    .iter()
                    .zip(own)
                    .all(|(&wk, ok)| wk > 0.0 || (wk == 0.0 && ok));
                if !inside {
                    continue;
                }
                // Barycentric weights: w[1] belongs to a, w[2] to b, w[0] to c.
                let z = (w[1] * a.z + w[2] * b.z + w[0] * c.z) / area;
                crossings[i * ny + j].push(z);
            }
        }
    }

    for i in 0..nx {
        for j in 0..ny {
            let col = &mut crossings[i * ny + j];
            if col.is_empty() {
                continue;
            }
            col.sort_by(f64::total_cmp);
            let mut below = 0usize;
            for k in 0..nz {
                let zc = o.z + (k as f64 + 0.5) * e;
                while below < col.len() && col[below] < zc {
                    below += 1;
                }
                if below % 2 == 1 {
                    let idx = lattice.index(i, j, k);
                    grid.values[idx] = 1.0;
                }
            }
        }
    }
    grid
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::shapes::{box_mesh, icosphere};

    #[test]
    fn cube_matches_center_count() {
        let lattice = Lattice::covering(&Aabb::cube(1.0), 40).unwrap();
        let cube = box_mesh(Vec3::repeat(0.5), 3);
        let g = voxelize(&cube, &lattice).unwrap();
        // Brute-force center-in-cube oracle.
        let expected = (0..lattice.len())
            .filter(|&i| lattice.center(i).amax() < 0.5)
            .count();
        assert_eq!(g.occupied_count(), expected);
        assert_eq!(expected, 20 * 20 * 20);
    }

    #[test]
    fn box_spanning_bbox_fills_everything() {
        let lattice = Lattice::covering(&Aabb::cube(1.0), 10).unwrap();
        let cube = box_mesh(Vec3::repeat(1.0), 1);
        assert_eq!(voxelize(&cube, &lattice).unwrap().occupied_count(), 1000);
    }

    #[test]
    fn empty_mesh_gives_empty_grid() {
        let lattice = Lattice::covering(&Aabb::cube(1.0), 10).unwrap();
        let g = voxelize(&TriangleMesh::default(), &lattice).unwrap();
        assert_eq!(g.occupied_count(), 0);
    }

    #[test]
    fn open_mesh_rejected() {
        let lattice = Lattice::covering(&Aabb::cube(1.0), 10).unwrap();
        let mut m = icosphere(0.5, 1);
        m.triangles.truncate(10);
        assert!(voxelize(&m, &lattice).is_err());
    }

    #[test]
    fn grid_aligned_vertices_count_once() {
        // Vertices land exactly on column centers: exercises the shared-edge rule.
        let lattice = Lattice::new(Vec3::repeat(-1.0), 0.25, [8, 8, 8]).unwrap();
        let cube = box_mesh(Vec3::repeat(0.75), 12);
        let g = voxelize(&cube, &lattice).unwrap();
        let expected = (0..lattice.len())
            .filter(|&i| lattice.center(i).amax() < 0.75)
            .count();
        assert_eq!(g.occupied_count(), expected);
    }

    #[test]
    fn parity_accepts_touching_boxes() {
        // Two cubes sharing an edge: closed mod 2 but not manifold.
        let a = box_mesh(Vec3::repeat(0.25), 1).transformed(1.0, &Vec3::repeat(0.25));
        let b = box_mesh(Vec3::repeat(0.25), 1).transformed(1.0, &Vec3::new(-0.25, -0.25, 0.25));
        let mut m = TriangleMesh::default();
        let mut ids: HashMap<[u64; 3], usize> = HashMap::new();
        for src in [&a, &b] {
            for t in &src.triangles {
                let tri = t.map(|i| {
                    let v = src.vertices[i];
                    *ids.entry([v.x.to_bits(), v.y.to_bits(), v.z.to_bits()]).or_insert_with(|| {
                        m.vertices.push(v);
                        m.vertices.len() - 1
                    })
                });
                m.triangles.push(tri);
            }
        }
        assert!(!m.is_watertight());
        let lattice = Lattice::covering(&Aabb::cube(1.0), 20).unwrap();
        let expected = voxelize(&a, &lattice).unwrap().occupied_count() + voxelize(&b, &lattice).unwrap().occupied_count();
        assert_eq!(voxelize_parity(&m, &lattice).unwrap().occupied_count(), expected);
        let mut open = a.clone();
        open.triangles.pop();
        assert!(voxelize_parity(&open, &lattice).is_err());
    }

    #[test]
    fn sphere_volume_within_one_shell() {
        let lattice = Lattice::covering(&Aabb::cube(1.0), 40).unwrap();
        let s = icosphere(0.7, 4);
        let g = voxelize(&s, &lattice).unwrap();
        let vv = lattice.voxel_edge.powi(3);
        let vol = g.occupied_count() as f64 * vv;
        let shell = g.shell().len() as f64 * vv;
        assert!((vol - s.signed_volume()).abs() <= shell);
    }
}
