//! Incremental 3D convex hull on exact orientation predicates.

use std::collections::HashSet;

use robust::{orient3d, Coord3D};

use crate::error::invalid;
use crate::geometry::TriangleMesh;
use crate::{Error, Result, Vec3};

#[inline]
pub(crate) fn c3(p: &Vec3) -> Coord3D<f64> {
    Coord3D { x: p.x, y: p.y, z: p.z }
}

/// Positive when `d` lies on the inner side of the outward face `(a, b, c)`.
#[inline]
pub(crate) fn orient(a: &Vec3, b: &Vec3, c: &Vec3, d: &Vec3) -> f64 {
    orient3d(c3(a), c3(b), c3(c), c3(d))
}

/// Indices of four affinely independent points, or an error.
fn initial_simplex(points: &[Vec3]) -> Result<[usize; 4]> {
    let degenerate = || Error::Degenerate("hull input is coplanar or too small".into());
    let i0 = (0..points.len())
        .min_by(|&a, &b| points[a].x.total_cmp(&points[b].x))
        .ok_or_else(degenerate)?;
    let i1 = (0..points.len())
        .max_by(|&a, &b| (points[a] - points[i0]).norm_squared().total_cmp(&(points[b] - points[i0]).norm_squared()))
        .ok_or_else(degenerate)?;
    let axis = points[i1] - points[i0];
    if axis.norm_squared() == 0.0 {
        return Err(degenerate());
    }
    let i2 = (0..points.len())
        .max_by(|&a, &b| {
            axis.cross(&(points[a] - points[i0]))
                .norm_squared()
                .total_cmp(&axis.cross(&(points[b] - points[i0])).norm_squared())
        })
        .ok_or_else(degenerate)?;
    if axis.cross(&(points[i2] - points[i0])).norm_squared() == 0.0 {
        return Err(degenerate());
    }
    let (a, b, c) = (&points[i0], &points[i1], &points[i2]);
    let i3 = (0..points.len())
        .max_by(|&x, &y| orient(a, b, c, &points[x]).abs().total_cmp(&orient(a, b, c, &points[y]).abs()))
        .ok_or_else(degenerate)?;
    if orient(a, b, c, &points[i3]) == 0.0 {
        return Err(degenerate());
    }
    Ok([i0, i1, i2, i3])
}

/// Convex hull as a closed, outward-oriented mesh over the hull vertices.
pub fn convex_hull(points: &[Vec3]) -> Result<TriangleMesh> {
    if points.len() < 4 {
        return Err(invalid("convex hull needs at least four points"));
    }
    if points.iter().any(|p| !p.iter().all(|v| v.is_finite())) {
        return Err(invalid("hull input must be finite"));
    }
    let s = initial_simplex(points)?;
    let inner = s.iter().map(|&i| points[i]).sum::<Vec3>() / 4.0;
    let mut faces: Vec<[usize; 3]> = Vec::new();
    for k in 0..4 {
        let mut f = [s[(k + 1) % 4], s[(k + 2) % 4], s[(k + 3) % 4]];
        if orient(&points[f[0]], &points[f[1]], &points[f[2]], &inner) < 0.0 {
            f.swap(1, 2);
        }
        faces.push(f);
    }
    for (pi, p) in points.iter().enumerate() {
        if s.contains(&pi) {
            continue;
        }
        let visible: Vec<bool> = faces
            .iter()
            .map(|f| orient(&points[f[0]], &points[f[1]], &points[f[2]], p) < 0.0)
            .collect();
        if !visible.iter().any(|&v| v) {
            continue;
        }
        let mut edges: HashSet<(usize, usize)> = HashSet::new();
        for (f, _) in faces.iter().zip(&visible).filter(|(_, &v)| v) {
            for k in 0..3 {
                edges.insert((f[k], f[(k + 1) % 3]));
            }
        }
        let mut next = Vec::with_capacity(faces.len() + 4);
        let mut horizon = Vec::new();
        for (f, &v) in faces.iter().zip(&visible) {
            if !v {
                next.push(*f);
                continue;
            }
            for k in 0..3 {
                let (a, b) = (f[k], f[(k + 1) % 3]);
                if !edges.contains(&(b, a)) {
                    horizon.push((a, b));
                }
            }
        }
        for (a, b) in horizon {
            next.push([a, b, pi]);
        }
        faces = next;
    }
    TriangleMesh::new(points.to_vec(), faces).map(|m| m.compacted())
}
