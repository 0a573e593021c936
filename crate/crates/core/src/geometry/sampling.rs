use rand::Rng as _;

use crate::geometry::{PointCloud, Source, TriangleMesh};
use crate::{Error, Result, Rng, Vec3};

/// Area-weighted uniform surface samples with per-triangle unit normals.
///
/// Normals follow the winding; for closed meshes with negative signed volume
/// they are flipped so they point outward.
pub fn sample_surface(mesh: &TriangleMesh, n: usize, rng: &mut Rng) -> Result<PointCloud> {
    if mesh.is_empty() || n == 0 {
        return Err(crate::error::invalid("sampling needs a non-empty mesh and n >= 1"));
    }
    let mut cumulative = Vec::with_capacity(mesh.triangles.len());
    let mut total = 0.0;
    for t in 0..mesh.triangles.len() {
        total += mesh.triangle_area(t);
        cumulative.push(total);
    }
    if !(total > 0.0) {
        return Err(Error::Degenerate("mesh has zero surface area".into()));
    }
    let flip = mesh.is_watertight() && mesh.signed_volume() < 0.0;
    let mut points = Vec::with_capacity(n);
    let mut normals = Vec::with_capacity(n);
    for _ in 0..n {
        let r = rng.random::<f64>() * total;
        let tri = cumulative
            .partition_point(|&c| c <= r)
            .min(mesh.triangles.len() - 1);
        let [a, b, c] = mesh.corners(tri);
        let (u, v) = (rng.random::<f64>(), rng.random::<f64>());
        let su = u.sqrt();
        points.push(a * (1.0 - su) + b * (su * (1.0 - v)) + c * (su * v));
        let nrm = mesh.triangle_normal(tri);
        normals.push(if flip { -nrm } else { nrm });
    }
    PointCloud::new(points, Some(normals), Source::Visual)
}

/// Uniformly random subset of at most `max` points (order preserved).
pub fn random_subset(cloud: &PointCloud, max: usize, rng: &mut Rng) -> PointCloud {
    if cloud.len() <= max {
        return cloud.clone();
    }
    let mut idx = rand::seq::index::sample(rng, cloud.len(), max).into_vec();
    idx.sort_unstable();
    cloud.subset(&idx)
}

/// Points sampled uniformly from the cube `[-half, half]^3`.
pub fn uniform_in_cube(n: usize, half: f64, rng: &mut Rng) -> Vec<Vec3> {
    (0..n)
        .map(|_| {
            Vec3::new(
                rng.random_range(-half..half),
                rng.random_range(-half..half),
                rng.random_range(-half..half),
            )
        })
        .collect()
}
