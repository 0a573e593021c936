//! Baseline touch policies: uniform over the reconstruction's surface voxels,
//! and maximal GPIS posterior deviation on the mean's zero-level shell.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::gpis::GpisModel;
use crate::error::invalid;
use crate::geometry::{voxelize_parity, Lattice, TriangleMesh, VoxelGrid};
use crate::uncertainty::{dilated_bounds, SurfaceProbe, TouchTarget};
use crate::{Error, Result, Rng, Vec3};

fn allowed(excluded: &[bool], i: usize) -> bool {
    excluded.get(i).is_none_or(|&e| !e)
}

/// First reachable voxel of a random permutation of the shell of `occupancy`.
pub fn random_target(
    occupancy: &VoxelGrid,
    probe: &SurfaceProbe,
    excluded: &[bool],
    rng: &mut Rng,
) -> Result<TouchTarget> {
    let lattice = &occupancy.lattice;
    let mut shell: Vec<usize> = occupancy.shell().into_iter().filter(|&i| allowed(excluded, i)).collect();
    if shell.is_empty() {
        return Err(Error::Degenerate("reconstruction has no surface voxel".into()));
    }
    shell.shuffle(rng);
    for voxel in shell {
        let (position, direction, flatness, free) = probe.aim(voxel, &dilated_bounds(lattice, &[voxel]), lattice);
        if free {
            return Ok(TouchTarget { voxel, position, direction, cluster: 0, flatness, fallback: false });
        }
    }
    Err(Error::Degenerate("no reachable surface voxel".into()))
}

/// Uniformly drawn reachable surface voxel of the voxelized reconstruction.
pub fn random_policy(
    recon: &TriangleMesh,
    lattice: &Lattice,
    surface_samples: usize,
    excluded: &[bool],
    rng: &mut Rng,
) -> Result<TouchTarget> {
    if recon.is_empty() {
        return Err(invalid("random policy needs a non-empty reconstruction"));
    }
    let occupancy = voxelize_parity(recon, lattice)?;
    let probe = SurfaceProbe::new(recon, surface_samples, rng)?;
    random_target(&occupancy, &probe, excluded, rng)
}

/// Viewing geometry used before any contact exists.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FirstTouch {
    pub camera: Vec3,
    /// Centroid of the visual cloud.
    pub centroid: Vec3,
    /// Distance past the centroid along the viewing line.
    pub depth: f64,
}

impl FirstTouch {
    /// Uses the depth span of the visual points along the viewing line.
    pub fn from_view(camera: &Vec3, points: &[Vec3]) -> Result<Self> {
        if points.is_empty() {
            return Err(invalid("first-touch heuristic needs visual points"));
        }
        let centroid = points.iter().sum::<Vec3>() / points.len() as f64;
        let u = centroid - camera;
        if u.norm() == 0.0 {
            return Err(invalid("camera coincides with the visual centroid"));
        }
        let u = u.normalize();
        let (lo, hi) = points
            .iter()
            .map(|p| (p - centroid).dot(&u))
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), d| (a.min(d), b.max(d)));
        Ok(Self { camera: *camera, centroid, depth: (hi - lo).max(1e-6) })
    }

    /// Point behind the centroid as seen from the camera, approached from the far side.
    pub fn target(&self, lattice: &Lattice, fallback: bool) -> TouchTarget {
        let u = (self.centroid - self.camera).normalize();
        let b = lattice.bounds();
        let p = self.centroid + u * self.depth;
        let position = Vec3::new(p.x.clamp(b.min.x, b.max.x), p.y.clamp(b.min.y, b.max.y), p.z.clamp(b.min.z, b.max.z));
        let inner = b.min + Vec3::repeat(0.5 * lattice.voxel_edge);
        let outer = b.max - Vec3::repeat(0.5 * lattice.voxel_edge);
        let voxel = lattice
            .locate(&Vec3::new(
                position.x.clamp(inner.x, outer.x),
                position.y.clamp(inner.y, outer.y),
                position.z.clamp(inner.z, outer.z),
            ))
            .expect("clamped into the lattice");
        TouchTarget { voxel, position, direction: -u, cluster: 0, flatness: f64::INFINITY, fallback }
    }
}

/// Occupancy of `{mean < 0}` on the voxel centers of `lattice`.
pub fn gpis_occupancy(model: &GpisModel, lattice: &Lattice) -> VoxelGrid {
    let centers: Vec<Vec3> = (0..lattice.len()).map(|i| lattice.center(i)).collect();
    let values = model.mean(&centers).into_iter().map(|m| if m < 0.0 { 1.0 } else { 0.0 }).collect();
    VoxelGrid::from_values(*lattice, values).expect("one value per voxel")
}

/// Shell voxel of maximal posterior deviation, approached against the mean's
/// gradient. Falls back to the first-touch target, flagged, when the shell is empty.
pub fn gpis_policy(
    model: &GpisModel,
    lattice: &Lattice,
    first_touch: &FirstTouch,
    excluded: &[bool],
) -> Result<TouchTarget> {
    if !excluded.is_empty() && excluded.len() != lattice.len() {
        return Err(invalid("exclusion mask does not match the lattice"));
    }
    let occupancy = gpis_occupancy(model, lattice);
    let shell: Vec<usize> = occupancy.shell().into_iter().filter(|&i| allowed(excluded, i)).collect();
    if shell.is_empty() {
        return Ok(first_touch.target(lattice, true));
    }
    let centers: Vec<Vec3> = shell.iter().map(|&i| lattice.center(i)).collect();
    let (_, std) = model.predict(&centers);
    let mut best = 0;
    for (k, s) in std.iter().enumerate() {
        if *s > std[best] {
            best = k;
        }
    }
    let voxel = shell[best];
    let position = centers[best];
    let h = 0.5 * lattice.voxel_edge;
    let probes: Vec<Vec3> = (0..3)
        .flat_map(|a| {
            let mut e = Vec3::zeros();
            e[a] = h;
            [position + e, position - e]
        })
        .collect();
    let m = model.mean(&probes);
    let grad = Vec3::new(m[0] - m[1], m[2] - m[3], m[4] - m[5]);
    let direction = if grad.norm() > 0.0 {
        -grad.normalize()
    } else {
        let c = model.inputs().iter().sum::<Vec3>() / model.inputs().len() as f64;
        let d = c - position;
        if d.norm() > 0.0 { d.normalize() } else { -Vec3::z() }
    };
    Ok(TouchTarget { voxel, position, direction, cluster: 0, flatness: f64::INFINITY, fallback: false })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::baselines::gpis::{gpis_fit, GpisConfig};
    use crate::geometry::{evaluation_lattice, sample_surface, shapes::icosphere, voxelize};
    use crate::rng_from_seed;

    #[test]
    fn random_policy_is_seeded_and_on_shell() {
        let mesh = icosphere(0.6, 3);
        let lattice = evaluation_lattice();
        let a = random_policy(&mesh, &lattice, 5000, &[], &mut rng_from_seed(3)).unwrap();
        let b = random_policy(&mesh, &lattice, 5000, &[], &mut rng_from_seed(3)).unwrap();
        assert_eq!(a, b);
        let grid = voxelize(&mesh, &lattice).unwrap();
        assert!(grid.occupied(a.voxel) && grid.is_shell(a.voxel));
        assert!((a.direction.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn random_policy_is_uniform_over_octants() {
        let mesh = icosphere(0.6, 3);
        let lattice = evaluation_lattice();
        let mut rng = rng_from_seed(11);
        let grid = voxelize(&mesh, &lattice).unwrap();
        let probe = SurfaceProbe::new(&mesh, 5000, &mut rng).unwrap();
        let shell = grid.shell();
        let octant = |p: &Vec3| (p.x > 0.0) as usize + 2 * (p.y > 0.0) as usize + 4 * (p.z > 0.0) as usize;
        let mut expected = [0.0; 8];
        for &v in &shell {
            expected[octant(&lattice.center(v))] += 1000.0 / shell.len() as f64;
        }
        let mut seen = [0.0; 8];
        for _ in 0..1000 {
            let t = random_target(&grid, &probe, &[], &mut rng).unwrap();
            seen[octant(&lattice.center(t.voxel))] += 1.0;
        }
        let chi2: f64 = seen.iter().zip(&expected).map(|(o, e)| (o - e) * (o - e) / e).sum();
        // 0.99 quantile with 7 degrees of freedom.
        assert!(chi2 < 18.475, "chi2 {chi2}");
    }

    #[test]
    fn random_policy_respects_exclusion() {
        let mesh = icosphere(0.6, 2);
        let lattice = evaluation_lattice();
        let grid = voxelize(&mesh, &lattice).unwrap();
        let shell = grid.shell();
        let mut excluded = vec![false; lattice.len()];
        for &v in &shell[1..] {
            excluded[v] = true;
        }
        let t = random_policy(&mesh, &lattice, 2000, &excluded, &mut rng_from_seed(1)).unwrap();
        assert_eq!(t.voxel, shell[0]);
        excluded[shell[0]] = true;
        assert!(random_policy(&mesh, &lattice, 2000, &excluded, &mut rng_from_seed(1)).is_err());
    }

    fn half_sphere_model() -> GpisModel {
        let cloud = sample_surface(&icosphere(0.5, 3), 1500, &mut rng_from_seed(5)).unwrap();
        let keep: Vec<usize> = (0..cloud.len()).filter(|&i| cloud.points[i].y < 0.0).collect();
        gpis_fit(&cloud.subset(&keep), &GpisConfig { max_points: 300, ..GpisConfig::default() }, &mut rng_from_seed(6)).unwrap()
    }

    #[test]
    fn gpis_policy_matches_exhaustive_scan() {
        let model = half_sphere_model();
        let lattice = Lattice::covering(&crate::geometry::Aabb::cube(1.1), 20).unwrap();
        let first = FirstTouch { camera: Vec3::new(0.0, -3.0, 0.0), centroid: Vec3::zeros(), depth: 0.2 };
        let t = gpis_policy(&model, &lattice, &first, &[]).unwrap();
        assert!(!t.fallback);
        let centers: Vec<Vec3> = (0..lattice.len()).map(|i| lattice.center(i)).collect();
        let (mean, std) = model.predict(&centers);
        let mut best = (f64::NEG_INFINITY, 0);
        for i in 0..lattice.len() {
            let inside = |j: usize| mean[j] < 0.0;
            let on_shell = inside(i)
                && (lattice.neighbors(i, false).count() < 6 || lattice.neighbors(i, false).any(|n| !inside(n)));
            if on_shell && std[i] > best.0 {
                best = (std[i], i);
            }
        }
        assert_eq!(t.voxel, best.1);
        // The unobserved back half is the most uncertain.
        assert!(t.position.y > 0.0);
        assert!((t.direction.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn empty_shell_falls_back_to_first_touch() {
        let model = GpisModel::fit(vec![Vec3::zeros()], vec![1.0], &GpisConfig::default()).unwrap();
        let lattice = evaluation_lattice();
        let first = FirstTouch { camera: Vec3::new(0.0, -3.0, 1.0), centroid: Vec3::new(0.0, -0.3, 0.0), depth: 0.4 };
        let t = gpis_policy(&model, &lattice, &first, &[]).unwrap();
        assert!(t.fallback);
        assert_eq!(t, first.target(&lattice, true));
    }

    #[test]
    fn first_touch_beyond_centroid() {
        let camera = Vec3::new(0.0, -3.0, 1.0);
        let pts: Vec<Vec3> = (0..50).map(|i| Vec3::new((i as f64 * 0.37).sin() * 0.5, -0.5 + 0.01 * (i % 7) as f64, (i as f64 * 0.11).cos() * 0.5)).collect();
        let f = FirstTouch::from_view(&camera, &pts).unwrap();
        let t = f.target(&evaluation_lattice(), false);
        let u = (f.centroid - camera).normalize();
        let off = t.position - f.centroid;
        assert!(off.dot(&u) > 0.0);
        assert!(off.cross(&u).norm() < 1e-12);
        assert!((t.direction + u).norm() < 1e-12);
    }
}
