//! Shape samples from intermediate latent codes, per-voxel occupancy
//! variance, and touch selection at the most uncertain, flattest region.

use std::collections::VecDeque;

use nalgebra::{Matrix3, SymmetricEigen};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::invalid;
use crate::geometry::{
    sample_surface, voxelize, Aabb, Lattice, RayCaster, TriangleMesh, VoxelGrid,
};
use crate::implicit_net::{surface_mesh, LatentCode, TrainedModel};
use crate::{Error, Result, Rng, Vec3};

/// Occupancy grids (and their meshes) decoded from a set of latent codes.
#[derive(Clone, Debug)]
pub struct ShapeSampleSet {
    pub grids: Vec<VoxelGrid>,
    pub meshes: Vec<TriangleMesh>,
    /// `true` where the code gave a single-sign field (empty mesh and grid).
    pub empty: Vec<bool>,
}

/// Decodes every code, extracts its surface at `mesh_resolution` over the
/// lattice bounds and voxelizes it on `lattice`.
pub fn sample_shapes(
    codes: &[LatentCode],
    model: &TrainedModel,
    lattice: &Lattice,
    mesh_resolution: usize,
) -> Result<ShapeSampleSet> {
    if codes.len() < 2 {
        return Err(invalid("shape sampling needs at least two codes"));
    }
    let bbox = lattice.bounds();
    let mut set = ShapeSampleSet { grids: Vec::new(), meshes: Vec::new(), empty: Vec::new() };
    for z in codes {
        match surface_mesh(&model.decoder, z, &bbox, mesh_resolution)? {
            Some(mesh) => {
                set.grids.push(voxelize(&mesh, lattice)?);
                set.meshes.push(mesh);
                set.empty.push(false);
            }
            None => {
                set.grids.push(VoxelGrid::zeros(*lattice));
                set.meshes.push(TriangleMesh::default());
                set.empty.push(true);
            }
        }
    }
    Ok(set)
}

/// Population variance p(1 - p) of the binary occupancies at every voxel.
pub fn voxel_variance(samples: &ShapeSampleSet) -> Result<VoxelGrid> {
    let first = samples.grids.first().ok_or_else(|| invalid("empty sample set"))?;
    if samples.grids.iter().any(|g| !g.lattice.matches(&first.lattice)) {
        return Err(invalid("shape samples must share one lattice"));
    }
    let s = samples.grids.len() as f64;
    let mut out = VoxelGrid::zeros(first.lattice);
    for (i, v) in out.values.iter_mut().enumerate() {
        let occ = samples.grids.iter().filter(|g| g.occupied(i)).count() as f64;
        let p = occ / s;
        *v = p * (1.0 - p);
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TouchTarget {
    /// Source voxel index on the lattice.
    pub voxel: usize,
    /// Point on the reconstruction the probe is aimed at.
    pub position: Vec3,
    /// Unit direction of probe travel.
    pub direction: Vec3,
    pub cluster: usize,
    /// RMS plane-fit residual of the local surface; infinite when not measurable.
    pub flatness: f64,
    /// Selected by the fallback rule rather than by variance.
    pub fallback: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SelectConfig {
    /// Voxels within this fraction of the maximum count as maximal.
    pub relative_band: f64,
    /// Surface samples drawn from the reconstruction for plane fits.
    pub surface_samples: usize,
}

impl Default for SelectConfig {
    fn default() -> Self {
        SelectConfig { relative_band: 0.05, surface_samples: 20_000 }
    }
}

/// Reconstruction surface prepared for local plane fits and visibility queries.
pub struct SurfaceProbe {
    caster: RayCaster,
    samples: Vec<Vec3>,
    center: Vec3,
    radius: f64,
    centroid: Vec3,
}

impl SurfaceProbe {
    pub fn new(mesh: &TriangleMesh, samples: usize, rng: &mut Rng) -> Result<Self> {
        if mesh.is_empty() {
            return Err(Error::Degenerate("reconstruction mesh is empty".into()));
        }
        let pts = sample_surface(mesh, samples.max(1), rng)?.points;
        let bounds = mesh.bounds();
        let centroid = pts.iter().sum::<Vec3>() / pts.len() as f64;
        Ok(SurfaceProbe {
            caster: RayCaster::new(mesh.clone()),
            samples: pts,
            center: bounds.center(),
            radius: 0.5 * bounds.extent().norm(),
            centroid,
        })
    }

    pub fn mesh(&self) -> &TriangleMesh {
        self.caster.mesh()
    }

    /// Least-squares plane through the samples inside `region`:
    /// `(centroid, unit normal, rms residual)`, `None` with fewer than 3 samples.
    pub fn plane_fit(&self, region: &Aabb) -> Option<(Vec3, Vec3, f64)> {
        let pts: Vec<&Vec3> = self.samples.iter().filter(|p| region.contains(p)).collect();
        plane_fit(&pts)
    }

    /// Distance along `-direction` from `from` to the bounding sphere exit.
    fn exit_distance(&self, from: &Vec3, back: &Vec3) -> f64 {
        let o = from - self.center;
        let b = o.dot(back);
        let c = o.norm_squared() - self.radius * self.radius;
        let disc = (b * b - c).max(0.0);
        (-b + disc.sqrt()).max(0.0)
    }

    /// True when the straight approach along `direction` to `position` is
    /// free of the reconstruction.
    pub fn reachable(&self, position: &Vec3, direction: &Vec3) -> bool {
        let back = -direction;
        let eps = 1e-6 * (1.0 + self.radius);
        let start = position + back * eps;
        let len = self.exit_distance(&start, &back);
        !self.caster.occluded(&start, &back, len)
    }

    /// Target point and approach for a voxel: the voxel center is projected
    /// on the surface along the local plane normal and the approach is the
    /// normal sign whose backward ray leaves the bounding sphere unobstructed.
    /// Returns the target and whether the approach is free.
    pub fn aim(&self, voxel: usize, region: &Aabb, lattice: &Lattice) -> (Vec3, Vec3, f64, bool) {
        let c = lattice.center(voxel);
        let (normal, flatness, plane) = match self.plane_fit(region) {
            Some((p, n, r)) => (n, r, Some(p)),
            None => {
                let d = c - self.centroid;
                let n = if d.norm() > 1e-12 { d.normalize() } else { Vec3::z() };
                (n, f64::INFINITY, None)
            }
        };
        let mut position = None;
        let mut best = f64::INFINITY;
        for dir in [normal, -normal] {
            if let Some((t, _)) = self.caster.nearest(&c, &dir, best) {
                if t < best {
                    best = t;
                    position = Some(c + dir * t);
                }
            }
        }
        let position = position.unwrap_or_else(|| match plane {
            Some(p) => c - normal * normal.dot(&(c - p)),
            None => c,
        });
        let position = clamp_to(&lattice.bounds(), position);
        // Prefer moving against the normal that points away from the body.
        let outward = if normal.dot(&(position - self.centroid)) >= 0.0 { normal } else { -normal };
        for dir in [-outward, outward] {
            if self.reachable(&position, &dir) {
                return (position, dir, flatness, true);
            }
        }
        (position, -outward, flatness, false)
    }
}

fn clamp_to(b: &Aabb, p: Vec3) -> Vec3 {
    Vec3::new(
        p.x.clamp(b.min.x, b.max.x),
        p.y.clamp(b.min.y, b.max.y),
        p.z.clamp(b.min.z, b.max.z),
    )
}

/// Total least-squares plane: `(centroid, unit normal, rms residual)`.
pub fn plane_fit(points: &[&Vec3]) -> Option<(Vec3, Vec3, f64)> {
    if points.len() < 3 {
        return None;
    }
    let n = points.len() as f64;
    let c = points.iter().copied().sum::<Vec3>() / n;
    let mut cov = Matrix3::zeros();
    for p in points {
        let d = *p - c;
        cov += d * d.transpose();
    }
    let eig = SymmetricEigen::new(cov);
    let (imin, _) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))?;
    let normal: Vec3 = eig.eigenvectors.column(imin).into_owned().normalize();
    let ss: f64 = points.iter().map(|p| (*p - c).dot(&normal).powi(2)).sum();
    Some((c, normal, (ss / n).sqrt()))
}

/// Voxel-center bounds of `voxels`, grown by one voxel on every side.
pub(crate) fn dilated_bounds(lattice: &Lattice, voxels: &[usize]) -> Aabb {
    let mut b = Aabb::empty();
    for &v in voxels {
        b.grow(&lattice.center(v));
    }
    let pad = Vec3::repeat(1.5 * lattice.voxel_edge);
    Aabb::new(b.min - pad, b.max + pad)
}

/// 26-connected components of `members`, in order of their smallest index.
pub fn clusters(lattice: &Lattice, members: &[bool]) -> Vec<Vec<usize>> {
    let mut seen = vec![false; members.len()];
    let mut out = Vec::new();
    for start in 0..members.len() {
        if !members[start] || seen[start] {
            continue;
        }
        seen[start] = true;
        let mut comp = Vec::new();
        let mut queue = VecDeque::from([start]);
        while let Some(v) = queue.pop_front() {
            comp.push(v);
            for n in lattice.neighbors(v, true) {
                if members[n] && !seen[n] {
                    seen[n] = true;
                    queue.push_back(n);
                }
            }
        }
        comp.sort_unstable();
        out.push(comp);
    }
    out
}

/// Member voxel closest to the mean of the cluster's voxel centers.
fn central_voxel(lattice: &Lattice, cluster: &[usize]) -> usize {
    let mean = cluster.iter().map(|&v| lattice.center(v)).sum::<Vec3>() / cluster.len() as f64;
    *cluster
        .iter()
        .min_by(|&&a, &&b| {
            (lattice.center(a) - mean)
                .norm_squared()
                .total_cmp(&(lattice.center(b) - mean).norm_squared())
        })
        .expect("non-empty cluster")
}

/// Picks the next touch from a variance grid.
///
/// `excluded` voxels (earlier misses) never become candidates. With no
/// positive variance left, a random surface voxel of the reconstruction is
/// used and the result is flagged.
pub fn select_touch(
    variance: &VoxelGrid,
    surface: &SurfaceProbe,
    cfg: &SelectConfig,
    excluded: &[bool],
    rng: &mut Rng,
) -> Result<TouchTarget> {
    let lattice = &variance.lattice;
    if variance.values.iter().any(|&v| !(v >= 0.0)) {
        return Err(invalid("variance grid must be non-negative"));
    }
    if !excluded.is_empty() && excluded.len() != variance.values.len() {
        return Err(invalid("exclusion mask does not match the grid"));
    }
    let allowed = |i: usize| excluded.get(i).map_or(true, |&e| !e);
    let max = (0..variance.values.len())
        .filter(|&i| allowed(i))
        .map(|i| variance.values[i])
        .fold(0.0, f64::max);
    if max <= 0.0 {
        return fallback_touch(lattice, surface, excluded, rng);
    }
    let threshold = (1.0 - cfg.relative_band) * max;
    let members: Vec<bool> = (0..variance.values.len())
        .map(|i| allowed(i) && variance.values[i] >= threshold)
        .collect();
    let mut best: Option<(f64, usize, Vec<usize>)> = None;
    for (id, comp) in clusters(lattice, &members).into_iter().enumerate() {
        let r = surface
            .plane_fit(&dilated_bounds(lattice, &comp))
            .map_or(f64::INFINITY, |p| p.2);
        if best.as_ref().map_or(true, |b| r < b.0) {
            best = Some((r, id, comp));
        }
    }
    let (_, id, comp) = best.expect("at least one candidate");
    let voxel = central_voxel(lattice, &comp);
    let (position, direction, flatness, _) = surface.aim(voxel, &dilated_bounds(lattice, &comp), lattice);
    Ok(TouchTarget { voxel, position, direction, cluster: id, flatness, fallback: false })
}

fn fallback_touch(
    lattice: &Lattice,
    surface: &SurfaceProbe,
    excluded: &[bool],
    rng: &mut Rng,
) -> Result<TouchTarget> {
    let grid = voxelize(surface.mesh(), lattice)?;
    let shell: Vec<usize> = grid
        .shell()
        .into_iter()
        .filter(|&i| excluded.get(i).map_or(true, |&e| !e))
        .collect();
    if shell.is_empty() {
        return Err(Error::Degenerate("reconstruction has no surface voxel to touch".into()));
    }
    let voxel = shell[rng.random_range(0..shell.len())];
    let (position, direction, flatness, _) =
        surface.aim(voxel, &dilated_bounds(lattice, &[voxel]), lattice);
    Ok(TouchTarget { voxel, position, direction, cluster: 0, flatness, fallback: true })
}

/// Marks `voxel` and every voxel of its candidate cluster as excluded.
pub fn exclude_cluster(variance: &VoxelGrid, cfg: &SelectConfig, excluded: &mut Vec<bool>, voxel: usize) {
    if excluded.len() != variance.values.len() {
        *excluded = vec![false; variance.values.len()];
    }
    excluded[voxel] = true;
    let max = variance
        .values
        .iter()
        .enumerate()
        .filter(|(i, _)| !excluded[*i] || *i == voxel)
        .map(|(_, &v)| v)
        .fold(0.0, f64::max);
    if max <= 0.0 {
        return;
    }
    let threshold = (1.0 - cfg.relative_band) * max;
    let members: Vec<bool> = variance.values.iter().map(|&v| v >= threshold).collect();
    if !members[voxel] {
        return;
    }
    for comp in clusters(&variance.lattice, &members) {
        if comp.binary_search(&voxel).is_ok() {
            for v in comp {
                excluded[v] = true;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::shapes::{box_mesh, icosphere};
    use crate::geometry::evaluation_lattice;
    use crate::rng_from_seed;

    fn set_of(grids: Vec<VoxelGrid>) -> ShapeSampleSet {
        let n = grids.len();
        ShapeSampleSet { grids, meshes: vec![TriangleMesh::default(); n], empty: vec![false; n] }
    }

    #[test]
    fn variance_of_half_occupied_voxel() {
        let l = Lattice::new(Vec3::zeros(), 1.0, [2, 1, 1]).unwrap();
        let g = |a: f64| VoxelGrid::from_values(l, vec![a, 1.0]).unwrap();
        let v = voxel_variance(&set_of(vec![g(1.0), g(1.0), g(0.0), g(0.0)])).unwrap();
        assert_eq!(v.values, vec![0.25, 0.0]);
    }

    #[test]
    fn variance_matches_direct_formula() {
        let mut rng = rng_from_seed(1);
        let l = Lattice::new(Vec3::zeros(), 1.0, [5, 4, 3]).unwrap();
        for s in 2..7 {
            let grids: Vec<VoxelGrid> = (0..s)
                .map(|_| VoxelGrid::from_values(l, (0..60).map(|_| rng.random_range(0..2) as f64).collect()).unwrap())
                .collect();
            let v = voxel_variance(&set_of(grids.clone())).unwrap();
            for i in 0..60 {
                let xs: Vec<f64> = grids.iter().map(|g| g.values[i]).collect();
                let mean = xs.iter().sum::<f64>() / s as f64;
                let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / s as f64;
                assert!((var - v.values[i]).abs() <= 1e-12);
                assert!(v.values[i] <= 0.25);
            }
        }
    }

    #[test]
    fn identical_samples_have_zero_variance() {
        let lattice = evaluation_lattice();
        let g = voxelize(&icosphere(0.7, 2), &lattice).unwrap();
        let v = voxel_variance(&set_of(vec![g.clone(), g.clone(), g])).unwrap();
        assert_eq!(v.max_value(), 0.0);
    }

    #[test]
    fn plane_fit_recovers_plane() {
        let pts: Vec<Vec3> = (0..50).map(|i| Vec3::new((i % 7) as f64, (i / 7) as f64, 2.0)).collect();
        let refs: Vec<&Vec3> = pts.iter().collect();
        let (c, n, r) = plane_fit(&refs).unwrap();
        assert!((c.z - 2.0).abs() < 1e-12);
        assert!((n.z.abs() - 1.0).abs() < 1e-12);
        assert!(r < 1e-12);
        assert!(plane_fit(&refs[..2]).is_none());
    }

    fn cube_probe() -> SurfaceProbe {
        SurfaceProbe::new(&box_mesh(Vec3::repeat(0.6), 6), 20_000, &mut rng_from_seed(2)).unwrap()
    }

    #[test]
    fn single_max_voxel_is_chosen() {
        let lattice = evaluation_lattice();
        let probe = cube_probe();
        let mut v = VoxelGrid::zeros(lattice);
        let target = lattice.locate(&Vec3::new(0.6, 0.05, 0.05)).unwrap();
        v.values[target] = 0.25;
        v.values[lattice.locate(&Vec3::new(-0.3, 0.0, 0.0)).unwrap()] = 0.1;
        let t = select_touch(&v, &probe, &SelectConfig::default(), &[], &mut rng_from_seed(3)).unwrap();
        assert_eq!(t.voxel, target);
        assert!(!t.fallback);
        assert!((t.direction.norm() - 1.0).abs() < 1e-12);
        // Face at x = 0.6: approach travels along -x and lands on the face.
        assert!((t.direction - Vec3::new(-1.0, 0.0, 0.0)).norm() < 1e-6, "{:?}", t.direction);
        assert!((t.position.x - 0.6).abs() < 1e-9);
    }

    #[test]
    fn flat_face_beats_corner() {
        let lattice = evaluation_lattice();
        let probe = cube_probe();
        let mut v = VoxelGrid::zeros(lattice);
        let face = lattice.locate(&Vec3::new(0.0, 0.0, 0.6)).unwrap();
        let corner = lattice.locate(&Vec3::new(0.6, 0.6, 0.6)).unwrap();
        v.values[face] = 0.25;
        v.values[corner] = 0.25;
        // Plane-fit oracle: the face region is exactly planar, the corner is not.
        let rf = probe.plane_fit(&dilated_bounds(&lattice, &[face])).unwrap().2;
        let rc = probe.plane_fit(&dilated_bounds(&lattice, &[corner])).unwrap().2;
        assert!(rf < 1e-9 && rc > 1e-3);
        let t = select_touch(&v, &probe, &SelectConfig::default(), &[], &mut rng_from_seed(4)).unwrap();
        assert_eq!(t.voxel, face);
        // Scaling the grid does not change the choice.
        let scaled = VoxelGrid::from_values(lattice, v.values.iter().map(|x| x * 0.3).collect()).unwrap();
        let t2 = select_touch(&scaled, &probe, &SelectConfig::default(), &[], &mut rng_from_seed(4)).unwrap();
        assert_eq!(t2.voxel, face);
    }

    #[test]
    fn zero_variance_falls_back_to_shell() {
        let lattice = evaluation_lattice();
        let probe = cube_probe();
        let v = VoxelGrid::zeros(lattice);
        let t = select_touch(&v, &probe, &SelectConfig::default(), &[], &mut rng_from_seed(5)).unwrap();
        assert!(t.fallback);
        let g = voxelize(probe.mesh(), &lattice).unwrap();
        assert!(g.occupied(t.voxel) && g.is_shell(t.voxel));
    }

    #[test]
    fn exclusion_moves_selection() {
        let lattice = evaluation_lattice();
        let probe = cube_probe();
        let mut v = VoxelGrid::zeros(lattice);
        let a = lattice.locate(&Vec3::new(0.0, 0.0, 0.6)).unwrap();
        let b = lattice.locate(&Vec3::new(0.0, 0.6, 0.0)).unwrap();
        v.values[a] = 0.25;
        v.values[b] = 0.2;
        let cfg = SelectConfig::default();
        let mut ex = Vec::new();
        exclude_cluster(&v, &cfg, &mut ex, a);
        let t = select_touch(&v, &probe, &cfg, &ex, &mut rng_from_seed(6)).unwrap();
        assert_eq!(t.voxel, b);
    }

    #[test]
    fn clusters_are_26_connected() {
        let l = Lattice::new(Vec3::zeros(), 1.0, [4, 4, 4]).unwrap();
        let mut m = vec![false; 64];
        m[l.index(0, 0, 0)] = true;
        m[l.index(1, 1, 1)] = true;
        m[l.index(3, 3, 3)] = true;
        let c = clusters(&l, &m);
        assert_eq!(c.len(), 2);
        assert_eq!(c[0].len(), 2);
    }
}
