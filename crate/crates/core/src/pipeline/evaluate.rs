use crate::geometry::{
    chamfer_points, evaluation_lattice, jaccard_similarity, sample_surface, voxelize, voxelize_parity, Lattice,
    TriangleMesh, VoxelGrid,
};
use crate::{Result, Rng, Vec3};

/// Ground truth prepared once per run.
#[derive(Clone, Debug)]
pub struct Truth {
    pub samples: Vec<Vec3>,
    pub grid: VoxelGrid,
}

impl Truth {
    pub fn new(mesh: &TriangleMesh, samples: usize, rng: &mut Rng) -> Result<Self> {
        Self::on(mesh, samples, &evaluation_lattice(), rng)
    }

    pub fn on(mesh: &TriangleMesh, samples: usize, lattice: &Lattice, rng: &mut Rng) -> Result<Self> {
        Ok(Truth { samples: sample_surface(mesh, samples, rng)?.points, grid: voxelize(mesh, lattice)? })
    }
}

/// Chamfer over surface samples (NaN for an empty surface) and Jaccard of
/// the voxelized solid against the truth.
pub fn evaluate(surface: &TriangleMesh, solid: &TriangleMesh, truth: &Truth, samples: usize, rng: &mut Rng) -> Result<(f64, f64)> {
    let chamfer = if surface.is_empty() {
        f64::NAN
    } else {
        chamfer_points(&sample_surface(surface, samples, rng)?.points, &truth.samples)?
    };
    let grid = voxelize_parity(solid, &truth.grid.lattice)?;
    Ok((chamfer, jaccard_similarity(&grid, &truth.grid)?))
}

/// Chamfer and Jaccard between two closed meshes on the evaluation lattice.
pub fn compare_meshes(recon: &TriangleMesh, truth: &TriangleMesh, samples: usize, rng: &mut Rng) -> Result<(f64, f64)> {
    let t = Truth::new(truth, samples, rng)?;
    evaluate(recon, recon, &t, samples, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::shapes::icosphere;
    use crate::rng_from_seed;

    #[test]
    fn identical_meshes() {
        let m = icosphere(0.7, 3);
        let (c, j) = compare_meshes(&m, &m, 4000, &mut rng_from_seed(1)).unwrap();
        assert!(c < 0.02);
        assert_eq!(j, 1.0);
    }

    #[test]
    fn empty_reconstruction() {
        let m = icosphere(0.7, 2);
        let t = Truth::new(&m, 100, &mut rng_from_seed(1)).unwrap();
        let empty = TriangleMesh::default();
        let (c, j) = evaluate(&empty, &empty, &t, 100, &mut rng_from_seed(2)).unwrap();
        assert!(c.is_nan());
        assert_eq!(j, 0.0);
    }
}
