use serde::{Deserialize, Serialize};

use crate::error::invalid;
use crate::geometry::Aabb;
use crate::{Result, Vec3};

/// Regular voxel lattice: `dims` cubes of side `voxel_edge` starting at `origin` (min corner).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Lattice {
    pub origin: Vec3,
    pub voxel_edge: f64,
    pub dims: [usize; 3],
}

impl Lattice {
    pub fn new(origin: Vec3, voxel_edge: f64, dims: [usize; 3]) -> Result<Self> {
        if dims.iter().any(|&d| d == 0) {
            return Err(invalid("lattice dims must be >= 1"));
        }
        if !(voxel_edge > 0.0) || !voxel_edge.is_finite() {
            return Err(invalid("voxel edge must be positive"));
        }
        Ok(Self {
            origin,
            voxel_edge,
            dims,
        })
    }

    /// Cubic voxels covering `bbox`, `resolution` voxels along its longest axis.
    pub fn covering(bbox: &Aabb, resolution: usize) -> Result<Self> {
        if resolution == 0 {
            return Err(invalid("resolution must be >= 1"));
        }
        let ext = bbox.extent();
        let edge = ext.max() / resolution as f64;
        let dims = [0, 1, 2].map(|i| ((ext[i] / edge).round() as usize).max(1));
        Self::new(bbox.min, edge, dims)
    }

    pub fn len(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Row-major linear index, last axis fastest.
    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.dims[1] + j) * self.dims[2] + k
    }

    #[inline]
    pub fn coords(&self, idx: usize) -> [usize; 3] {
        let k = idx % self.dims[2];
        let j = (idx / self.dims[2]) % self.dims[1];
        let i = idx / (self.dims[1] * self.dims[2]);
        [i, j, k]
    }

    pub fn center(&self, idx: usize) -> Vec3 {
        let [i, j, k] = self.coords(idx);
        self.center_of(i, j, k)
    }

    #[inline]
    pub fn center_of(&self, i: usize, j: usize, k: usize) -> Vec3 {
        self.origin
            + Vec3::new(i as f64 + 0.5, j as f64 + 0.5, k as f64 + 0.5) * self.voxel_edge
    }

    pub fn bounds(&self) -> Aabb {
        let size = Vec3::new(
            self.dims[0] as f64,
            self.dims[1] as f64,
            self.dims[2] as f64,
        ) * self.voxel_edge;
        Aabb::new(self.origin, self.origin + size)
    }

    /// Voxel containing `p`, if inside the lattice.
    pub fn locate(&self, p: &Vec3) -> Option<usize> {
        let mut c = [0usize; 3];
        for a in 0..3 {
            let f = ((p[a] - self.origin[a]) / self.voxel_edge).floor();
            if f < 0.0 || f >= self.dims[a] as f64 {
                return None;
            }
            c[a] = f as usize;
        }
        Some(self.index(c[0], c[1], c[2]))
    }

    /// Same lattice up to a tolerance relative to the voxel edge (grids read from disk store f32).
    pub fn matches(&self, other: &Lattice) -> bool {
        let tol = 1e-6 * self.voxel_edge.max(other.voxel_edge);
        self.dims == other.dims
            && (self.voxel_edge - other.voxel_edge).abs() <= tol
            && (self.origin - other.origin).amax() <= tol
    }

    /// Neighbours within Chebyshev distance 1 (26-connectivity) or face neighbours (6).
    pub fn neighbors(&self, idx: usize, full: bool) -> impl Iterator<Item = usize> + '_ {
        let [i, j, k] = self.coords(idx);
        let d = self.dims;
        (-1i64..=1)
            .flat_map(|a| (-1i64..=1).flat_map(move |b| (-1i64..=1).map(move |c| (a, b, c))))
            .filter(move |&(a, b, c)| {
                let n = a.abs() + b.abs() + c.abs();
                n > 0 && (full || n == 1)
            })
            .filter_map(move |(a, b, c)| {
                let (x, y, z) = (i as i64 + a, j as i64 + b, k as i64 + c);
                if x < 0 || y < 0 || z < 0 {
                    return None;
                }
                let (x, y, z) = (x as usize, y as usize, z as usize);
                (x < d[0] && y < d[1] && z < d[2]).then(|| (x * d[1] + y) * d[2] + z)
            })
    }
}

/// Scalar value per voxel on a [`Lattice`].
#[derive(Clone, Debug, PartialEq)]
pub struct VoxelGrid {
    pub lattice: Lattice,
    pub values: Vec<f64>,
}

impl VoxelGrid {
    pub fn zeros(lattice: Lattice) -> Self {
        Self {
            values: vec![0.0; lattice.len()],
            lattice,
        }
    }

    pub fn from_values(lattice: Lattice, values: Vec<f64>) -> Result<Self> {
        if values.len() != lattice.len() {
            return Err(invalid(format!(
                "{} values for a lattice of {} voxels",
                values.len(),
                lattice.len()
            )));
        }
        Ok(Self { lattice, values })
    }

    pub fn occupied(&self, idx: usize) -> bool {
        self.values[idx] != 0.0
    }

    pub fn occupied_count(&self) -> usize {
        self.values.iter().filter(|&&v| v != 0.0).count()
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Occupied voxels with at least one face neighbour that is empty or outside the lattice.
    pub fn shell(&self) -> Vec<usize> {
        (0..self.values.len())
            .filter(|&idx| self.occupied(idx) && self.is_shell(idx))
            .collect()
    }

    pub fn is_shell(&self, idx: usize) -> bool {
        let [i, j, k] = self.lattice.coords(idx);
        let d = self.lattice.dims;
        if i == 0 || j == 0 || k == 0 || i + 1 == d[0] || j + 1 == d[1] || k + 1 == d[2] {
            return true;
        }
        self.lattice.neighbors(idx, false).any(|n| !self.occupied(n))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn index_roundtrip() {
        let l = Lattice::new(Vec3::zeros(), 1.0, [3, 4, 5]).unwrap();
        for idx in 0..l.len() {
            let [i, j, k] = l.coords(idx);
            assert_eq!(l.index(i, j, k), idx);
            assert_eq!(l.locate(&l.center(idx)), Some(idx));
        }
    }

    #[test]
    fn covering_cube() {
        let l = Lattice::covering(&Aabb::cube(1.1), 40).unwrap();
        assert_eq!(l.dims, [40, 40, 40]);
        assert!((l.voxel_edge - 0.055).abs() < 1e-15);
    }

    #[test]
    fn neighbour_counts() {
        let l = Lattice::new(Vec3::zeros(), 1.0, [3, 3, 3]).unwrap();
        let c = l.index(1, 1, 1);
        assert_eq!(l.neighbors(c, true).count(), 26);
        assert_eq!(l.neighbors(c, false).count(), 6);
        assert_eq!(l.neighbors(0, true).count(), 7);
    }

    #[test]
    fn rejects_zero_dims() {
        assert!(Lattice::new(Vec3::zeros(), 1.0, [0, 1, 1]).is_err());
    }
}
