//! Reconstruction accuracy: symmetric Chamfer distance and voxel Jaccard similarity.

use crate::error::invalid;
use crate::geometry::{NearestIndex, PointCloud, VoxelGrid};
use crate::{Result, Vec3};

fn mean_nearest(from: &[Vec3], to: &NearestIndex) -> f64 {
    let sum: f64 = from
        .iter()
        .map(|p| to.nearest(p).map(|(_, d)| d).unwrap_or(0.0))
        .sum();
    sum / from.len() as f64
}

/// Average of the two directed mean nearest-neighbour distances.
pub fn chamfer_distance(a: &PointCloud, b: &PointCloud) -> Result<f64> {
    chamfer_points(&a.points, &b.points)
}

pub fn chamfer_points(a: &[Vec3], b: &[Vec3]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(invalid("chamfer distance needs two non-empty clouds"));
    }
    let ia = NearestIndex::new(a);
    let ib = NearestIndex::new(b);
    Ok(0.5 * (mean_nearest(a, &ib) + mean_nearest(b, &ia)))
}

/// |A ∩ B| / |A ∪ B| over occupied voxels; 1 when both grids are empty.
pub fn jaccard_similarity(a: &VoxelGrid, b: &VoxelGrid) -> Result<f64> {
    if !a.lattice.matches(&b.lattice) {
        return Err(invalid("jaccard similarity needs grids on the same lattice"));
    }
    let (mut inter, mut union) = (0usize, 0usize);
    for (&x, &y) in a.values.iter().zip(&b.values) {
        let (x, y) = (x != 0.0, y != 0.0);
        inter += (x && y) as usize;
        union += (x || y) as usize;
    }
    Ok(if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    })
}
