use std::num::NonZero;

use kiddo::{ImmutableKdTree, SquaredEuclidean};

use crate::Vec3;

/// Exact nearest-neighbour queries over a fixed point set.
pub struct NearestIndex {
    points: Vec<Vec3>,
    tree: Option<ImmutableKdTree<f64, 3>>,
}

impl NearestIndex {
    pub fn new(points: &[Vec3]) -> Self {
        let entries: Vec<[f64; 3]> = points.iter().map(|p| [p.x, p.y, p.z]).collect();
        // Tiny sets are scanned directly.
        let tree = if entries.len() > 32 {
            ImmutableKdTree::new_from_slice(&entries).ok()
        } else {
            None
        };
        Self {
            points: points.to_vec(),
            tree,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Index and Euclidean distance of the closest point.
    pub fn nearest(&self, q: &Vec3) -> Option<(usize, f64)> {
        if self.points.is_empty() {
            return None;
        }
        let idx = match &self.tree {
            Some(tree) => tree
                .query(&[q.x, q.y, q.z])
                .nearest_one::<SquaredEuclidean<f64>>()
                .execute()
                .item as usize,
            None => {
                let mut best = (0, f64::INFINITY);
                for (i, p) in self.points.iter().enumerate() {
                    let d = (p - q).norm_squared();
                    if d < best.1 {
                        best = (i, d);
                    }
                }
                best.0
            }
        };
        Some((idx, (self.points[idx] - q).norm()))
    }

    /// The `k` closest points, nearest first.
    pub fn k_nearest(&self, q: &Vec3, k: usize) -> Vec<(usize, f64)> {
        let k = k.min(self.points.len());
        let Some(k_nz) = NonZero::new(k) else {
            return Vec::new();
        };
        let mut out: Vec<(usize, f64)> = match &self.tree {
            Some(tree) => tree
                .query(&[q.x, q.y, q.z])
                .nearest_n::<SquaredEuclidean<f64>>(k_nz)
                .execute()
                .into_iter()
                .map(|r| (r.item as usize, (self.points[r.item as usize] - q).norm()))
                .collect(),
            None => self
                .points
                .iter()
                .enumerate()
                .map(|(i, p)| (i, (p - q).norm()))
                .collect(),
        };
        out.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
        out.truncate(k);
        out
    }
}
