//! Zero level-set extraction with the classic 256-case marching cubes table.

use crate::error::invalid;
use crate::geometry::mc_tables::{EDGE_TABLE, TRI_TABLE};
use crate::geometry::{Aabb, TriangleMesh};
use crate::{Result, Vec3};

const CORNERS: [[usize; 3]; 8] = [
    [0, 0, 0],
    [1, 0, 0],
    [1, 1, 0],
    [0, 1, 0],
    [0, 0, 1],
    [1, 0, 1],
    [1, 1, 1],
    [0, 1, 1],
];

const EDGES: [(usize, usize); 12] = [
    (0, 1),
    (1, 2),
    (2, 3),
    (3, 0),
    (4, 5),
    (5, 6),
    (6, 7),
    (7, 4),
    (0, 4),
    (1, 5),
    (2, 6),
    (3, 7),
];

/// Scalar samples on the nodes of a regular grid.
#[derive(Clone, Debug)]
pub struct NodeGrid {
    pub origin: Vec3,
    pub spacing: Vec3,
    /// Nodes per axis (cells + 1).
    pub dims: [usize; 3],
    pub values: Vec<f64>,
}

impl NodeGrid {
    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.dims[1] + j) * self.dims[2] + k
    }

    #[inline]
    pub fn position(&self, i: usize, j: usize, k: usize) -> Vec3 {
        self.origin + Vec3::new(i as f64, j as f64, k as f64).component_mul(&self.spacing)
    }

    fn layout(bbox: &Aabb, resolution: usize) -> Result<(Vec3, [usize; 3])> {
        if resolution < 2 {
            return Err(invalid("marching cubes resolution must be >= 2"));
        }
        if bbox.is_empty() || bbox.extent().min() <= 0.0 {
            return Err(invalid("marching cubes box must have positive extent"));
        }
        let spacing = bbox.extent() / resolution as f64;
        Ok((spacing, [resolution + 1; 3]))
    }

    /// Evaluate `eval` on every node. `eval` receives batches of positions.
    pub fn sample(
        bbox: &Aabb,
        resolution: usize,
        mut eval: impl FnMut(&[Vec3]) -> Vec<f64>,
    ) -> Result<Self> {
        let (spacing, dims) = Self::layout(bbox, resolution)?;
        let mut grid = NodeGrid {
            origin: bbox.min,
            spacing,
            dims,
            values: Vec::new(),
        };
        let mut positions = Vec::with_capacity(dims.iter().product());
        for i in 0..dims[0] {
            for j in 0..dims[1] {
                for k in 0..dims[2] {
                    positions.push(grid.position(i, j, k));
                }
            }
        }
        grid.values = eval(&positions);
        if grid.values.len() != positions.len() {
            return Err(invalid("field evaluator returned the wrong number of values"));
        }
        Ok(grid)
    }

    /// Coarse-to-fine sampling for fields that behave like distance functions.
    ///
    /// The field is first evaluated every `stride` nodes. Blocks whose corners
    /// share a sign and lie farther than the block diagonal from zero are
    /// filled by trilinear interpolation; the others are split in half per
    /// axis and refined down to single cells. Values near the zero set are
    /// exact for fields with Lipschitz constant up to 2.
    pub fn sample_narrow_band(
        bbox: &Aabb,
        resolution: usize,
        stride: usize,
        mut eval: impl FnMut(&[Vec3]) -> Vec<f64>,
    ) -> Result<Self> {
        let (spacing, dims) = Self::layout(bbox, resolution)?;
        let stride = stride.max(1);
        let mut grid = NodeGrid {
            origin: bbox.min,
            spacing,
            dims,
            values: vec![f64::NAN; dims.iter().product()],
        };
        let coarse: Vec<Vec<usize>> = dims
            .iter()
            .map(|&d| {
                let mut c: Vec<usize> = (0..d).step_by(stride).collect();
                if *c.last().unwrap() != d - 1 {
                    c.push(d - 1);
                }
                c
            })
            .collect();
        let mut pending: Vec<usize> = Vec::new();
        for &i in &coarse[0] {
            for &j in &coarse[1] {
                for &k in &coarse[2] {
                    pending.push(grid.index(i, j, k));
                }
            }
        }
        let mut cells: Vec<([usize; 3], [usize; 3])> = Vec::new();
        for w in coarse[0].windows(2) {
            for v in coarse[1].windows(2) {
                for u in coarse[2].windows(2) {
                    cells.push(([w[0], v[0], u[0]], [w[1], v[1], u[1]]));
                }
            }
        }
        let mut far_cells = Vec::new();
        let mut queued = vec![false; grid.values.len()];
        loop {
            if !pending.is_empty() {
                let pos: Vec<Vec3> = pending
                    .iter()
                    .map(|&n| {
                        let [i, j, k] = grid.coords(n);
                        grid.position(i, j, k)
                    })
                    .collect();
                let vals = eval(&pos);
                if vals.len() != pos.len() {
                    return Err(invalid("field evaluator returned the wrong number of values"));
                }
                for (&n, v) in pending.iter().zip(vals) {
                    grid.values[n] = v;
                }
                pending.clear();
            }
            if cells.is_empty() {
                break;
            }
            let mut next = Vec::new();
            for (lo, hi) in cells.drain(..) {
                if (0..3).all(|a| hi[a] - lo[a] <= 1) {
                    continue;
                }
                let corner_vals = CORNERS.map(|c| {
                    let p = [0, 1, 2].map(|a| if c[a] == 0 { lo[a] } else { hi[a] });
                    grid.values[grid.index(p[0], p[1], p[2])]
                });
                let diag = Vec3::new(
                    (hi[0] - lo[0]) as f64 * spacing.x,
                    (hi[1] - lo[1]) as f64 * spacing.y,
                    (hi[2] - lo[2]) as f64 * spacing.z,
                )
                .norm();
                let far = corner_vals.iter().all(|&v| v > diag)
                    || corner_vals.iter().all(|&v| v < -diag);
                if far {
                    far_cells.push((lo, hi));
                    continue;
                }
                let splits = [0, 1, 2].map(|a| {
                    if hi[a] - lo[a] >= 2 {
                        let m = (lo[a] + hi[a]) / 2;
                        vec![(lo[a], m), (m, hi[a])]
                    } else {
                        vec![(lo[a], hi[a])]
                    }
                });
                for &(x0, x1) in &splits[0] {
                    for &(y0, y1) in &splits[1] {
                        for &(z0, z1) in &splits[2] {
                            for c in CORNERS {
                                let i = if c[0] == 0 { x0 } else { x1 };
                                let j = if c[1] == 0 { y0 } else { y1 };
                                let k = if c[2] == 0 { z0 } else { z1 };
                                let n = grid.index(i, j, k);
                                if grid.values[n].is_nan() && !queued[n] {
                                    queued[n] = true;
                                    pending.push(n);
                                }
                            }
                            next.push(([x0, y0, z0], [x1, y1, z1]));
                        }
                    }
                }
            }
            cells = next;
        }
        let exact: Vec<bool> = grid.values.iter().map(|v| !v.is_nan()).collect();
        for (lo, hi) in far_cells {
            for i in lo[0]..=hi[0] {
                for j in lo[1]..=hi[1] {
                    for k in lo[2]..=hi[2] {
                        let n = grid.index(i, j, k);
                        if exact[n] || !grid.values[n].is_nan() {
                            continue;
                        }
                        let t = [(i, 0), (j, 1), (k, 2)]
                            .map(|(p, a)| (p - lo[a]) as f64 / (hi[a] - lo[a]) as f64);
                        let mut v = 0.0;
                        for c in CORNERS {
                            let q = [0, 1, 2].map(|a| if c[a] == 0 { lo[a] } else { hi[a] });
                            let w: f64 = (0..3)
                                .map(|a| if c[a] == 0 { 1.0 - t[a] } else { t[a] })
                                .product();
                            v += w * grid.values[grid.index(q[0], q[1], q[2])];
                        }
                        grid.values[n] = v;
                    }
                }
            }
        }
        Ok(grid)
    }

    #[inline]
    fn coords(&self, n: usize) -> [usize; 3] {
        let k = n % self.dims[2];
        let j = (n / self.dims[2]) % self.dims[1];
        [n / (self.dims[1] * self.dims[2]), j, k]
    }

    /// Force boundary nodes to be outside so the extracted surface is closed.
    pub fn close_boundary(&mut self) {
        let d = self.dims;
        for i in 0..d[0] {
            for j in 0..d[1] {
                for k in 0..d[2] {
                    if i == 0 || j == 0 || k == 0 || i + 1 == d[0] || j + 1 == d[1] || k + 1 == d[2]
                    {
                        let n = self.index(i, j, k);
                        self.values[n] = self.values[n].max(1e-9);
                    }
                }
            }
        }
    }

    pub fn has_uniform_sign(&self) -> bool {
        let neg = self.values.iter().filter(|&&v| v < 0.0).count();
        neg == 0 || neg == self.values.len()
    }

    /// Extract the zero level set (inside = negative) with outward-facing triangles.
    pub fn extract(&self) -> TriangleMesh {
        let d = self.dims;
        let node_count = self.values.len();
        // One vertex slot per (node, axis) grid edge.
        let mut edge_vertex = vec![u32::MAX; node_count * 3];
        let mut vertices: Vec<Vec3> = Vec::new();
        let mut triangles = Vec::new();
        for i in 0..d[0] - 1 {
            for j in 0..d[1] - 1 {
                for k in 0..d[2] - 1 {
                    let mut case = 0usize;
                    let mut vals = [0.0; 8];
                    for (c, off) in CORNERS.iter().enumerate() {
                        vals[c] = self.values[self.index(i + off[0], j + off[1], k + off[2])];
                        if vals[c] < 0.0 {
                            case |= 1 << c;
                        }
                    }
                    if EDGE_TABLE[case] == 0 {
                        continue;
                    }
                    let mut ids = [0usize; 12];
                    for (e, &(a, b)) in EDGES.iter().enumerate() {
                        if EDGE_TABLE[case] & (1 << e) == 0 {
                            continue;
                        }
                        let (ca, cb) = (CORNERS[a], CORNERS[b]);
                        let (lo, hi, vlo, vhi) = if ca <= cb {
                            (ca, cb, vals[a], vals[b])
                        } else {
                            (cb, ca, vals[b], vals[a])
                        };
                        let axis = (0..3).find(|&x| lo[x] != hi[x]).unwrap();
                        let n = self.index(i + lo[0], j + lo[1], k + lo[2]);
                        let slot = n * 3 + axis;
                        if edge_vertex[slot] == u32::MAX {
                            let p0 = self.position(i + lo[0], j + lo[1], k + lo[2]);
                            let p1 = self.position(i + hi[0], j + hi[1], k + hi[2]);
                            let t = vlo / (vlo - vhi);
                            let mut p = p0 + (p1 - p0) * t;
                            // Keep the exact coordinate along the two fixed axes.
                            for x in 0..3 {
                                if x != axis {
                                    p[x] = p0[x];
                                }
                            }
                            edge_vertex[slot] = vertices.len() as u32;
                            vertices.push(p);
                        }
                        ids[e] = edge_vertex[slot] as usize;
                    }
                    let row = &TRI_TABLE[case];
                    for tri in row.chunks(3) {
                        if tri[0] < 0 {
                            break;
                        }
                        let (a, b, c) = (ids[tri[0] as usize], ids[tri[1] as usize], ids[tri[2] as usize]);
                        if a != b && b != c && a != c {
                            triangles.push([a, c, b]);
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
}

/// Sample `field` on a `resolution^3`-cell grid over `bbox` and extract its zero level set.
///
/// Returns an empty mesh when the field has a uniform sign.
pub fn marching_cubes(
    field: impl Fn(&Vec3) -> f64,
    bbox: &Aabb,
    resolution: usize,
) -> Result<TriangleMesh> {
    let grid = NodeGrid::sample(bbox, resolution, |ps| ps.iter().map(&field).collect())?;
    if let Some(bad) = grid.values.iter().position(|v| !v.is_finite()) {
        return Err(invalid(format!("field is not finite at grid node {bad}")));
    }
    Ok(grid.extract())
}
