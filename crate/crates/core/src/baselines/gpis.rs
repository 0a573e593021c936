//! Gaussian-process implicit surface with the exponential kernel.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::invalid;
use crate::geometry::{random_subset, Aabb, NodeGrid, PointCloud, TriangleMesh};
use crate::implicit_net::{gemm_ab, gemm_abt};
use crate::{Error, Result, Rng, Vec3};

/// Kernel and data settings.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GpisConfig {
    /// Distance of the off-surface training points along the normals.
    pub offset: f64,
    pub sigma_f: f64,
    pub length_scale: f64,
    /// Observation noise standard deviation.
    pub noise: f64,
    /// Surface points kept after random subsampling.
    pub max_points: usize,
}

impl Default for GpisConfig {
    fn default() -> Self {
        Self { offset: 0.05, sigma_f: 1.0, length_scale: 0.4, noise: 1e-6, max_points: 800 }
    }
}

impl GpisConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_f > 0.0 && self.length_scale > 0.0) {
            return Err(invalid("GPIS sigma_f and length scale must be positive"));
        }
        if !(self.noise >= 0.0 && self.offset >= 0.0) {
            return Err(invalid("GPIS noise and offset must be non-negative"));
        }
        if self.max_points == 0 {
            return Err(invalid("GPIS needs max_points >= 1"));
        }
        Ok(())
    }
}

/// Fitted posterior.
#[derive(Clone, Debug)]
pub struct GpisModel {
    inputs: Vec<Vec3>,
    targets: Vec<f64>,
    sigma_f: f64,
    length_scale: f64,
    /// Diagonal term actually added (noise variance plus any escalated jitter).
    pub jitter: f64,
    /// K^-1 y.
    weights: Vec<f64>,
    /// L^-1 for K = L L^T, row-major n x n.
    l_inv: Vec<f64>,
}

const CHUNK: usize = 256;
const MAX_JITTER_STEPS: usize = 8;

impl GpisModel {
    /// Fit to arbitrary inputs and targets.
    pub fn fit(inputs: Vec<Vec3>, targets: Vec<f64>, cfg: &GpisConfig) -> Result<Self> {
        cfg.validate()?;
        if inputs.is_empty() || inputs.len() != targets.len() {
            return Err(invalid("GPIS needs matching non-empty inputs and targets"));
        }
        let n = inputs.len();
        let s2 = cfg.sigma_f * cfg.sigma_f;
        let k = DMatrix::from_fn(n, n, |i, j| s2 * (-(inputs[i] - inputs[j]).norm() / cfg.length_scale).exp());
        let mut jitter = cfg.noise * cfg.noise;
        let mut step = 0;
        let chol = loop {
            let mut kj = k.clone();
            for i in 0..n {
                kj[(i, i)] += jitter;
            }
            if let Some(c) = kj.cholesky() {
                break c;
            }
            step += 1;
            if step > MAX_JITTER_STEPS {
                return Err(Error::Factorization(format!("kernel matrix not positive definite with jitter {jitter:e}")));
            }
            jitter = if jitter > 0.0 { (jitter * 10.0).max(1e-10 * s2) } else { 1e-10 * s2 };
        };
        let weights = chol.solve(&DVector::from_column_slice(&targets));
        let l_inv = chol.l().solve_lower_triangular(&DMatrix::identity(n, n)).ok_or_else(|| Error::Factorization("singular factor".into()))?;
        let l_inv = l_inv.transpose().as_slice().to_vec();
        Ok(Self {
            inputs,
            targets,
            sigma_f: cfg.sigma_f,
            length_scale: cfg.length_scale,
            jitter,
            weights: weights.as_slice().to_vec(),
            l_inv,
        })
    }

    pub fn inputs(&self) -> &[Vec3] {
        &self.inputs
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    pub fn sigma_f(&self) -> f64 {
        self.sigma_f
    }

    fn cross_kernel(&self, xs: &[Vec3]) -> Vec<f64> {
        let s2 = self.sigma_f * self.sigma_f;
        let mut out = Vec::with_capacity(xs.len() * self.inputs.len());
        for x in xs {
            out.extend(self.inputs.iter().map(|p| s2 * (-(x - p).norm() / self.length_scale).exp()));
        }
        out
    }

    /// Posterior mean at each query.
    pub fn mean(&self, xs: &[Vec3]) -> Vec<f64> {
        let n = self.inputs.len();
        let mut out = Vec::with_capacity(xs.len());
        for chunk in xs.chunks(CHUNK) {
            let kq = self.cross_kernel(chunk);
            let mut m = vec![0.0; chunk.len()];
            gemm_ab(chunk.len(), n, 1, &kq, &self.weights, &mut m);
            out.extend(m);
        }
        out
    }

    /// Posterior mean and standard deviation at each query.
    pub fn predict(&self, xs: &[Vec3]) -> (Vec<f64>, Vec<f64>) {
        let n = self.inputs.len();
        let s2 = self.sigma_f * self.sigma_f;
        let mut mean = Vec::with_capacity(xs.len());
        let mut std = Vec::with_capacity(xs.len());
        let mut v = Vec::new();
        for chunk in xs.chunks(CHUNK) {
            let m = chunk.len();
            let kq = self.cross_kernel(chunk);
            let mut mu = vec![0.0; m];
            gemm_ab(m, n, 1, &kq, &self.weights, &mut mu);
            mean.extend(mu);
            v.resize(m * n, 0.0);
            // Row r of V is L^-1 k(x_r).
            gemm_abt(m, n, n, &kq, &self.l_inv, &mut v);
            std.extend(v.chunks(n).map(|row| (s2 - row.iter().map(|a| a * a).sum::<f64>()).max(0.0).sqrt()));
        }
        (mean, std)
    }
}

/// Fit to a surface cloud: zero targets on the surface and signed targets
/// `+offset` / `-offset` displaced outward / inward along the normals.
pub fn gpis_fit(surface: &PointCloud, cfg: &GpisConfig, rng: &mut Rng) -> Result<GpisModel> {
    cfg.validate()?;
    if surface.is_empty() {
        return Err(invalid("GPIS needs a non-empty cloud"));
    }
    if !surface.has_normals() {
        return Err(invalid("GPIS needs normals"));
    }
    let cloud = random_subset(surface, cfg.max_points, rng);
    let normals = cloud.normals.as_ref().expect("checked");
    let n = cloud.len();
    let mut inputs = Vec::with_capacity(3 * n);
    let mut targets = Vec::with_capacity(3 * n);
    inputs.extend_from_slice(&cloud.points);
    targets.extend(std::iter::repeat_n(0.0, n));
    if cfg.offset > 0.0 {
        for (sign, d) in [(1.0, cfg.offset), (-1.0, -cfg.offset)] {
            inputs.extend(cloud.points.iter().zip(normals).map(|(p, nn)| p + sign * cfg.offset * nn));
            targets.extend(std::iter::repeat_n(d, n));
        }
    }
    GpisModel::fit(inputs, targets, cfg)
}

/// Standalone posterior prediction.
pub fn gpis_predict(model: &GpisModel, xs: &[Vec3]) -> (Vec<f64>, Vec<f64>) {
    model.predict(xs)
}

/// Zero level set of the posterior mean over `bbox`; `None` when the sampled
/// mean has one sign. Boundary nodes are forced outside so the mesh is closed.
pub fn gpis_surface(model: &GpisModel, bbox: &Aabb, resolution: usize) -> Result<Option<TriangleMesh>> {
    let mut grid = NodeGrid::sample(bbox, resolution, |ps| model.mean(ps))?;
    if grid.values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Degenerate("GPIS mean is not finite".into()));
    }
    if grid.has_uniform_sign() {
        return Ok(None);
    }
    grid.close_boundary();
    Ok(Some(grid.extract()))
}
