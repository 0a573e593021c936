//! Latent-conditioned MLP with softplus activations.
//!
//! Evaluation runs on stacked row blocks: the first `n` rows carry values,
//! the next `3n` rows carry the tangents d/dx_k of every hidden unit. One GEMM
//! per layer therefore produces both the field and its spatial gradient, and
//! the reverse pass over the same tape yields exact parameter and latent
//! gradients of any loss built from f and grad f.

use matrixmultiply::dgemm;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::invalid;
use crate::{Result, Rng, Vec3};

const SKIP_SCALE: f64 = std::f64::consts::FRAC_1_SQRT_2;
/// Rows per evaluation chunk; keeps the tape inside cache-friendly sizes.
const CHUNK: usize = 512;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Architecture {
    /// Number of hidden layers (the linear output layer is extra).
    pub layers: usize,
    pub width: usize,
    /// Hidden layer whose input is `[h, x, z] / sqrt(2)`.
    pub skip: Option<usize>,
    /// Softplus sharpness.
    pub beta: f64,
    pub latent_dim: usize,
}

impl Default for Architecture {
    fn default() -> Self {
        Self::desk()
    }
}

impl Architecture {
    /// 8 x 128, latent 64.
    pub fn desk() -> Self {
        Architecture { layers: 8, width: 128, skip: Some(4), beta: 100.0, latent_dim: 64 }
    }

    /// 6 x 64, latent 32: for budget-limited benchmarks.
    pub fn compact() -> Self {
        Architecture { layers: 6, width: 64, skip: Some(3), beta: 100.0, latent_dim: 32 }
    }

    /// 8 x 512, latent 256.
    pub fn full() -> Self {
        Architecture { layers: 8, width: 512, skip: Some(4), beta: 100.0, latent_dim: 256 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers > 0 && self.width == 0 {
            return Err(invalid("hidden width must be positive"));
        }
        if let Some(s) = self.skip {
            if s == 0 || s >= self.layers {
                return Err(invalid(format!(
                    "skip layer {s} must lie in 1..{}",
                    self.layers
                )));
            }
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(invalid("softplus sharpness must be positive"));
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        3 + self.latent_dim
    }

    /// `(rows, cols)` of every weight matrix, output layer last.
    pub fn shapes(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(self.layers + 1);
        let mut prev = self.input_dim();
        for l in 0..self.layers {
            let cols = if Some(l) == self.skip { prev + self.input_dim() } else { prev };
            out.push((self.width, cols));
            prev = self.width;
        }
        out.push((1, prev));
        out
    }

    pub fn param_count(&self) -> usize {
        self.shapes().iter().map(|(r, c)| r * c + r).sum()
    }
}

#[derive(Clone, Copy, Debug)]
struct Slot {
    w: usize,
    b: usize,
    rows: usize,
    cols: usize,
}

/// Decoder parameters in one flat vector (per layer: weights row-major, then biases).
#[derive(Clone, Debug, PartialEq)]
pub struct DecoderState {
    arch: Architecture,
    params: Vec<f64>,
}

/// A shape code.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatentCode(pub Vec<f64>);

impl LatentCode {
    pub fn zeros(dim: usize) -> Self {
        LatentCode(vec![0.0; dim])
    }

    /// Entries drawn i.i.d. from N(0, std^2).
    pub fn random(dim: usize, std: f64, rng: &mut Rng) -> Self {
        if std == 0.0 {
            return Self::zeros(dim);
        }
        let n = Normal::new(0.0, std).expect("finite std");
        LatentCode((0..dim).map(|_| n.sample(rng)).collect())
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }
}

/// Softplus with sharpness `beta` and its slope, sharing one exponential.
#[inline]
fn softplus(a: f64, beta: f64) -> (f64, f64) {
    let ba = beta * a;
    let e = (-ba.abs()).exp();
    let slope = if ba >= 0.0 { 1.0 / (1.0 + e) } else { e / (1.0 + e) };
    ((ba.max(0.0) + e.ln_1p()) / beta, slope)
}

/// `c (m x n) = a (m x k) * b^T` with `b` stored `n x k` row-major.
pub(crate) fn gemm_abt(m: usize, k: usize, n: usize, a: &[f64], b: &[f64], c: &mut [f64]) {
    debug_assert!(a.len() >= m * k && b.len() >= n * k && c.len() >= m * n);
    // SAFETY: the slices cover every index touched for the given strides.
    unsafe {
        dgemm(
            m, k, n, 1.0,
            a.as_ptr(), k as isize, 1,
            b.as_ptr(), 1, k as isize,
            0.0,
            c.as_mut_ptr(), n as isize, 1,
        );
    }
}

/// `c (m x n) = a (m x k) * b (k x n)`, row-major.
pub(crate) fn gemm_ab(m: usize, k: usize, n: usize, a: &[f64], b: &[f64], c: &mut [f64]) {
    debug_assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    // SAFETY: as above.
    unsafe {
        dgemm(
            m, k, n, 1.0,
            a.as_ptr(), k as isize, 1,
            b.as_ptr(), n as isize, 1,
            0.0,
            c.as_mut_ptr(), n as isize, 1,
        );
    }
}

/// `c (m x n) += a^T * b` for `a` stored `k x m` and `b` stored `k x n`.
fn gemm_atb_acc(m: usize, k: usize, n: usize, a: &[f64], b: &[f64], c: &mut [f64]) {
    debug_assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    // SAFETY: as above.
    unsafe {
        dgemm(
            m, k, n, 1.0,
            a.as_ptr(), 1, m as isize,
            b.as_ptr(), n as isize, 1,
            1.0,
            c.as_mut_ptr(), n as isize, 1,
        );
    }
}

/// Forward record for one chunk of points.
pub(crate) struct Tape {
    n: usize,
    rows: usize,
    /// Layer inputs (rows x cols).
    inputs: Vec<Vec<f64>>,
    /// Pre-activations of hidden layers (rows x width).
    pre: Vec<Vec<f64>>,
    /// Activation slopes at the value rows (n x width).
    slopes: Vec<Vec<f64>>,
    pub(crate) values: Vec<f64>,
    pub(crate) gradients: Vec<Vec3>,
}

impl DecoderState {
    /// Geometric initialization: the untrained field approximates the signed
    /// distance to a sphere of radius `radius`.
    pub fn geometric_init(arch: Architecture, radius: f64, rng: &mut Rng) -> Result<Self> {
        arch.validate()?;
        let shapes = arch.shapes();
        let mut params = Vec::with_capacity(arch.param_count());
        let last = shapes.len() - 1;
        for (l, &(rows, cols)) in shapes.iter().enumerate() {
            if l == last {
                let mean = std::f64::consts::PI.sqrt() / (cols as f64).sqrt();
                let n = Normal::new(mean, 1e-5).expect("finite");
                params.extend((0..rows * cols).map(|_| n.sample(rng)));
                params.push(if arch.layers == 0 { 0.0 } else { -radius });
            } else {
                let n = Normal::new(0.0, 2f64.sqrt() / (rows as f64).sqrt()).expect("finite");
                params.extend((0..rows * cols).map(|_| n.sample(rng)));
                params.extend(std::iter::repeat(0.0).take(rows));
            }
        }
        Ok(DecoderState { arch, params })
    }

    /// Explicit parameters; `params.len()` must equal `arch.param_count()`.
    pub fn from_params(arch: Architecture, params: Vec<f64>) -> Result<Self> {
        arch.validate()?;
        if params.len() != arch.param_count() {
            return Err(invalid(format!(
                "expected {} parameters, got {}",
                arch.param_count(),
                params.len()
            )));
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(invalid("decoder parameters must be finite"));
        }
        Ok(DecoderState { arch, params })
    }

    pub fn zeros(arch: Architecture) -> Result<Self> {
        Self::from_params(arch, vec![0.0; arch.param_count()])
    }

    pub fn architecture(&self) -> &Architecture {
        &self.arch
    }

    pub fn latent_dim(&self) -> usize {
        self.arch.latent_dim
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn into_params(self) -> Vec<f64> {
        self.params
    }

    /// Bias of the output layer.
    pub fn output_bias_mut(&mut self) -> &mut f64 {
        self.params.last_mut().expect("output layer exists")
    }

    fn slots(&self) -> Vec<Slot> {
        let mut off = 0;
        self.arch
            .shapes()
            .into_iter()
            .map(|(rows, cols)| {
                let s = Slot { w: off, b: off + rows * cols, rows, cols };
                off += rows * cols + rows;
                s
            })
            .collect()
    }

    fn check_latent(&self, z: &LatentCode) -> Result<()> {
        if z.dim() != self.arch.latent_dim {
            return Err(invalid(format!(
                "latent has {} entries, decoder expects {}",
                z.dim(),
                self.arch.latent_dim
            )));
        }
        Ok(())
    }

    /// f(x; theta, z) for every point.
    pub fn forward(&self, xs: &[Vec3], z: &LatentCode) -> Result<Vec<f64>> {
        self.check_latent(z)?;
        let slots = self.slots();
        let mut out = Vec::with_capacity(xs.len());
        for chunk in xs.chunks(CHUNK) {
            out.extend(self.run(&slots, chunk, &z.0, false, false).values);
        }
        Ok(out)
    }

    /// Analytic spatial gradient of f at every point.
    pub fn spatial_gradient(&self, xs: &[Vec3], z: &LatentCode) -> Result<Vec<Vec3>> {
        Ok(self.value_and_gradient(xs, z)?.1)
    }

    pub fn value_and_gradient(&self, xs: &[Vec3], z: &LatentCode) -> Result<(Vec<f64>, Vec<Vec3>)> {
        self.check_latent(z)?;
        let slots = self.slots();
        let mut vals = Vec::with_capacity(xs.len());
        let mut grads = Vec::with_capacity(xs.len());
        for chunk in xs.chunks(CHUNK) {
            let t = self.run(&slots, chunk, &z.0, true, false);
            vals.extend(t.values);
            grads.extend(t.gradients);
        }
        Ok((vals, grads))
    }

    /// Forward pass over one chunk. With `tangents` the 3n tangent rows are
    /// carried along; with `keep` the intermediates are retained for
    /// [`DecoderState::backward`].
    pub(crate) fn run_chunk(&self, xs: &[Vec3], z: &LatentCode, keep: bool) -> Tape {
        self.run(&self.slots(), xs, &z.0, true, keep)
    }

    fn run(&self, slots: &[Slot], xs: &[Vec3], z: &[f64], tangents: bool, keep: bool) -> Tape {
        let n = xs.len();
        let rows = if tangents { 4 * n } else { n };
        let din = self.arch.input_dim();
        let beta = self.arch.beta;
        let p = &self.params;

        let mut x0 = vec![0.0; rows * din];
        for (i, x) in xs.iter().enumerate() {
            let r = &mut x0[i * din..(i + 1) * din];
            r[0] = x.x;
            r[1] = x.y;
            r[2] = x.z;
            r[3..].copy_from_slice(z);
        }
        if tangents {
            for i in 0..n {
                for k in 0..3 {
                    x0[(n + 3 * i + k) * din + k] = 1.0;
                }
            }
        }

        let mut inputs = Vec::new();
        let mut pre = Vec::new();
        let mut slopes = Vec::new();
        let mut cur = x0.clone();
        let mut cur_cols = din;
        for (l, s) in slots[..self.arch.layers].iter().enumerate() {
            if Some(l) == self.arch.skip {
                let cols = cur_cols + din;
                let mut cat = vec![0.0; rows * cols];
                for r in 0..rows {
                    let dst = &mut cat[r * cols..(r + 1) * cols];
                    for (d, v) in dst[..cur_cols].iter_mut().zip(&cur[r * cur_cols..(r + 1) * cur_cols]) {
                        *d = v * SKIP_SCALE;
                    }
                    for (d, v) in dst[cur_cols..].iter_mut().zip(&x0[r * din..(r + 1) * din]) {
                        *d = v * SKIP_SCALE;
                    }
                }
                cur = cat;
                cur_cols = cols;
            }
            debug_assert_eq!(cur_cols, s.cols);
            let w = s.rows;
            let mut a = vec![0.0; rows * w];
            gemm_abt(rows, s.cols, w, &cur, &p[s.w..], &mut a);
            let bias = &p[s.b..s.b + w];
            for i in 0..n {
                for (v, b) in a[i * w..(i + 1) * w].iter_mut().zip(bias) {
                    *v += b;
                }
            }
            let mut h = vec![0.0; rows * w];
            let mut slope = vec![0.0; if tangents { n * w } else { 0 }];
            for i in 0..n {
                let ai = &a[i * w..(i + 1) * w];
                if !tangents {
                    for (hv, &av) in h[i * w..(i + 1) * w].iter_mut().zip(ai) {
                        *hv = softplus(av, beta).0;
                    }
                    continue;
                }
                for j in 0..w {
                    let (v, s) = softplus(ai[j], beta);
                    h[i * w + j] = v;
                    slope[i * w + j] = s;
                    for k in 0..3 {
                        let r = (n + 3 * i + k) * w + j;
                        h[r] = s * a[r];
                    }
                }
            }
            if keep {
                inputs.push(std::mem::replace(&mut cur, h));
                pre.push(a);
                slopes.push(slope);
            } else {
                cur = h;
            }
            cur_cols = w;
        }

        let out = slots[self.arch.layers];
        let wo = &p[out.w..out.w + out.cols];
        let bo = p[out.b];
        let dot = |r: usize| -> f64 {
            cur[r * cur_cols..(r + 1) * cur_cols]
                .iter()
                .zip(wo)
                .map(|(a, b)| a * b)
                .sum()
        };
        let values: Vec<f64> = (0..n).map(|i| dot(i) + bo).collect();
        let gradients = if tangents {
            (0..n)
                .map(|i| Vec3::new(dot(n + 3 * i), dot(n + 3 * i + 1), dot(n + 3 * i + 2)))
                .collect()
        } else {
            Vec::new()
        };
        if keep {
            inputs.push(cur);
        }
        Tape { n, rows, inputs, pre, slopes, values, gradients }
    }

    /// Reverse pass. `df[i]` and `dg[i]` are the loss adjoints of the value
    /// and of the spatial gradient at point `i`. Accumulates into
    /// `grad_params` (when given) and `grad_z`.
    pub(crate) fn backward(
        &self,
        tape: &Tape,
        df: &[f64],
        dg: &[Vec3],
        mut grad_params: Option<&mut [f64]>,
        grad_z: &mut [f64],
    ) {
        let slots = self.slots();
        let (n, rows) = (tape.n, tape.rows);
        let din = self.arch.input_dim();
        let beta = self.arch.beta;
        let p = &self.params;
        let nl = self.arch.layers;

        let out = slots[nl];
        let last = &tape.inputs[nl];
        let cols = out.cols;
        let wo = &p[out.w..out.w + cols];
        if let Some(gp) = grad_params.as_deref_mut() {
            let gw = &mut gp[out.w..out.w + cols];
            for i in 0..n {
                let mut acc = |r: usize, s: f64| {
                    if s != 0.0 {
                        for (g, h) in gw.iter_mut().zip(&last[r * cols..(r + 1) * cols]) {
                            *g += s * h;
                        }
                    }
                };
                acc(i, df[i]);
                for k in 0..3 {
                    acc(n + 3 * i + k, dg[i][k]);
                }
            }
            gp[out.b] += df.iter().sum::<f64>();
        }
        // Adjoint of the current layer output.
        let mut up = vec![0.0; rows * cols];
        for i in 0..n {
            let mut put = |r: usize, s: f64| {
                for (u, w) in up[r * cols..(r + 1) * cols].iter_mut().zip(wo) {
                    *u = s * w;
                }
            };
            put(i, df[i]);
            for k in 0..3 {
                put(n + 3 * i + k, dg[i][k]);
            }
        }

        for l in (0..nl).rev() {
            let s = slots[l];
            let w = s.rows;
            let a = &tape.pre[l];
            let slope = &tape.slopes[l];
            let mut abar = vec![0.0; rows * w];
            for i in 0..n {
                for j in 0..w {
                    let sg = slope[i * w + j];
                    let d2 = beta * sg * (1.0 - sg);
                    let mut v = up[i * w + j] * sg;
                    for k in 0..3 {
                        let r = (n + 3 * i + k) * w + j;
                        v += up[r] * a[r] * d2;
                        abar[r] = up[r] * sg;
                    }
                    abar[i * w + j] = v;
                }
            }
            let input = &tape.inputs[l];
            if let Some(gp) = grad_params.as_deref_mut() {
                gemm_atb_acc(w, rows, s.cols, &abar, input, &mut gp[s.w..s.b]);
                let gb = &mut gp[s.b..s.b + w];
                for i in 0..n {
                    for (g, v) in gb.iter_mut().zip(&abar[i * w..(i + 1) * w]) {
                        *g += v;
                    }
                }
            }
            // Only value rows reach the latent at the first layer.
            let need = if l == 0 { n } else { rows };
            let mut xbar = vec![0.0; need * s.cols];
            gemm_ab(need, w, s.cols, &abar, &p[s.w..s.b], &mut xbar);
            let (prev_cols, lat_off, lat_scale) = if Some(l) == self.arch.skip {
                (s.cols - din, s.cols - din + 3, SKIP_SCALE)
            } else {
                (s.cols, 3, 1.0)
            };
            if l == 0 || Some(l) == self.arch.skip {
                for i in 0..n {
                    let src = &xbar[i * s.cols + lat_off..(i + 1) * s.cols];
                    for (g, v) in grad_z.iter_mut().zip(src) {
                        *g += lat_scale * v;
                    }
                }
            }
            if l > 0 {
                let mut next = vec![0.0; rows * prev_cols];
                if Some(l) == self.arch.skip {
                    for r in 0..rows {
                        for (d, v) in next[r * prev_cols..(r + 1) * prev_cols]
                            .iter_mut()
                            .zip(&xbar[r * s.cols..r * s.cols + prev_cols])
                        {
                            *d = v * SKIP_SCALE;
                        }
                    }
                } else {
                    next = xbar;
                }
                up = next;
            }
        }
        if nl == 0 {
            // Linear decoder: the output layer reads the raw input directly.
            for i in 0..n {
                for (g, w) in grad_z.iter_mut().zip(&wo[3..]) {
                    *g += df[i] * w;
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng_from_seed;
    use rand::Rng as _;

    fn small(layers: usize, width: usize, skip: Option<usize>, latent: usize) -> Architecture {
        Architecture { layers, width, skip, beta: 100.0, latent_dim: latent }
    }

    fn random_points(n: usize, rng: &mut Rng) -> Vec<Vec3> {
        (0..n)
            .map(|_| Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect()
    }

    #[test]
    fn shapes_follow_skip_rule() {
        let a = Architecture::desk();
        let s = a.shapes();
        assert_eq!(s.len(), 9);
        assert_eq!(s[0], (128, 67));
        assert_eq!(s[4], (128, 128 + 67));
        assert_eq!(s[8], (1, 128));
        assert!(small(3, 8, Some(3), 2).validate().is_err());
        assert!(small(3, 8, Some(0), 2).validate().is_err());
    }

    #[test]
    fn zero_weights_give_output_bias() {
        let arch = small(3, 8, Some(1), 4);
        let mut d = DecoderState::zeros(arch).unwrap();
        *d.output_bias_mut() = 0.7;
        let mut rng = rng_from_seed(1);
        let xs = random_points(20, &mut rng);
        let z = LatentCode::random(4, 1.0, &mut rng);
        let (v, g) = d.value_and_gradient(&xs, &z).unwrap();
        assert!(v.iter().all(|&f| f == 0.7));
        assert!(g.iter().all(|g| *g == Vec3::zeros()));
    }

    #[test]
    fn linear_decoder_gradient_is_weight() {
        let arch = small(0, 0, None, 2);
        let d = DecoderState::from_params(arch, vec![0.3, -0.4, 1.2, 5.0, 6.0, 0.25]).unwrap();
        let z = LatentCode(vec![0.1, 0.2]);
        let (v, g) = d.value_and_gradient(&[Vec3::new(1.0, 2.0, 3.0)], &z).unwrap();
        assert!((v[0] - (0.3 - 0.8 + 3.6 + 0.5 + 1.2 + 0.25)).abs() < 1e-12);
        assert_eq!(g[0], Vec3::new(0.3, -0.4, 1.2));
    }

    #[test]
    fn batch_matches_single_bitwise() {
        let mut rng = rng_from_seed(2);
        let d = DecoderState::geometric_init(Architecture::desk(), 1.0, &mut rng).unwrap();
        let z = LatentCode::random(64, 0.1, &mut rng);
        let xs = random_points(37, &mut rng);
        let (bv, bg) = d.value_and_gradient(&xs, &z).unwrap();
        let fv = d.forward(&xs, &z).unwrap();
        for (i, x) in xs.iter().enumerate() {
            let (v, g) = d.value_and_gradient(std::slice::from_ref(x), &z).unwrap();
            assert_eq!(v[0].to_bits(), bv[i].to_bits());
            assert_eq!(g[0], bg[i]);
            assert_eq!(d.forward(std::slice::from_ref(x), &z).unwrap()[0].to_bits(), fv[i].to_bits());
        }
    }

    #[test]
    fn seeded_init_is_reproducible() {
        let a = DecoderState::geometric_init(Architecture::desk(), 1.0, &mut rng_from_seed(5)).unwrap();
        let b = DecoderState::geometric_init(Architecture::desk(), 1.0, &mut rng_from_seed(5)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn geometric_init_is_roughly_a_sphere() {
        let mut rng = rng_from_seed(3);
        let d = DecoderState::geometric_init(Architecture::desk(), 1.0, &mut rng).unwrap();
        let z = LatentCode::zeros(64);
        let f = d.forward(&[Vec3::zeros(), Vec3::new(1.5, 0.0, 0.0), Vec3::new(0.0, 0.0, -2.0)], &z).unwrap();
        assert!(f[0] < 0.0, "{f:?}");
        assert!(f[1] > 0.0 && f[2] > 0.0, "{f:?}");
    }

    #[test]
    fn spatial_gradient_matches_central_differences() {
        let mut rng = rng_from_seed(4);
        let arch = Architecture { beta: 10.0, ..small(3, 16, Some(2), 5) };
        let d = DecoderState::geometric_init(arch, 0.5, &mut rng).unwrap();
        let z = LatentCode::random(5, 0.3, &mut rng);
        let xs = random_points(100, &mut rng);
        let g = d.spatial_gradient(&xs, &z).unwrap();
        let h = 1e-5;
        for (x, g) in xs.iter().zip(&g) {
            for k in 0..3 {
                let mut e = Vec3::zeros();
                e[k] = h;
                let f = d.forward(&[x + e, x - e], &z).unwrap();
                let fd = (f[0] - f[1]) / (2.0 * h);
                let err = (fd - g[k]).abs() / g.norm().max(1e-8);
                assert!(err <= 1e-4, "{fd} vs {}", g[k]);
            }
        }
    }

    #[test]
    fn latent_dimension_checked() {
        let d = DecoderState::zeros(small(2, 4, None, 3)).unwrap();
        assert!(d.forward(&[Vec3::zeros()], &LatentCode::zeros(2)).is_err());
    }
}
