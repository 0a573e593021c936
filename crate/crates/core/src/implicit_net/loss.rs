//! Surface fitting loss with the unit-gradient (Eikonal) penalty.

use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::decoder::{DecoderState, LatentCode};
use crate::error::invalid;
use crate::geometry::{NearestIndex, PointCloud, Source};
use crate::{Result, Rng, Vec3};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossConfig {
    /// Weight of the unit-gradient penalty.
    pub eikonal_weight: f64,
    /// Weight of the latent norm penalty.
    pub latent_weight: f64,
    /// Normal-term weight for visual points, 0 or 1.
    pub normal_weight_visual: f64,
    /// Normal-term weight for touch points, 0 or 1.
    pub normal_weight_haptic: f64,
    /// Eikonal samples per surface point in a batch.
    pub eikonal_ratio: f64,
    /// Share of Eikonal samples drawn uniformly from the box.
    pub eikonal_uniform_share: f64,
    /// Half edge of the uniform Eikonal box.
    pub eikonal_half_extent: f64,
    /// Neighbour rank whose distance sets the perturbation sigma.
    pub eikonal_neighbor: usize,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            eikonal_weight: 0.1,
            latent_weight: 0.01,
            normal_weight_visual: 1.0,
            normal_weight_haptic: 1.0,
            eikonal_ratio: 1.0,
            eikonal_uniform_share: 0.5,
            eikonal_half_extent: 1.1,
            eikonal_neighbor: 50,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eikonal_weight >= 0.0) || !(self.latent_weight >= 0.0) {
            return Err(invalid("loss weights must be non-negative"));
        }
        for t in [self.normal_weight_visual, self.normal_weight_haptic] {
            if t != 0.0 && t != 1.0 {
                return Err(invalid("normal-term weights must be 0 or 1"));
            }
        }
        if !(0.0..=1.0).contains(&self.eikonal_uniform_share) || !(self.eikonal_ratio >= 0.0) {
            return Err(invalid("bad Eikonal sample configuration"));
        }
        if !(self.eikonal_half_extent > 0.0) || self.eikonal_neighbor == 0 {
            return Err(invalid("bad Eikonal sample configuration"));
        }
        Ok(())
    }

    fn tau(&self, s: Source) -> f64 {
        match s {
            Source::Visual => self.normal_weight_visual,
            Source::Haptic => self.normal_weight_haptic,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossTerms {
    /// data + normal + weight * eikonal (without the latent penalty).
    pub total: f64,
    pub data: f64,
    pub normal: f64,
    pub eikonal: f64,
}

/// One row of a loss trace.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    pub iteration: usize,
    pub total: f64,
    pub data: f64,
    pub normal: f64,
    pub eikonal: f64,
}

impl LossRecord {
    pub fn new(iteration: usize, t: LossTerms) -> Self {
        LossRecord { iteration, total: t.total, data: t.data, normal: t.normal, eikonal: t.eikonal }
    }
}

#[derive(Clone, Debug)]
pub struct Gradients {
    pub terms: LossTerms,
    /// Flat gradient matching [`DecoderState::params`], when requested.
    pub params: Option<Vec<f64>>,
    /// Includes the latent norm penalty.
    pub latent: Vec<f64>,
}

fn taus(cloud: &PointCloud, cfg: &LossConfig) -> Result<Vec<f64>> {
    let t: Vec<f64> = cloud.sources.iter().map(|&s| cfg.tau(s)).collect();
    if cloud.normals.is_none() && t.iter().any(|&v| v != 0.0) {
        return Err(invalid("normal term enabled but the cloud has no normals"));
    }
    Ok(t)
}

struct Adjoints {
    terms: LossTerms,
    df: Vec<f64>,
    dg: Vec<Vec3>,
    eik_dg: Vec<Vec3>,
}

fn adjoints(
    cloud: &PointCloud,
    tau: &[f64],
    f: &[f64],
    g: &[Vec3],
    eik_g: &[Vec3],
    lambda: f64,
) -> Adjoints {
    let n = cloud.len() as f64;
    let mut terms = LossTerms::default();
    let mut df = vec![0.0; f.len()];
    let mut dg = vec![Vec3::zeros(); f.len()];
    for i in 0..f.len() {
        terms.data += f[i].abs();
        df[i] = f[i].signum() * (f[i] != 0.0) as i32 as f64 / n;
        if tau[i] != 0.0 {
            let nrm = cloud.normals.as_ref().expect("checked")[i];
            let d = g[i] - nrm;
            let len = d.norm();
            terms.normal += tau[i] * len;
            if len > 0.0 {
                dg[i] = d * (tau[i] / (len * n));
            }
        }
    }
    terms.data /= n;
    terms.normal /= n;
    let m = eik_g.len();
    let mut eik_dg = vec![Vec3::zeros(); m];
    for (j, gj) in eik_g.iter().enumerate() {
        let len = gj.norm();
        terms.eikonal += (len - 1.0).powi(2);
        if len > 0.0 {
            eik_dg[j] = gj * (lambda * 2.0 * (len - 1.0) / (len * m as f64));
        }
    }
    if m > 0 {
        terms.eikonal /= m as f64;
    }
    terms.total = terms.data + terms.normal + lambda * terms.eikonal;
    Adjoints { terms, df, dg, eik_dg }
}

fn check(cloud: &PointCloud, z: &LatentCode, state: &DecoderState, cfg: &LossConfig) -> Result<Vec<f64>> {
    if cloud.is_empty() {
        return Err(invalid("loss needs a non-empty cloud"));
    }
    cfg.validate()?;
    if z.dim() != state.latent_dim() {
        return Err(invalid("latent dimension does not match the decoder"));
    }
    taus(cloud, cfg)
}

/// Loss terms over `cloud` with the Eikonal expectation taken over `eikonal`.
pub fn reconstruction_loss(
    cloud: &PointCloud,
    eikonal: &[Vec3],
    z: &LatentCode,
    state: &DecoderState,
    cfg: &LossConfig,
) -> Result<LossTerms> {
    let tau = check(cloud, z, state, cfg)?;
    let (f, g) = state.value_and_gradient(&cloud.points, z)?;
    let eg = if eikonal.is_empty() { Vec::new() } else { state.spatial_gradient(eikonal, z)? };
    Ok(adjoints(cloud, &tau, &f, &g, &eg, cfg.eikonal_weight).terms)
}

/// The objective differentiated by [`loss_gradients`]: total + latent penalty.
pub fn objective(
    cloud: &PointCloud,
    eikonal: &[Vec3],
    z: &LatentCode,
    state: &DecoderState,
    cfg: &LossConfig,
) -> Result<f64> {
    Ok(reconstruction_loss(cloud, eikonal, z, state, cfg)?.total + cfg.latent_weight * z.norm())
}

/// Exact gradients of [`objective`] with respect to the latent and, when
/// `with_params`, the decoder parameters.
pub fn loss_gradients(
    cloud: &PointCloud,
    eikonal: &[Vec3],
    z: &LatentCode,
    state: &DecoderState,
    cfg: &LossConfig,
    with_params: bool,
) -> Result<Gradients> {
    let tau = check(cloud, z, state, cfg)?;
    let mut gp = with_params.then(|| vec![0.0; state.params().len()]);
    let mut gz = vec![0.0; z.dim()];

    // Evaluate everything first: adjoints need the batch means.
    let chunk = 256;
    let mut tapes = Vec::new();
    let mut f = Vec::with_capacity(cloud.len());
    let mut g = Vec::with_capacity(cloud.len());
    for c in cloud.points.chunks(chunk) {
        let t = state.run_chunk(c, z, true);
        f.extend_from_slice(&t.values);
        g.extend_from_slice(&t.gradients);
        tapes.push(t);
    }
    let mut etapes = Vec::new();
    let mut eg = Vec::with_capacity(eikonal.len());
    for c in eikonal.chunks(chunk) {
        let t = state.run_chunk(c, z, true);
        eg.extend_from_slice(&t.gradients);
        etapes.push(t);
    }
    let adj = adjoints(cloud, &tau, &f, &g, &eg, cfg.eikonal_weight);
    for (ci, t) in tapes.iter().enumerate() {
        let r = ci * chunk..ci * chunk + t.values.len();
        state.backward(t, &adj.df[r.clone()], &adj.dg[r], gp.as_deref_mut(), &mut gz);
    }
    for (ci, t) in etapes.iter().enumerate() {
        let r = ci * chunk..ci * chunk + t.gradients.len();
        let zero = vec![0.0; r.len()];
        state.backward(t, &zero, &adj.eik_dg[r], gp.as_deref_mut(), &mut gz);
    }
    let zn = z.norm();
    if cfg.latent_weight > 0.0 && zn > 0.0 {
        for (g, v) in gz.iter_mut().zip(&z.0) {
            *g += cfg.latent_weight * v / zn;
        }
    }
    Ok(Gradients { terms: adj.terms, params: gp, latent: gz })
}

/// Per-point perturbation scales: distance to the k-th nearest other point.
pub fn neighbor_sigmas(points: &[Vec3], k: usize) -> Vec<f64> {
    if points.len() < 2 {
        return vec![0.0; points.len()];
    }
    let k = k.min(points.len() - 1);
    let index = NearestIndex::new(points);
    points
        .iter()
        .map(|p| index.k_nearest(p, k + 1).last().map(|&(_, d)| d).unwrap_or(0.0))
        .collect()
}

/// Training or inference batch drawn from a cloud.
#[derive(Clone, Debug)]
pub struct Batch {
    pub cloud: PointCloud,
    pub eikonal: Vec<Vec3>,
}

/// Draws `n` points with replacement plus the matching Eikonal samples.
pub fn draw_batch(
    cloud: &PointCloud,
    sigmas: &[f64],
    n: usize,
    cfg: &LossConfig,
    rng: &mut Rng,
) -> Batch {
    let idx: Vec<usize> = (0..n).map(|_| rng.random_range(0..cloud.len())).collect();
    let batch = cloud.subset(&idx);
    let m = (n as f64 * cfg.eikonal_ratio).round() as usize;
    let uniform = (m as f64 * cfg.eikonal_uniform_share).round() as usize;
    let h = cfg.eikonal_half_extent;
    let mut eikonal = Vec::with_capacity(m);
    for _ in 0..uniform {
        eikonal.push(Vec3::new(
            rng.random_range(-h..h),
            rng.random_range(-h..h),
            rng.random_range(-h..h),
        ));
    }
    let unit = Normal::new(0.0, 1.0).expect("unit normal");
    for j in 0..m - uniform {
        let i = idx[j % n];
        let s = sigmas[i];
        let d = Vec3::new(unit.sample(rng), unit.sample(rng), unit.sample(rng));
        eikonal.push(cloud.points[i] + d * s);
    }
    Batch { cloud: batch, eikonal }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::implicit_net::decoder::Architecture;
    use crate::rng_from_seed;

    fn small_arch() -> Architecture {
        Architecture { layers: 3, width: 16, skip: Some(2), beta: 10.0, latent_dim: 4 }
    }

    fn random_cloud(n: usize, rng: &mut Rng) -> PointCloud {
        let pts: Vec<Vec3> = (0..n)
            .map(|_| Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect();
        let nrm: Vec<Vec3> = (0..n)
            .map(|_| Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(0.1..1.0)).normalize())
            .collect();
        let src: Vec<Source> = (0..n).map(|i| if i % 3 == 0 { Source::Haptic } else { Source::Visual }).collect();
        PointCloud::with_sources(pts, Some(nrm), src).unwrap()
    }

    /// Straightforward per-point evaluation of the loss terms.
    fn naive_terms(cloud: &PointCloud, eik: &[Vec3], z: &LatentCode, d: &DecoderState, cfg: &LossConfig) -> LossTerms {
        let mut t = LossTerms::default();
        for (i, p) in cloud.points.iter().enumerate() {
            let (f, g) = d.value_and_gradient(std::slice::from_ref(p), z).unwrap();
            t.data += f[0].abs();
            let tau = if cloud.sources[i] == Source::Visual { cfg.normal_weight_visual } else { cfg.normal_weight_haptic };
            t.normal += tau * (g[0] - cloud.normals.as_ref().unwrap()[i]).norm();
        }
        t.data /= cloud.len() as f64;
        t.normal /= cloud.len() as f64;
        for e in eik {
            let g = d.spatial_gradient(std::slice::from_ref(e), z).unwrap()[0];
            t.eikonal += (g.norm() - 1.0) * (g.norm() - 1.0);
        }
        t.eikonal /= eik.len() as f64;
        t.total = t.data + t.normal + cfg.eikonal_weight * t.eikonal;
        t
    }

    #[test]
    fn planar_sdf_has_zero_loss() {
        let arch = Architecture { layers: 0, width: 0, skip: None, beta: 100.0, latent_dim: 2 };
        let w = Vec3::new(1.0, 2.0, -2.0) / 3.0;
        let d = DecoderState::from_params(arch, vec![w.x, w.y, w.z, 0.0, 0.0, 0.0]).unwrap();
        let u = Vec3::new(2.0, -1.0, 0.0) / 5f64.sqrt();
        let v = w.cross(&u);
        let pts: Vec<Vec3> = (0..10).map(|i| u * (i as f64 * 0.1) + v * (1.0 - i as f64 * 0.3)).collect();
        let cloud = PointCloud::new(pts.clone(), Some(vec![w; 10]), Source::Visual).unwrap();
        let t = reconstruction_loss(&cloud, &pts, &LatentCode(vec![0.3, -0.2]), &d, &LossConfig::default()).unwrap();
        assert!(t.total.abs() < 1e-15 && t.data.abs() < 1e-15 && t.normal.abs() < 1e-15 && t.eikonal.abs() < 1e-15, "{t:?}");
    }

    #[test]
    fn zero_lambda_drops_eikonal() {
        let mut rng = rng_from_seed(1);
        let d = DecoderState::geometric_init(small_arch(), 0.5, &mut rng).unwrap();
        let cloud = random_cloud(20, &mut rng);
        let z = LatentCode::random(4, 0.2, &mut rng);
        let cfg = LossConfig { eikonal_weight: 0.0, ..Default::default() };
        let t = reconstruction_loss(&cloud, &cloud.points, &z, &d, &cfg).unwrap();
        assert!(t.eikonal > 0.0);
        assert_eq!(t.total, t.data + t.normal);
    }

    #[test]
    fn matches_naive_evaluation() {
        let mut rng = rng_from_seed(2);
        for trial in 0..5 {
            let d = DecoderState::geometric_init(small_arch(), 0.5, &mut rng).unwrap();
            let cloud = random_cloud(30, &mut rng);
            let eik: Vec<Vec3> = random_cloud(17, &mut rng).points;
            let z = LatentCode::random(4, 0.2, &mut rng);
            let cfg = LossConfig { normal_weight_haptic: (trial % 2) as f64, ..Default::default() };
            let a = reconstruction_loss(&cloud, &eik, &z, &d, &cfg).unwrap();
            let b = naive_terms(&cloud, &eik, &z, &d, &cfg);
            for (x, y) in [(a.total, b.total), (a.data, b.data), (a.normal, b.normal), (a.eikonal, b.eikonal)] {
                assert!((x - y).abs() <= 1e-10, "{a:?} vs {b:?}");
            }
        }
    }

    #[test]
    fn missing_normals_rejected() {
        let mut rng = rng_from_seed(3);
        let d = DecoderState::geometric_init(small_arch(), 0.5, &mut rng).unwrap();
        let cloud = PointCloud::from_points(vec![Vec3::zeros()]);
        let z = LatentCode::zeros(4);
        assert!(reconstruction_loss(&cloud, &[], &z, &d, &LossConfig::default()).is_err());
        let off = LossConfig { normal_weight_visual: 0.0, ..Default::default() };
        assert!(reconstruction_loss(&cloud, &[], &z, &d, &off).is_ok());
    }

    fn rel_err(a: f64, b: f64, scale: f64) -> f64 {
        (a - b).abs() / scale.max(1e-6)
    }

    #[test]
    fn parameter_gradient_matches_central_differences() {
        let mut rng = rng_from_seed(4);
        let mut d = DecoderState::geometric_init(small_arch(), 0.5, &mut rng).unwrap();
        let cloud = random_cloud(25, &mut rng);
        let eik = random_cloud(25, &mut rng).points;
        let z = LatentCode::random(4, 0.2, &mut rng);
        let cfg = LossConfig::default();
        let g = loss_gradients(&cloud, &eik, &z, &d, &cfg, true).unwrap();
        let gp = g.params.unwrap();
        let scale = gp.iter().map(|v| v.abs()).fold(0.0, f64::max);
        let h = 1e-5;
        for _ in 0..50 {
            let i = rng.random_range(0..gp.len());
            let orig = d.params()[i];
            d.params_mut()[i] = orig + h;
            let up = objective(&cloud, &eik, &z, &d, &cfg).unwrap();
            d.params_mut()[i] = orig - h;
            let dn = objective(&cloud, &eik, &z, &d, &cfg).unwrap();
            d.params_mut()[i] = orig;
            let fd = (up - dn) / (2.0 * h);
            assert!(rel_err(fd, gp[i], scale) <= 1e-4, "param {i}: {fd} vs {}", gp[i]);
        }
    }

    #[test]
    fn latent_gradient_matches_central_differences() {
        let mut rng = rng_from_seed(5);
        let arch = Architecture { latent_dim: 16, ..small_arch() };
        let d = DecoderState::geometric_init(arch, 0.5, &mut rng).unwrap();
        let cloud = random_cloud(25, &mut rng);
        let eik = random_cloud(25, &mut rng).points;
        let mut z = LatentCode::random(16, 0.5, &mut rng);
        let cfg = LossConfig::default();
        let g = loss_gradients(&cloud, &eik, &z, &d, &cfg, false).unwrap();
        assert!(g.params.is_none());
        let scale = g.latent.iter().map(|v| v.abs()).fold(0.0, f64::max);
        let h = 1e-5;
        for i in 0..16 {
            let orig = z.0[i];
            z.0[i] = orig + h;
            let up = objective(&cloud, &eik, &z, &d, &cfg).unwrap();
            z.0[i] = orig - h;
            let dn = objective(&cloud, &eik, &z, &d, &cfg).unwrap();
            z.0[i] = orig;
            let fd = (up - dn) / (2.0 * h);
            assert!(rel_err(fd, g.latent[i], scale) <= 1e-4, "z {i}: {fd} vs {}", g.latent[i]);
        }
    }

    #[test]
    fn latent_penalty_gradient_alone() {
        let arch = Architecture { layers: 2, width: 4, skip: None, beta: 100.0, latent_dim: 3 };
        let d = DecoderState::zeros(arch).unwrap();
        let cloud = PointCloud::new(vec![Vec3::x()], Some(vec![Vec3::x()]), Source::Visual).unwrap();
        let cfg = LossConfig { normal_weight_visual: 0.0, ..Default::default() };
        let z = LatentCode(vec![3.0, 0.0, -4.0]);
        let g = loss_gradients(&cloud, &[], &z, &d, &cfg, false).unwrap();
        let expect = [0.01 * 0.6, 0.0, -0.01 * 0.8];
        for (a, b) in g.latent.iter().zip(expect) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn sigmas_use_kth_neighbor() {
        let pts: Vec<Vec3> = (0..5).map(|i| Vec3::new(i as f64, 0.0, 0.0)).collect();
        let s = neighbor_sigmas(&pts, 2);
        assert_eq!(s, vec![2.0, 1.0, 1.0, 1.0, 2.0]);
        // Fewer points than the rank: falls back to the farthest point.
        assert_eq!(neighbor_sigmas(&pts, 50)[0], 4.0);
    }

    #[test]
    fn batch_sizes() {
        let mut rng = rng_from_seed(6);
        let cloud = random_cloud(60, &mut rng);
        let sig = neighbor_sigmas(&cloud.points, 50);
        let b = draw_batch(&cloud, &sig, 128, &LossConfig::default(), &mut rng);
        assert_eq!(b.cloud.len(), 128);
        assert_eq!(b.eikonal.len(), 128);
        assert!(b.eikonal[..64].iter().all(|p| p.amax() <= 1.1));
    }
}
