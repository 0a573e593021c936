//! Kinematic stand-in for the robot: one pinhole depth capture and
//! straight-line probes that stop at the first surface contact.

use std::path::{Path, PathBuf};

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::invalid;
use crate::geometry::{io, PointCloud, RayCaster, Source, TriangleMesh};
use crate::uncertainty::TouchTarget;
use crate::{Error, Result, Rng, Vec3};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Camera {
    pub position: Vec3,
    pub look_at: Vec3,
    pub up: Vec3,
    /// Vertical field of view in degrees.
    pub fov_deg: f64,
    pub width: usize,
    pub height: usize,
}

impl Default for Camera {
    fn default() -> Self {
        Camera {
            position: Vec3::new(0.0, -3.0, 1.0),
            look_at: Vec3::zeros(),
            up: Vec3::z(),
            fov_deg: 60.0,
            width: 160,
            height: 120,
        }
    }
}

impl Camera {
    /// Unit ray directions, row-major from the top-left pixel.
    pub fn rays(&self) -> Result<Vec<Vec3>> {
        let fwd = self.look_at - self.position;
        if fwd.norm() < 1e-12 {
            return Err(invalid("camera looks at its own position"));
        }
        let fwd = fwd.normalize();
        let right = fwd.cross(&self.up);
        if right.norm() < 1e-12 {
            return Err(invalid("camera up vector is parallel to the view direction"));
        }
        let right = right.normalize();
        let up = right.cross(&fwd);
        if self.width == 0 || self.height == 0 || !(self.fov_deg > 0.0 && self.fov_deg < 180.0) {
            return Err(invalid("bad camera intrinsics"));
        }
        let tan = (self.fov_deg.to_radians() * 0.5).tan();
        let aspect = self.width as f64 / self.height as f64;
        let mut out = Vec::with_capacity(self.width * self.height);
        for v in 0..self.height {
            for u in 0..self.width {
                let x = (2.0 * (u as f64 + 0.5) / self.width as f64 - 1.0) * tan * aspect;
                let y = (1.0 - 2.0 * (v as f64 + 0.5) / self.height as f64) * tan;
                out.push((fwd + right * x + up * y).normalize());
            }
        }
        Ok(out)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProbeConfig {
    /// Std of the contact displacement along the approach direction.
    pub noise_std: f64,
    /// How far past the target the probe keeps moving.
    pub beyond_distance: f64,
    /// Distance from the start point to the target.
    pub start_distance: f64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        ProbeConfig { noise_std: 0.0, beyond_distance: 0.10, start_distance: 3.0 }
    }
}

/// Scene description file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneConfig {
    /// Mesh path, relative to the scene file when not absolute.
    pub mesh: PathBuf,
    #[serde(default)]
    pub camera: Camera,
    #[serde(default)]
    pub probe: ProbeConfig,
    #[serde(default)]
    pub seed: u64,
}

pub struct Scene {
    caster: RayCaster,
    pub camera: Camera,
    pub probe: ProbeConfig,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "lowercase")]
pub enum ContactResult {
    Hit {
        point: Vec3,
        /// Outward unit normal of the touched triangle.
        normal: Vec3,
        /// Distance travelled from the start point.
        travel: f64,
    },
    Miss,
}

impl ContactResult {
    pub fn is_hit(&self) -> bool {
        matches!(self, ContactResult::Hit { .. })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NormalMode {
    /// True surface normal at the contact.
    GtNormal,
    /// Negated approach direction.
    ApproachNormal,
}

impl Scene {
    /// Ground truth must be watertight; inverted meshes are flipped outward.
    pub fn new(mesh: TriangleMesh, camera: Camera, probe: ProbeConfig, seed: u64) -> Result<Self> {
        mesh.require_watertight()?;
        let mesh = if mesh.signed_volume() < 0.0 { mesh.flipped() } else { mesh };
        if !(probe.beyond_distance > 0.0) || !(probe.start_distance > 0.0) || !(probe.noise_std >= 0.0) {
            return Err(invalid("probe distances must be positive and noise non-negative"));
        }
        let b = mesh.bounds();
        if (camera.position - b.center()).norm() <= 0.5 * b.extent().norm() {
            return Err(invalid("camera must be outside the object's bounding sphere"));
        }
        camera.rays()?;
        Ok(Scene { caster: RayCaster::new(mesh), camera, probe, seed })
    }

    pub fn from_config(cfg: &SceneConfig, base: &Path) -> Result<Self> {
        let path = if cfg.mesh.is_absolute() { cfg.mesh.clone() } else { base.join(&cfg.mesh) };
        let mesh = io::load_mesh(&path)?;
        Scene::new(mesh, cfg.camera.clone(), cfg.probe.clone(), cfg.seed)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let cfg: SceneConfig = serde_json::from_slice(&std::fs::read(path)?)?;
        Scene::from_config(&cfg, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn mesh(&self) -> &TriangleMesh {
        self.caster.mesh()
    }
}

/// One ray per pixel; every camera-facing hit contributes its point and
/// outward normal.
pub fn capture_pointcloud(scene: &Scene) -> Result<PointCloud> {
    let origin = scene.camera.position;
    let mesh = scene.mesh();
    let mut points = Vec::new();
    let mut normals = Vec::new();
    for dir in scene.camera.rays()? {
        if let Some((t, tri)) = scene.caster.nearest(&origin, &dir, f64::INFINITY) {
            let n = mesh.triangle_normal(tri);
            if n.dot(&dir) < 0.0 {
                points.push(origin + dir * t);
                normals.push(n);
            }
        }
    }
    if points.is_empty() {
        return Err(Error::OutOfView);
    }
    PointCloud::new(points, Some(normals), Source::Visual)
}

/// Moves the probe from `target - start_distance * direction` towards the
/// target and `beyond_distance` past it; contact at the first surface hit.
pub fn execute_touch(scene: &Scene, target: &TouchTarget, rng: &mut Rng) -> Result<ContactResult> {
    let d = target.direction;
    if !d.iter().all(|v| v.is_finite()) || (d.norm() - 1.0).abs() > 1e-9 {
        return Err(invalid("approach direction must be a unit vector"));
    }
    let p = &scene.probe;
    let start = target.position - d * p.start_distance;
    let reach = p.start_distance + p.beyond_distance;
    let Some((t, tri)) = scene.caster.nearest(&start, &d, f64::INFINITY).filter(|h| h.0 <= reach) else {
        return Ok(ContactResult::Miss);
    };
    let mut point = start + d * t;
    if p.noise_std > 0.0 {
        let n = Normal::new(0.0, p.noise_std).expect("finite std");
        point += d * n.sample(rng);
    }
    Ok(ContactResult::Hit { point, normal: scene.mesh().triangle_normal(tri), travel: t })
}

/// Single haptic point for a hit.
pub fn contact_to_observation(
    result: &ContactResult,
    mode: NormalMode,
    direction: &Vec3,
) -> Result<PointCloud> {
    match result {
        ContactResult::Miss => Err(invalid("a miss carries no observation")),
        ContactResult::Hit { point, normal, .. } => {
            let n = match mode {
                NormalMode::GtNormal => *normal,
                NormalMode::ApproachNormal => -direction.normalize(),
            };
            PointCloud::new(vec![*point], Some(vec![n]), Source::Haptic)
        }
    }
}
