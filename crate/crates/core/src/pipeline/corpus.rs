use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{Rotation3, Unit};
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::geometry::io::{load_ply, save_obj, save_ply, write_atomic};
use crate::geometry::shapes::{box_mesh, icosphere, radial_mesh};
use crate::geometry::{normalize_mesh, sample_surface, PointCloud, TriangleMesh};
use crate::haptic_sim::{Camera, ProbeConfig, SceneConfig};
use crate::{rng_from_seed, Error, Result, Rng, Vec3};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Sphere,
    Box,
    Cylinder,
    Capsule,
    Superellipsoid,
}

impl Family {
    pub const ALL: [Family; 5] = [Family::Sphere, Family::Box, Family::Cylinder, Family::Capsule, Family::Superellipsoid];

    pub fn name(self) -> &'static str {
        match self {
            Family::Sphere => "sphere",
            Family::Box => "box",
            Family::Cylinder => "cylinder",
            Family::Capsule => "capsule",
            Family::Superellipsoid => "superellipsoid",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CorpusConfig {
    /// Distinct procedural shapes; families are used round robin.
    pub shapes: usize,
    /// Random views per shape.
    pub rotations: usize,
    pub families: Vec<Family>,
    /// Surface samples per cloud.
    pub points: usize,
    /// Icosphere subdivisions of the radial meshes.
    pub subdivisions: u32,
    /// Also write a scene JSON per view.
    pub scenes: bool,
    pub camera: Camera,
    pub probe: ProbeConfig,
    pub seed: u64,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        CorpusConfig {
            shapes: 10,
            rotations: 8,
            families: Family::ALL.to_vec(),
            points: 4000,
            subdivisions: 4,
            scenes: false,
            camera: Camera::default(),
            probe: ProbeConfig::default(),
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorpusEntry {
    pub id: String,
    pub family: Family,
    pub shape: usize,
    pub view: usize,
    /// Paths relative to the corpus directory.
    pub mesh: PathBuf,
    pub cloud: PathBuf,
    pub scene: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config: CorpusConfig,
    pub entries: Vec<CorpusEntry>,
}

pub const MANIFEST_FILE: &str = "manifest.json";

/// Watertight solid of the given family with random proportions.
pub fn procedural_shape(family: Family, subdivisions: u32, rng: &mut Rng) -> TriangleMesh {
    let mut u = |lo: f64, hi: f64| rng.random_range(lo..hi);
    let sphere = icosphere(1.0, subdivisions);
    match family {
        Family::Sphere => {
            let (a, b, c) = (u(0.7, 1.0), u(0.7, 1.0), u(0.7, 1.0));
            radial_mesh(&sphere, 2.0, move |p| (p.x / a).powi(2) + (p.y / b).powi(2) + (p.z / c).powi(2) <= 1.0)
        }
        Family::Box => {
            let n = 2usize.pow(subdivisions.min(5)) / 2;
            box_mesh(Vec3::new(u(0.3, 1.0), u(0.3, 1.0), u(0.3, 1.0)), n.max(2))
        }
        Family::Cylinder => {
            let (r, h) = (u(0.3, 0.8), u(0.3, 1.0));
            radial_mesh(&sphere, 2.0, move |p| p.x * p.x + p.y * p.y <= r * r && p.z.abs() <= h)
        }
        Family::Capsule => {
            let (r, h) = (u(0.25, 0.6), u(0.2, 0.8));
            radial_mesh(&sphere, 2.0, move |p| {
                let zc = p.z.clamp(-h, h);
                p.x * p.x + p.y * p.y + (p.z - zc) * (p.z - zc) <= r * r
            })
        }
        Family::Superellipsoid => {
            let (a, b, c, e) = (u(0.5, 1.0), u(0.5, 1.0), u(0.5, 1.0), u(1.5, 4.0));
            radial_mesh(&sphere, 2.0, move |p| (p.x / a).abs().powf(e) + (p.y / b).abs().powf(e) + (p.z / c).abs().powf(e) <= 1.0)
        }
    }
}

/// Uniformly distributed rotation.
pub fn random_rotation(rng: &mut Rng) -> Rotation3<f64> {
    let axis = loop {
        let v = Vec3::new(StandardNormal.sample(rng), StandardNormal.sample(rng), StandardNormal.sample(rng));
        if v.norm() > 1e-9 {
            break v;
        }
    };
    // Haar measure: angle density proportional to 1 - cos(angle).
    let angle = loop {
        let a: f64 = rng.random_range(0.0..std::f64::consts::PI);
        if rng.random_range(0.0..2.0) <= 1.0 - a.cos() {
            break a;
        }
    };
    Rotation3::from_axis_angle(&Unit::new_normalize(axis), angle)
}

/// Replaces the first two samples with the mesh vertices at both ends of the
/// longest axis, so the cloud spans the mesh's full longest extent.
fn pin_extremes(mesh: &TriangleMesh, cloud: &mut PointCloud) {
    let axis = mesh.bounds().extent().imax();
    let by_axis = |a: &usize, b: &usize| mesh.vertices[*a][axis].total_cmp(&mesh.vertices[*b][axis]);
    let lo = (0..mesh.vertices.len()).min_by(by_axis).expect("non-empty mesh");
    let hi = (0..mesh.vertices.len()).max_by(by_axis).expect("non-empty mesh");
    let normal = |v: usize| {
        let mut n = Vec3::zeros();
        for (t, tri) in mesh.triangles.iter().enumerate() {
            if tri.contains(&v) {
                n += mesh.area_normal(t);
            }
        }
        n.normalize()
    };
    let (nlo, nhi) = (normal(lo), normal(hi));
    for (slot, (v, n)) in [(lo, nlo), (hi, nhi)].into_iter().enumerate().take(cloud.len()) {
        cloud.points[slot] = mesh.vertices[v];
        if let Some(ns) = cloud.normals.as_mut() {
            ns[slot] = n;
        }
    }
}

/// Writes `meshes/`, `clouds/`, optional `scenes/` and `manifest.json` under `dir`.
pub fn build_corpus(cfg: &CorpusConfig, dir: &Path) -> Result<Manifest> {
    if cfg.shapes == 0 || cfg.rotations == 0 || cfg.points == 0 || cfg.families.is_empty() {
        return Err(Error::Config("corpus needs shapes, rotations, points and families".into()));
    }
    for sub in ["meshes", "clouds", "scenes"] {
        if sub != "scenes" || cfg.scenes {
            fs::create_dir_all(dir.join(sub))?;
        }
    }
    let mut rng = rng_from_seed(cfg.seed);
    let mut entries = Vec::new();
    for shape in 0..cfg.shapes {
        let family = cfg.families[shape % cfg.families.len()];
        let base = procedural_shape(family, cfg.subdivisions, &mut rng);
        for view in 0..cfg.rotations {
            let id = format!("{}_{shape:03}_v{view:02}", family.name());
            let mesh = normalize_mesh(&base.rotated(&random_rotation(&mut rng)))?.mesh;
            let mut cloud = sample_surface(&mesh, cfg.points, &mut rng)?;
            pin_extremes(&mesh, &mut cloud);
            let mesh_rel = PathBuf::from("meshes").join(format!("{id}.obj"));
            let cloud_rel = PathBuf::from("clouds").join(format!("{id}.ply"));
            save_obj(&mesh, &dir.join(&mesh_rel))?;
            save_ply(&cloud, &dir.join(&cloud_rel))?;
            let scene = if cfg.scenes {
                let rel = PathBuf::from("scenes").join(format!("{id}.json"));
                let sc = SceneConfig {
                    mesh: PathBuf::from("..").join(&mesh_rel),
                    camera: cfg.camera.clone(),
                    probe: cfg.probe.clone(),
                    seed: cfg.seed.wrapping_add(entries.len() as u64),
                };
                write_atomic(&dir.join(&rel), serde_json::to_string_pretty(&sc)?.as_bytes())?;
                Some(rel)
            } else {
                None
            };
            entries.push(CorpusEntry { id, family, shape, view, mesh: mesh_rel, cloud: cloud_rel, scene });
        }
    }
    let manifest = Manifest { config: cfg.clone(), entries };
    write_atomic(&dir.join(MANIFEST_FILE), serde_json::to_string_pretty(&manifest)?.as_bytes())?;
    Ok(manifest)
}

pub fn load_manifest(dir: &Path) -> Result<Manifest> {
    Ok(serde_json::from_slice(&fs::read(dir.join(MANIFEST_FILE))?)?)
}

/// Every cloud of a corpus with its id, in manifest order.
pub fn load_corpus_clouds(dir: &Path) -> Result<Vec<(PointCloud, String)>> {
    load_manifest(dir)?
        .entries
        .iter()
        .map(|e| Ok((load_ply(&dir.join(&e.cloud))?, e.id.clone())))
        .collect()
}
