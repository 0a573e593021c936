#![allow(dead_code)]

use std::path::{Path, PathBuf};

use vhsc_core::geometry::io::save_obj;
use vhsc_core::geometry::shapes::icosphere;
use vhsc_core::geometry::TriangleMesh;
use vhsc_core::haptic_sim::{Camera, ProbeConfig, SceneConfig};
use vhsc_core::implicit_net::{save_checkpoint, train_multishape, Architecture, TrainConfig, TrainedModel};
use vhsc_core::pipeline::{build_corpus, load_corpus_clouds, CorpusConfig, RunConfig};

/// Writes `mesh` and a scene JSON pointing at it; returns the scene path.
pub fn write_scene(dir: &Path, name: &str, mesh: &TriangleMesh, seed: u64) -> PathBuf {
    std::fs::create_dir_all(dir).unwrap();
    save_obj(mesh, &dir.join(format!("{name}.obj"))).unwrap();
    let cfg = SceneConfig {
        mesh: PathBuf::from(format!("{name}.obj")),
        camera: Camera::default(),
        probe: ProbeConfig::default(),
        seed,
    };
    let path = dir.join(format!("{name}.json"));
    std::fs::write(&path, serde_json::to_string_pretty(&cfg).unwrap()).unwrap();
    path
}

pub fn sphere_scene(dir: &Path) -> PathBuf {
    write_scene(dir, "sphere", &icosphere(0.8, 3), 1)
}

/// A small decoder trained briefly on a tiny corpus; enough to exercise the pipeline.
pub fn tiny_model(dir: &Path) -> (TrainedModel, PathBuf) {
    let corpus = dir.join("corpus");
    build_corpus(&CorpusConfig { shapes: 3, rotations: 1, points: 500, subdivisions: 2, ..CorpusConfig::default() }, &corpus).unwrap();
    let cfg = TrainConfig {
        architecture: Architecture { layers: 3, width: 24, skip: Some(1), beta: 100.0, latent_dim: 4 },
        iterations: 60,
        batch_shapes: 3,
        points_per_shape: 128,
        seed: 5,
        ..TrainConfig::default()
    };
    let (model, _) = train_multishape(&load_corpus_clouds(&corpus).unwrap(), &cfg).unwrap();
    let path = dir.join("tiny.ckpt");
    save_checkpoint(&model, &path).unwrap();
    (model, path)
}

/// Run settings small enough for tests.
pub fn quick_run(scene: PathBuf, checkpoint: Option<PathBuf>, output: PathBuf) -> RunConfig {
    let mut cfg = RunConfig {
        scene,
        checkpoint,
        output,
        steps: 20,
        store_every: 5,
        samples: 4,
        mesh_resolution: 24,
        sample_resolution: 16,
        eval_samples: 1000,
        ..RunConfig::default()
    };
    cfg.select.surface_samples = 2000;
    cfg.gpis.max_points = 150;
    cfg
}
