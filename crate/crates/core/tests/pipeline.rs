mod common;

use std::collections::BTreeMap;
use std::fs;

use vhsc_core::geometry::io::{load_avgrid, load_obj, load_ply};
use vhsc_core::geometry::Source;
use vhsc_core::haptic_sim::Scene;
use vhsc_core::pipeline::{
    read_aggregate, read_reports, run_active_completion, run_benchmark, run_from_config, BenchObject, Outcome, Policy,
    Reconstructor, SuiteConfig, AGGREGATE_FILE, LOG_FILE, STEPS_FILE,
};

use common::{quick_run, sphere_scene, tiny_model, write_scene};

#[test]
fn no_touches_is_visual_only() {
    let dir = tempfile::tempdir().unwrap();
    let (model, ckpt) = tiny_model(dir.path());
    let scene_path = sphere_scene(&dir.path().join("scene"));
    let cfg = vhsc_core::pipeline::RunConfig { touches: 0, ..quick_run(scene_path.clone(), Some(ckpt), dir.path().join("out")) };
    let scene = Scene::load(&scene_path).unwrap();
    let out = run_active_completion(&cfg, &scene, Some(&model)).unwrap();
    assert_eq!(out.reports.len(), 1);
    assert_eq!(out.reports[0].t, 0);
    assert_eq!(out.reports[0].outcome, Outcome::None);
    assert_eq!(out.probes, 0);
    assert_eq!(out.cloud.count(Source::Haptic), 0);
    assert!(cfg.output.join("recon_t0.obj").exists());
    assert!(!cfg.output.join("recon_t1.obj").exists());
    assert_eq!(read_reports(&cfg.output.join(STEPS_FILE)).unwrap(), out.reports);
}

#[test]
fn five_touches_bookkeeping() {
    let dir = tempfile::tempdir().unwrap();
    let (_, ckpt) = tiny_model(dir.path());
    let scene_path = sphere_scene(&dir.path().join("scene"));
    let cfg = quick_run(scene_path, Some(ckpt), dir.path().join("out"));
    let out = run_from_config(&cfg).unwrap();
    assert_eq!(out.reports.len(), 6);
    assert_eq!(out.reports.iter().map(|r| r.t).collect::<Vec<_>>(), (0..6).collect::<Vec<_>>());
    let hits = out.reports.iter().filter(|r| matches!(r.outcome, Outcome::Hit | Outcome::Fallback)).count();
    assert_eq!(out.cloud.count(Source::Haptic), hits);
    assert!(out.probes >= 5);
    for t in 0..6 {
        let cloud = load_ply(&cfg.output.join(format!("cloud_t{t}.ply"))).unwrap();
        let prior = out.reports[1..=t].iter().filter(|r| matches!(r.outcome, Outcome::Hit | Outcome::Fallback)).count();
        assert_eq!(cloud.count(Source::Haptic), prior);
        load_obj(&cfg.output.join(format!("recon_t{t}.obj"))).unwrap();
    }
    for t in 0..5 {
        let v = load_avgrid(&cfg.output.join(format!("variance_t{t}.avgrid"))).unwrap();
        assert!(v.values.iter().all(|&x| (0.0..=0.25).contains(&x)));
    }
    let log = fs::read_to_string(cfg.output.join(LOG_FILE)).unwrap();
    for line in log.lines() {
        serde_json::from_str::<serde_json::Value>(line).unwrap();
    }
    assert_eq!(log.lines().filter(|l| l.contains("\"event\":\"step\"")).count(), 6);
}

#[test]
fn reruns_are_identical() {
    let dir = tempfile::tempdir().unwrap();
    let (_, ckpt) = tiny_model(dir.path());
    let scene_path = sphere_scene(&dir.path().join("scene"));
    let a = run_from_config(&quick_run(scene_path.clone(), Some(ckpt.clone()), dir.path().join("a"))).unwrap();
    let b = run_from_config(&quick_run(scene_path, Some(ckpt), dir.path().join("b"))).unwrap();
    let strip = |rs: &[vhsc_core::pipeline::StepReport]| {
        rs.iter().map(|r| (r.t, r.chamfer.to_bits(), r.jaccard.to_bits(), r.outcome)).collect::<Vec<_>>()
    };
    assert_eq!(strip(&a.reports), strip(&b.reports));
    assert_eq!(a.cloud, b.cloud);
}

#[test]
fn baseline_combinations_run() {
    let dir = tempfile::tempdir().unwrap();
    let scene_path = sphere_scene(&dir.path().join("scene"));
    for (recon, policy) in [
        (Reconstructor::Hull, Policy::Random),
        (Reconstructor::Alpha, Policy::Random),
        (Reconstructor::Gpis, Policy::Gpis),
        (Reconstructor::Hull, Policy::Gpis),
    ] {
        let cfg = vhsc_core::pipeline::RunConfig {
            reconstructor: recon,
            policy,
            touches: 2,
            ..quick_run(scene_path.clone(), None, dir.path().join(format!("{recon}_{policy}")))
        };
        let out = run_from_config(&cfg).unwrap();
        assert_eq!(out.reports.len(), 3, "{recon} {policy}");
        assert!(out.reports.iter().all(|r| (0.0..=1.0).contains(&r.jaccard)));
        if recon != Reconstructor::Alpha {
            assert!(out.reports.iter().all(|r| r.chamfer.is_finite() && r.chamfer < 0.5), "{recon} {policy}");
        }
    }
}

#[test]
fn missing_checkpoint_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let scene_path = sphere_scene(&dir.path().join("scene"));
    let cfg = quick_run(scene_path.clone(), None, dir.path().join("o"));
    assert!(matches!(run_from_config(&cfg), Err(vhsc_core::Error::Config(_))));
    let cfg = quick_run(scene_path, Some(dir.path().join("absent.ckpt")), dir.path().join("o"));
    assert!(matches!(run_from_config(&cfg), Err(vhsc_core::Error::Config(_))));
}

#[test]
fn benchmark_matrix_resume_and_aggregate() {
    let dir = tempfile::tempdir().unwrap();
    let (model, ckpt) = tiny_model(dir.path());
    let scenes = dir.path().join("scenes");
    let objects = vec![
        BenchObject { name: None, scene: write_scene(&scenes, "ball", &vhsc_core::geometry::shapes::icosphere(0.7, 3), 1) },
        BenchObject {
            name: Some("brick".into()),
            scene: write_scene(&scenes, "brick", &vhsc_core::geometry::shapes::box_mesh(vhsc_core::Vec3::new(0.6, 0.4, 0.3), 4), 2),
        },
    ];
    let suite = SuiteConfig {
        objects,
        reconstructors: vec![Reconstructor::Hull],
        policies: vec![Policy::Uncertainty, Policy::Random],
        repetitions: 3,
        base_seed: 10,
        checkpoint: Some(ckpt.clone()),
        output: dir.path().join("bench"),
        run: quick_run(Default::default(), Some(ckpt), Default::default()),
    };
    let first = run_benchmark(&suite, Some(&model)).unwrap();
    assert!(first.complete(), "{:?}", first.failed);
    assert_eq!((first.cells, first.computed, first.skipped), (12, 12, 0));
    assert_eq!(first.rows.len(), 72);
    let rows = read_reports(&suite.output.join(STEPS_FILE)).unwrap();
    assert_eq!(rows.len(), 72);
    let seeds: std::collections::BTreeSet<u64> = rows.iter().map(|r| r.seed).collect();
    assert_eq!(seeds.into_iter().collect::<Vec<_>>(), vec![10, 11, 12]);

    // Independent recomputation of the aggregate from the raw rows.
    let mut groups: BTreeMap<(String, String, usize), Vec<(f64, f64)>> = BTreeMap::new();
    for r in &rows {
        groups.entry((r.reconstructor.to_string(), r.policy.to_string(), r.t)).or_default().push((r.chamfer, r.jaccard));
    }
    let agg = read_aggregate(&suite.output.join(AGGREGATE_FILE)).unwrap();
    assert_eq!(agg.len(), groups.len());
    for a in &agg {
        let g = &groups[&(a.reconstructor.to_string(), a.policy.to_string(), a.t)];
        let n = g.len() as f64;
        let cm = g.iter().map(|x| x.0).sum::<f64>() / n;
        let jm = g.iter().map(|x| x.1).sum::<f64>() / n;
        let js = (g.iter().map(|x| (x.1 - jm) * (x.1 - jm)).sum::<f64>() / (n - 1.0)).sqrt();
        assert_eq!(a.runs, 6);
        assert!((a.chamfer_mean - cm).abs() <= 1e-12 * cm.abs().max(1.0));
        assert!((a.jaccard_mean - jm).abs() <= 1e-12);
        assert!((a.jaccard_std - js).abs() <= 1e-12);
    }

    let again = run_benchmark(&suite, Some(&model)).unwrap();
    assert_eq!((again.computed, again.skipped), (0, 12));
    assert_eq!(read_reports(&suite.output.join(STEPS_FILE)).unwrap(), rows);
}

#[test]
fn benchmark_records_failures() {
    let dir = tempfile::tempdir().unwrap();
    let suite = SuiteConfig {
        objects: vec![BenchObject { name: Some("ghost".into()), scene: dir.path().join("missing.json") }],
        reconstructors: vec![Reconstructor::Hull],
        policies: vec![Policy::Random],
        repetitions: 2,
        output: dir.path().join("bench"),
        run: quick_run(Default::default(), None, Default::default()),
        ..SuiteConfig::default()
    };
    let s = run_benchmark(&suite, None).unwrap();
    assert_eq!(s.failed.len(), 2);
    assert!(!s.complete());
    assert_eq!(fs::read_to_string(suite.output.join("failures.jsonl")).unwrap().lines().count(), 2);
}
