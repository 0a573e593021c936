use std::fs;
use std::path::Path;
use std::process::Command;

fn vhsc(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_vhsc")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = vhsc(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let corpus = d.join("corpus");
    let text = ok(&["corpus", "--out", s(&corpus), "--shapes", "2", "--rotations", "2", "--points", "300", "--scenes", "--families", "sphere,box"]);
    assert!(text.contains("4 clouds"));
    let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(corpus.join("manifest.json")).unwrap()).unwrap();
    let scene = corpus.join(manifest["entries"][0]["scene"].as_str().unwrap());

    let train_cfg = d.join("train.json");
    fs::write(
        &train_cfg,
        r#"{"architecture": {"layers": 3, "width": 16, "skip": 1, "beta": 100.0, "latent_dim": 4},
            "batch_shapes": 2, "points_per_shape": 64}"#,
    )
    .unwrap();
    let ckpt = d.join("model.ckpt");
    ok(&["train", "--corpus", s(&corpus), "--out", s(&ckpt), "--config", s(&train_cfg), "--iterations", "15", "--every", "0"]);
    assert!(ckpt.exists());
    let loss = fs::read_to_string(d.join("model.ckpt.loss.csv")).unwrap();
    assert_eq!(loss.lines().count(), 16);

    let run_cfg = d.join("run.json");
    let run = serde_json::json!({
        "scene": scene, "checkpoint": ckpt, "touches": 1, "steps": 10, "store_every": 5,
        "mesh_resolution": 16, "sample_resolution": 12, "eval_samples": 500,
        "select": {"surface_samples": 1000}, "output": d.join("run"),
    });
    fs::write(&run_cfg, run.to_string()).unwrap();
    let table = ok(&["run", "--config", s(&run_cfg)]);
    assert_eq!(table.lines().count(), 3);
    let steps = d.join("run").join("steps.csv");
    assert_eq!(fs::read_to_string(&steps).unwrap().lines().count(), 3);

    let metrics = ok(&["metrics", "--recon", s(&d.join("run").join("recon_t1.obj")), "--truth", s(&corpus.join("meshes").join("sphere_000_v00.obj")), "--samples", "500"]);
    let m: serde_json::Value = serde_json::from_str(&metrics).unwrap();
    assert!(m["jaccard"].as_f64().unwrap() >= 0.0);
    let agg = ok(&["metrics", "--steps", s(&steps)]);
    assert_eq!(agg.lines().count(), 3);

    let suite = d.join("suite.json");
    let bench = serde_json::json!({
        "objects": [{"scene": scene}],
        "reconstructors": ["hull"], "policies": ["random"], "repetitions": 2,
        "output": d.join("bench"),
        "run": {"touches": 1, "eval_samples": 500, "select": {"surface_samples": 1000}},
    });
    fs::write(&suite, bench.to_string()).unwrap();
    assert!(ok(&["bench", "--config", s(&suite)]).contains("computed 2"));
    assert!(ok(&["bench", "--config", s(&suite)]).contains("skipped 2"));

    let broken = d.join("broken.json");
    let bad = serde_json::json!({
        "objects": [{"scene": d.join("nope.json")}], "reconstructors": ["hull"], "policies": ["random"],
        "repetitions": 1, "output": d.join("bench2"),
    });
    fs::write(&broken, bad.to_string()).unwrap();
    assert_eq!(vhsc(&["bench", "--config", s(&broken)]).status.code(), Some(2));
    assert!(!vhsc(&["run", "--config", s(&d.join("absent.json"))]).status.success());
}
