use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::config::{Policy, Reconstructor, RunConfig};
use super::run::{csv_err, read_reports, run_active_completion, write_reports, StepReport, STEPS_FILE};
use crate::geometry::io::write_atomic;
use crate::haptic_sim::Scene;
use crate::implicit_net::{load_checkpoint, TrainedModel};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchObject {
    /// Defaults to the scene file stem.
    pub name: Option<String>,
    pub scene: PathBuf,
}

impl BenchObject {
    pub fn label(&self) -> String {
        self.name.clone().unwrap_or_else(|| {
            self.scene.file_stem().map_or_else(|| "object".into(), |s| s.to_string_lossy().into_owned())
        })
    }
}

/// Objects x reconstructors x policies x repetitions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SuiteConfig {
    pub objects: Vec<BenchObject>,
    pub reconstructors: Vec<Reconstructor>,
    pub policies: Vec<Policy>,
    pub repetitions: usize,
    /// Repetition `r` runs with seed `base_seed + r`.
    pub base_seed: u64,
    pub checkpoint: Option<PathBuf>,
    pub output: PathBuf,
    /// Settings shared by every cell; scene, policy, reconstructor, seed and output are overridden.
    pub run: RunConfig,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        SuiteConfig {
            objects: Vec::new(),
            reconstructors: vec![Reconstructor::Igr],
            policies: vec![Policy::Uncertainty, Policy::Random],
            repetitions: 3,
            base_seed: 0,
            checkpoint: None,
            output: PathBuf::from("bench"),
            run: RunConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub reconstructor: Reconstructor,
    pub policy: Policy,
    pub t: usize,
    pub runs: usize,
    /// Runs with a finite Chamfer value (empty reconstructions have none).
    pub chamfer_runs: usize,
    pub chamfer_mean: f64,
    pub chamfer_std: f64,
    pub jaccard_mean: f64,
    pub jaccard_std: f64,
}

#[derive(Clone, Debug)]
pub struct BenchSummary {
    pub cells: usize,
    pub computed: usize,
    pub skipped: usize,
    /// `(cell id, error)`.
    pub failed: Vec<(String, String)>,
    pub rows: Vec<StepReport>,
    pub aggregate: Vec<AggregateRow>,
}

impl BenchSummary {
    pub fn complete(&self) -> bool {
        self.failed.is_empty()
    }
}

pub const AGGREGATE_FILE: &str = "aggregate.csv";
pub const FAILURES_FILE: &str = "failures.jsonl";

/// Mean and sample standard deviation; `(NaN, NaN)` when empty.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}

/// Groups rows by `(reconstructor, policy, t)`.
pub fn aggregate(rows: &[StepReport]) -> Vec<AggregateRow> {
    let mut groups: BTreeMap<(Reconstructor, Policy, usize), Vec<&StepReport>> = BTreeMap::new();
    for r in rows {
        groups.entry((r.reconstructor, r.policy, r.t)).or_default().push(r);
    }
    groups
        .into_iter()
        .map(|((reconstructor, policy, t), g)| {
            let ch: Vec<f64> = g.iter().map(|r| r.chamfer).filter(|c| c.is_finite()).collect();
            let ja: Vec<f64> = g.iter().map(|r| r.jaccard).collect();
            let (chamfer_mean, chamfer_std) = mean_std(&ch);
            let (jaccard_mean, jaccard_std) = mean_std(&ja);
            AggregateRow {
                reconstructor,
                policy,
                t,
                runs: g.len(),
                chamfer_runs: ch.len(),
                chamfer_mean,
                chamfer_std,
                jaccard_mean,
                jaccard_std,
            }
        })
        .collect()
}

pub fn write_aggregate(rows: &[AggregateRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(csv_err)?;
    }
    write_atomic(path, &w.into_inner().map_err(|e| Error::Format(e.to_string()))?)
}

pub fn read_aggregate(path: &Path) -> Result<Vec<AggregateRow>> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
    r.deserialize().map(|row| row.map_err(csv_err)).collect()
}

/// Loads the checkpoint named by the suite (when any cell needs it) and runs.
pub fn run_benchmark_from(suite: &SuiteConfig) -> Result<BenchSummary> {
    let needs = suite.policies.contains(&Policy::Uncertainty) || suite.reconstructors.contains(&Reconstructor::Igr);
    let model = match (&suite.checkpoint, needs) {
        (Some(p), true) => Some(load_checkpoint(p)?),
        (None, true) => return Err(Error::Config("suite needs a checkpoint".into())),
        _ => None,
    };
    run_benchmark(suite, model.as_ref())
}

/// Runs every cell not already completed under `suite.output`, then writes
/// `steps.csv` (all rows), `aggregate.csv` and `failures.jsonl`. Cell failures
/// are recorded and never abort the matrix.
pub fn run_benchmark(suite: &SuiteConfig, model: Option<&TrainedModel>) -> Result<BenchSummary> {
    if suite.repetitions == 0 || suite.objects.is_empty() || suite.policies.is_empty() || suite.reconstructors.is_empty() {
        return Err(Error::Config("suite matrix is empty".into()));
    }
    fs::create_dir_all(&suite.output)?;
    let expected = suite.run.touches + 1;
    let mut summary = BenchSummary { cells: 0, computed: 0, skipped: 0, failed: Vec::new(), rows: Vec::new(), aggregate: Vec::new() };
    for obj in &suite.objects {
        let name = obj.label();
        let mut scene: Option<std::result::Result<Scene, String>> = None;
        for &reconstructor in &suite.reconstructors {
            for &policy in &suite.policies {
                for rep in 0..suite.repetitions {
                    summary.cells += 1;
                    let seed = suite.base_seed + rep as u64;
                    let cell = format!("{name}/{reconstructor}_{policy}_r{rep}");
                    let dir = suite.output.join("cells").join(&cell);
                    if let Ok(rows) = read_reports(&dir.join(STEPS_FILE)) {
                        if rows.len() == expected {
                            summary.skipped += 1;
                            summary.rows.extend(rows);
                            continue;
                        }
                    }
                    let loaded = scene.get_or_insert_with(|| Scene::load(&obj.scene).map_err(|e| e.to_string()));
                    let result = match loaded {
                        Ok(sc) => {
                            let cfg = RunConfig {
                                scene: obj.scene.clone(),
                                checkpoint: suite.checkpoint.clone(),
                                policy,
                                reconstructor,
                                seed,
                                output: dir.clone(),
                                object: Some(name.clone()),
                                run_id: Some(cell.replace('/', "_")),
                                ..suite.run.clone()
                            };
                            run_active_completion(&cfg, sc, model).map_err(|e| e.to_string())
                        }
                        Err(e) => Err(e.clone()),
                    };
                    match result {
                        Ok(out) => {
                            summary.computed += 1;
                            summary.rows.extend(out.reports);
                        }
                        Err(e) => summary.failed.push((cell, e)),
                    }
                }
            }
        }
    }
    write_reports(&summary.rows, &suite.output.join(STEPS_FILE))?;
    summary.aggregate = aggregate(&summary.rows);
    write_aggregate(&summary.aggregate, &suite.output.join(AGGREGATE_FILE))?;
    let failures: String = summary
        .failed
        .iter()
        .map(|(cell, e)| format!("{}\n", json!({"cell": cell, "error": e})))
        .collect();
    write_atomic(&suite.output.join(FAILURES_FILE), failures.as_bytes())?;
    Ok(summary)
}
