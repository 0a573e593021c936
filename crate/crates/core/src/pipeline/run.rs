use std::fs;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::config::{Outcome, Policy, Reconstructor, RunConfig};
use super::evaluate::{evaluate, Truth};
use crate::baselines::{alpha_shape, convex_hull, gpis_fit, gpis_policy, gpis_surface, random_target, FirstTouch, GpisModel};
use crate::geometry::io::{save_avgrid, save_obj, save_ply, write_atomic};
use crate::geometry::{evaluation_lattice, voxelize_parity, Lattice, PointCloud, Source, TriangleMesh, VoxelGrid};
use crate::haptic_sim::{capture_pointcloud, contact_to_observation, execute_touch, ContactResult, Scene};
use crate::implicit_net::{infer_latent, load_checkpoint, surface_mesh, LatentCode, TrainedModel};
use crate::uncertainty::{exclude_cluster, sample_shapes, select_touch, voxel_variance, SurfaceProbe, TouchTarget};
use crate::{rng_from_seed, Error, Result, Rng};

/// One row of `steps.csv`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepReport {
    pub run_id: String,
    pub object: String,
    pub reconstructor: Reconstructor,
    pub policy: Policy,
    pub t: usize,
    pub chamfer: f64,
    pub jaccard: f64,
    pub outcome: Outcome,
    pub seconds: f64,
    pub seed: u64,
}

/// Everything a run produced besides the files.
#[derive(Clone, Debug)]
pub struct RunOutput {
    pub reports: Vec<StepReport>,
    /// Visual cloud plus every hit contact.
    pub cloud: PointCloud,
    /// Reported reconstruction per step.
    pub meshes: Vec<TriangleMesh>,
    /// Calls made to the probe simulator.
    pub probes: usize,
}

pub const STEPS_FILE: &str = "steps.csv";
pub const LOG_FILE: &str = "run.log.jsonl";

pub fn write_reports(reports: &[StepReport], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in reports {
        w.serialize(r).map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Format(e.to_string()))?;
    write_atomic(path, &bytes)
}

pub fn read_reports(path: &Path) -> Result<Vec<StepReport>> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
    r.deserialize().map(|row| row.map_err(csv_err)).collect()
}

pub(crate) fn csv_err(e: csv::Error) -> Error {
    Error::Format(e.to_string())
}

struct Log {
    lines: String,
    path: std::path::PathBuf,
}

impl Log {
    fn push(&mut self, value: serde_json::Value) -> Result<()> {
        self.lines.push_str(&value.to_string());
        self.lines.push('\n');
        write_atomic(&self.path, self.lines.as_bytes())
    }
}

/// Reported reconstruction: the surface used for Chamfer and the solid used for voxels.
struct Recon {
    surface: TriangleMesh,
    solid: TriangleMesh,
}

impl Recon {
    fn closed(mesh: Option<TriangleMesh>) -> Self {
        let m = mesh.unwrap_or_default();
        Recon { surface: m.clone(), solid: m }
    }
}

/// Loads the scene and (when needed) the checkpoint, then runs.
pub fn run_from_config(cfg: &RunConfig) -> Result<RunOutput> {
    cfg.validate()?;
    let scene = Scene::load(&cfg.scene)?;
    let model = match (&cfg.checkpoint, cfg.needs_model()) {
        (Some(p), true) => {
            if !p.exists() {
                return Err(Error::Config(format!("checkpoint {} not found", p.display())));
            }
            Some(load_checkpoint(p)?)
        }
        _ => None,
    };
    run_active_completion(cfg, &scene, model.as_ref())
}

/// Visual capture, then M rounds of infer / sample / select / touch, then a
/// final inference over the full cloud. Writes per-step artifacts, `steps.csv`
/// and `run.log.jsonl` into `cfg.output`.
pub fn run_active_completion(cfg: &RunConfig, scene: &Scene, model: Option<&TrainedModel>) -> Result<RunOutput> {
    cfg.validate_settings()?;
    if cfg.needs_model() && model.is_none() {
        return Err(Error::Config("this run needs a trained model".into()));
    }
    fs::create_dir_all(&cfg.output)?;
    let out = &cfg.output;
    let run_id = cfg.run_name();
    let object = cfg.object_name();
    let lattice = evaluation_lattice();
    let bbox = lattice.bounds();
    let icfg = cfg.inference_config();

    let mut rng = rng_from_seed(cfg.seed);
    let mut metric_rng = rng_from_seed(cfg.seed);
    metric_rng.set_stream(1);
    let mut probe_rng = rng_from_seed(cfg.seed ^ scene.seed);
    probe_rng.set_stream(2);

    let mut log = Log { lines: String::new(), path: out.join(LOG_FILE) };
    log.push(json!({"event": "start", "run_id": run_id, "config": cfg}))?;

    let truth = Truth::new(scene.mesh(), cfg.eval_samples, &mut metric_rng)?;
    let visual = capture_pointcloud(scene)?;
    let first = FirstTouch::from_view(&scene.camera.position, &visual.points)?;
    log.push(json!({"event": "capture", "points": visual.len()}))?;

    let mut cloud = visual;
    let mut code: Option<LatentCode> = None;
    let mut outcome = Outcome::None;
    let mut reports = Vec::new();
    let mut meshes = Vec::new();
    let mut probes = 0;
    let mut clock = Instant::now();

    for t in 0..=cfg.touches {
        let selecting = t < cfg.touches;
        let use_igr = cfg.reconstructor == Reconstructor::Igr || (selecting && cfg.policy == Policy::Uncertainty);
        let inference = match (use_igr, model) {
            (true, Some(m)) => {
                let inf = infer_latent(&cloud, m, &icfg, code.as_ref(), &mut rng)?;
                code = Some(inf.last.clone());
                log.push(json!({
                    "event": "inference", "t": t, "points": cloud.len(),
                    "final_loss": inf.trace.last().map(|r| r.total), "stored": inf.stored.len(),
                }))?;
                Some((inf, m))
            }
            _ => None,
        };
        let igr_mesh = match &inference {
            Some((inf, m)) => surface_mesh(&m.decoder, &inf.last, &bbox, cfg.mesh_resolution)?,
            None => None,
        };
        let haptic = cloud.count(Source::Haptic);
        let need_gp = cfg.reconstructor == Reconstructor::Gpis || (selecting && cfg.policy == Policy::Gpis);
        let gp = if need_gp { Some(gpis_fit(&cloud, &cfg.gpis, &mut rng)?) } else { None };

        let recon = match cfg.reconstructor {
            Reconstructor::Igr => Recon::closed(igr_mesh.clone()),
            Reconstructor::Hull => Recon::closed(degenerate_as_empty(convex_hull(&cloud.points), &mut log, t)?),
            Reconstructor::Alpha => match alpha_shape(&cloud.points, cfg.alpha) {
                Ok(a) => Recon { surface: a.mesh, solid: a.solid },
                Err(e) => Recon::closed(degenerate_as_empty(Err(e), &mut log, t)?),
            },
            Reconstructor::Gpis => Recon::closed(gpis_surface(gp.as_ref().expect("fitted"), &bbox, cfg.mesh_resolution)?),
        };
        let (chamfer, jaccard) = evaluate(&recon.surface, &recon.solid, &truth, cfg.eval_samples, &mut metric_rng)?;
        save_obj(&recon.surface, &out.join(format!("recon_t{t}.obj")))?;
        save_ply(&cloud, &out.join(format!("cloud_t{t}.ply")))?;

        let variance = match (&inference, cfg.policy) {
            (Some((inf, m)), Policy::Uncertainty) if selecting => {
                let samples = sample_shapes(&inf.last_samples(cfg.samples), m, &lattice, cfg.sample_resolution)?;
                let v = voxel_variance(&samples)?;
                save_avgrid(&v, &out.join(format!("variance_t{t}.avgrid")))?;
                let surface = igr_mesh
                    .clone()
                    .filter(|m| !m.is_empty())
                    .or_else(|| samples.meshes.iter().find(|m| !m.is_empty()).cloned());
                Some((v, surface))
            }
            _ => None,
        };

        let report = StepReport {
            run_id: run_id.clone(),
            object: object.clone(),
            reconstructor: cfg.reconstructor,
            policy: cfg.policy,
            t,
            chamfer,
            jaccard,
            outcome,
            seconds: clock.elapsed().as_secs_f64(),
            seed: cfg.seed,
        };
        log.push(json!({"event": "step", "report": report}))?;
        reports.push(report);
        meshes.push(recon.surface.clone());
        write_reports(&reports, &out.join(STEPS_FILE))?;
        clock = Instant::now();
        if !selecting {
            break;
        }

        let ctx = Selection { cfg, lattice: &lattice, first: &first, haptic, gp: gp.as_ref(), variance: variance.as_ref(), recon: &recon };
        outcome = Outcome::Miss;
        let mut chooser = ctx.chooser(&mut rng)?;
        for attempt in 0..cfg.max_attempts {
            let target = match chooser.next(&ctx, attempt, &mut rng) {
                Ok(target) => target,
                Err(e) => {
                    log.push(json!({"event": "selection_failed", "t": t + 1, "attempt": attempt, "error": e.to_string()}))?;
                    break;
                }
            };
            probes += 1;
            let result = execute_touch(scene, &target, &mut probe_rng)?;
            log.push(json!({"event": "touch", "t": t + 1, "attempt": attempt, "target": target, "result": result}))?;
            if let ContactResult::Hit { .. } = result {
                cloud.extend(&contact_to_observation(&result, cfg.normal_mode, &target.direction)?);
                outcome = if target.fallback { Outcome::Fallback } else { Outcome::Hit };
                break;
            }
            chooser.exclude(&ctx, &target);
        }
    }
    log.push(json!({"event": "done", "hits": cloud.count(Source::Haptic), "probes": probes}))?;
    Ok(RunOutput { reports, cloud, meshes, probes })
}

fn degenerate_as_empty(mesh: Result<TriangleMesh>, log: &mut Log, t: usize) -> Result<Option<TriangleMesh>> {
    match mesh {
        Ok(m) => Ok(Some(m)),
        Err(e @ (Error::Degenerate(_) | Error::InvalidArgument(_))) => {
            log.push(json!({"event": "empty_reconstruction", "t": t, "error": e.to_string()}))?;
            Ok(None)
        }
        Err(e) => Err(e),
    }
}

struct Selection<'a> {
    cfg: &'a RunConfig,
    lattice: &'a Lattice,
    first: &'a FirstTouch,
    haptic: usize,
    gp: Option<&'a GpisModel>,
    variance: Option<&'a (VoxelGrid, Option<TriangleMesh>)>,
    recon: &'a Recon,
}

/// Per-touch selection state across miss retries.
struct Chooser {
    excluded: Vec<bool>,
    probe: Option<SurfaceProbe>,
    occupancy: Option<VoxelGrid>,
}

impl Selection<'_> {
    fn chooser(&self, rng: &mut Rng) -> Result<Chooser> {
        let excluded = vec![false; self.lattice.len()];
        let surface = match self.cfg.policy {
            Policy::Uncertainty => self.variance.and_then(|v| v.1.as_ref()),
            Policy::Random => Some(&self.recon.surface).filter(|m| !m.is_empty()),
            Policy::Gpis => None,
        };
        let probe = match surface {
            Some(m) => Some(SurfaceProbe::new(m, self.cfg.select.surface_samples, rng)?),
            None => None,
        };
        let occupancy = match (self.cfg.policy, &probe) {
            (Policy::Random, Some(_)) => Some(voxelize_parity(&self.recon.solid, self.lattice)?),
            _ => None,
        };
        Ok(Chooser { excluded, probe, occupancy })
    }
}

impl Chooser {
    fn next(&mut self, ctx: &Selection, attempt: usize, rng: &mut Rng) -> Result<TouchTarget> {
        let heuristic = || ctx.first.target(ctx.lattice, true);
        match ctx.cfg.policy {
            Policy::Uncertainty => match (ctx.variance, &self.probe) {
                (Some((v, _)), Some(probe)) => select_touch(v, probe, &ctx.cfg.select, &self.excluded, rng),
                _ => Ok(heuristic()),
            },
            Policy::Random => match (&self.occupancy, &self.probe) {
                (Some(grid), Some(probe)) => random_target(grid, probe, &self.excluded, rng),
                _ => Ok(heuristic()),
            },
            Policy::Gpis => match ctx.gp {
                Some(gp) if ctx.haptic > 0 || attempt > 0 => gpis_policy(gp, ctx.lattice, ctx.first, &self.excluded),
                _ if attempt == 0 => Ok(ctx.first.target(ctx.lattice, false)),
                _ => Ok(heuristic()),
            },
        }
    }

    fn exclude(&mut self, ctx: &Selection, target: &TouchTarget) {
        match (ctx.cfg.policy, ctx.variance) {
            (Policy::Uncertainty, Some((v, _))) => exclude_cluster(v, &ctx.cfg.select, &mut self.excluded, target.voxel),
            _ => self.excluded[target.voxel] = true,
        }
    }
}
