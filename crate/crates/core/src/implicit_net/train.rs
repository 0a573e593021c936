//! Joint decoder/latent training and per-observation latent inference.

use serde::{Deserialize, Serialize};

use super::decoder::{Architecture, DecoderState, LatentCode};
use super::loss::{draw_batch, loss_gradients, neighbor_sigmas, LossConfig, LossRecord, LossTerms};
use crate::error::invalid;
use crate::geometry::PointCloud;
use crate::{rng_from_seed, Error, Result, Rng};

/// Step multiplier: 1, then 1/2 from half the budget, 1/4 from three quarters.
pub fn step_schedule(iteration: usize, budget: usize) -> f64 {
    if 4 * iteration >= 3 * budget {
        0.25
    } else if 2 * iteration >= budget {
        0.5
    } else {
        1.0
    }
}

/// Heavy-ball update: `v = m v + g; x -= step v`.
fn momentum_step(x: &mut [f64], v: &mut [f64], g: &[f64], momentum: f64, step: f64) {
    for ((x, v), g) in x.iter_mut().zip(v.iter_mut()).zip(g) {
        *v = momentum * *v + g;
        *x -= step * *v;
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub architecture: Architecture,
    pub loss: LossConfig,
    pub iterations: usize,
    /// Shapes per iteration.
    pub batch_shapes: usize,
    /// Surface points drawn per shape and iteration.
    pub points_per_shape: usize,
    pub param_step: f64,
    pub latent_step: f64,
    pub momentum: f64,
    /// Std of the initial training latents.
    pub latent_init_std: f64,
    /// Radius of the sphere the untrained decoder represents.
    pub init_radius: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            architecture: Architecture::desk(),
            loss: LossConfig::default(),
            iterations: 3500,
            batch_shapes: 8,
            points_per_shape: 512,
            param_step: 5e-4,
            latent_step: 1e-3,
            momentum: 0.9,
            latent_init_std: 1e-3,
            init_radius: 0.5,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.architecture.validate()?;
        self.loss.validate()?;
        if !(self.loss.eikonal_weight > 0.0) {
            return Err(invalid("training needs a positive Eikonal weight"));
        }
        if self.iterations == 0 || self.batch_shapes == 0 || self.points_per_shape == 0 {
            return Err(invalid("iterations, batch_shapes and points_per_shape must be positive"));
        }
        if !(self.param_step > 0.0 && self.latent_step > 0.0) || !(0.0..1.0).contains(&self.momentum) {
            return Err(invalid("bad optimizer settings"));
        }
        Ok(())
    }
}

/// Decoder, one latent per training shape, and the normalization convention.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainedModel {
    pub decoder: DecoderState,
    pub latents: Vec<LatentCode>,
    pub shape_ids: Vec<String>,
    /// Half extent of the longest axis of every training shape.
    pub normalized_half_extent: f64,
}

impl TrainedModel {
    pub fn latent_of(&self, id: &str) -> Option<&LatentCode> {
        self.shape_ids.iter().position(|s| s == id).map(|i| &self.latents[i])
    }
}

/// Jointly descends the decoder and one latent per shape.
///
/// Returns the model and the per-iteration loss trace (terms averaged over
/// the shapes of the iteration).
pub fn train_multishape(
    dataset: &[(PointCloud, String)],
    cfg: &TrainConfig,
) -> Result<(TrainedModel, Vec<LossRecord>)> {
    train_with_progress(dataset, cfg, |_| {})
}

pub fn train_with_progress(
    dataset: &[(PointCloud, String)],
    cfg: &TrainConfig,
    mut progress: impl FnMut(&LossRecord),
) -> Result<(TrainedModel, Vec<LossRecord>)> {
    cfg.validate()?;
    if dataset.is_empty() {
        return Err(invalid("training needs at least one shape"));
    }
    for (c, id) in dataset {
        if c.is_empty() {
            return Err(invalid(format!("shape {id} has an empty cloud")));
        }
    }
    let mut rng = rng_from_seed(cfg.seed);
    let arch = cfg.architecture;
    let mut decoder = DecoderState::geometric_init(arch, cfg.init_radius, &mut rng)?;
    let mut latents: Vec<LatentCode> = dataset
        .iter()
        .map(|_| LatentCode::random(arch.latent_dim, cfg.latent_init_std, &mut rng))
        .collect();
    let sigmas: Vec<Vec<f64>> = dataset
        .iter()
        .map(|(c, _)| neighbor_sigmas(&c.points, cfg.loss.eikonal_neighbor))
        .collect();
    let mut vel = vec![0.0; decoder.params().len()];
    let mut lat_vel = vec![vec![0.0; arch.latent_dim]; dataset.len()];
    let per_iter = cfg.batch_shapes.min(dataset.len());
    let mut trace = Vec::with_capacity(cfg.iterations);

    for it in 0..cfg.iterations {
        let factor = step_schedule(it, cfg.iterations);
        let chosen = rand::seq::index::sample(&mut rng, dataset.len(), per_iter).into_vec();
        let mut grad = vec![0.0; vel.len()];
        let mut terms = LossTerms::default();
        for &j in &chosen {
            let batch = draw_batch(&dataset[j].0, &sigmas[j], cfg.points_per_shape, &cfg.loss, &mut rng);
            let g = loss_gradients(&batch.cloud, &batch.eikonal, &latents[j], &decoder, &cfg.loss, true)?;
            let gp = g.params.expect("requested");
            for (a, b) in grad.iter_mut().zip(&gp) {
                *a += b / per_iter as f64;
            }
            terms.total += g.terms.total / per_iter as f64;
            terms.data += g.terms.data / per_iter as f64;
            terms.normal += g.terms.normal / per_iter as f64;
            terms.eikonal += g.terms.eikonal / per_iter as f64;
            if !g.terms.total.is_finite() {
                break;
            }
            momentum_step(&mut latents[j].0, &mut lat_vel[j], &g.latent, cfg.momentum, cfg.latent_step * factor);
        }
        let rec = LossRecord::new(it, terms);
        trace.push(rec);
        if !terms.total.is_finite() || grad.iter().any(|v| !v.is_finite()) {
            return Err(Error::Diverged { iteration: it, trace });
        }
        momentum_step(decoder.params_mut(), &mut vel, &grad, cfg.momentum, cfg.param_step * factor);
        progress(&rec);
    }

    let model = TrainedModel {
        decoder,
        latents,
        shape_ids: dataset.iter().map(|(_, id)| id.clone()).collect(),
        normalized_half_extent: 1.0,
    };
    Ok((model, trace))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InferenceConfig {
    /// Gradient steps per call.
    pub steps: usize,
    /// Store the code after every `store_every` steps.
    pub store_every: usize,
    pub step_size: f64,
    pub momentum: f64,
    /// Points per mini-batch, drawn with replacement.
    pub batch_points: usize,
    pub latent_init_std: f64,
    pub loss: LossConfig,
}

impl Default for InferenceConfig {
    fn default() -> Self {
        InferenceConfig {
            steps: 800,
            store_every: 50,
            step_size: 1e-3,
            momentum: 0.9,
            batch_points: 128,
            latent_init_std: 1e-3,
            loss: LossConfig::default(),
        }
    }
}

impl InferenceConfig {
    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 || self.store_every == 0 {
            return Err(invalid("inference needs at least one step and a positive store interval"));
        }
        if self.store_every > self.steps {
            return Err(invalid(format!(
                "store interval {} exceeds the step count {}",
                self.store_every, self.steps
            )));
        }
        if !(self.step_size > 0.0) || !(0.0..1.0).contains(&self.momentum) || self.batch_points == 0 {
            return Err(invalid("bad inference optimizer settings"));
        }
        self.loss.validate()
    }
}

#[derive(Clone, Debug)]
pub struct Inference {
    /// `(step, code)` for every step divisible by the store interval.
    pub stored: Vec<(usize, LatentCode)>,
    pub last: LatentCode,
    pub trace: Vec<LossRecord>,
}

impl Inference {
    /// The last `s` stored codes, oldest first.
    pub fn last_samples(&self, s: usize) -> Vec<LatentCode> {
        let k = self.stored.len().saturating_sub(s);
        self.stored[k..].iter().map(|(_, z)| z.clone()).collect()
    }
}

/// Fits a latent to `cloud` with the decoder frozen.
///
/// Starts from `init` when given (warm start), otherwise from a fresh draw.
pub fn infer_latent(
    cloud: &PointCloud,
    model: &TrainedModel,
    cfg: &InferenceConfig,
    init: Option<&LatentCode>,
    rng: &mut Rng,
) -> Result<Inference> {
    cfg.validate()?;
    if cloud.is_empty() {
        return Err(invalid("latent inference needs a non-empty cloud"));
    }
    let dim = model.decoder.latent_dim();
    let mut z = match init {
        Some(z) if z.dim() != dim => return Err(invalid("initial latent has the wrong dimension")),
        Some(z) => z.clone(),
        None => LatentCode::random(dim, cfg.latent_init_std, rng),
    };
    let sigmas = neighbor_sigmas(&cloud.points, cfg.loss.eikonal_neighbor);
    let mut vel = vec![0.0; dim];
    let mut stored = Vec::with_capacity(cfg.steps / cfg.store_every);
    let mut trace = Vec::with_capacity(cfg.steps);
    for g in 1..=cfg.steps {
        let batch = draw_batch(cloud, &sigmas, cfg.batch_points, &cfg.loss, rng);
        let grads = loss_gradients(&batch.cloud, &batch.eikonal, &z, &model.decoder, &cfg.loss, false)?;
        trace.push(LossRecord::new(g, grads.terms));
        if !grads.terms.total.is_finite() {
            return Err(Error::Diverged { iteration: g, trace });
        }
        let step = cfg.step_size * step_schedule(g - 1, cfg.steps);
        momentum_step(&mut z.0, &mut vel, &grads.latent, cfg.momentum, step);
        if g % cfg.store_every == 0 {
            stored.push((g, z.clone()));
        }
    }
    Ok(Inference { stored, last: z, trace })
}

/// CSV of a loss trace: `iteration,total,data,normal,eikonal`.
pub fn loss_csv(trace: &[LossRecord]) -> String {
    let mut s = String::from("iteration,total,data,normal,eikonal\n");
    for r in trace {
        s.push_str(&format!("{},{},{},{},{}\n", r.iteration, r.total, r.data, r.normal, r.eikonal));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::shapes::{box_mesh, icosphere};
    use crate::geometry::sample_surface;
    use crate::Vec3;

    fn tiny() -> Architecture {
        Architecture { layers: 4, width: 32, skip: Some(2), beta: 100.0, latent_dim: 8 }
    }

    #[test]
    fn schedule_halves_twice() {
        let f: Vec<f64> = (0..8).map(|i| step_schedule(i, 8)).collect();
        assert_eq!(f, vec![1.0, 1.0, 1.0, 1.0, 0.5, 0.5, 0.25, 0.25]);
    }

    #[test]
    fn stored_code_steps() {
        let mut rng = rng_from_seed(1);
        let cloud = sample_surface(&icosphere(0.8, 2), 300, &mut rng).unwrap();
        let decoder = DecoderState::geometric_init(tiny(), 0.5, &mut rng).unwrap();
        let model = TrainedModel { decoder, latents: vec![], shape_ids: vec![], normalized_half_extent: 1.0 };
        let cfg = InferenceConfig { steps: 100, store_every: 50, ..Default::default() };
        let inf = infer_latent(&cloud, &model, &cfg, None, &mut rng).unwrap();
        assert_eq!(inf.stored.iter().map(|s| s.0).collect::<Vec<_>>(), vec![50, 100]);
        assert_eq!(inf.stored[1].1, inf.last);
        let bad = InferenceConfig { steps: 10, store_every: 50, ..Default::default() };
        assert!(infer_latent(&cloud, &model, &bad, None, &mut rng).is_err());
    }

    #[test]
    fn training_descends_and_separates() {
        let mut rng = rng_from_seed(2);
        let sphere = sample_surface(&icosphere(0.9, 3), 1500, &mut rng).unwrap();
        let cube = sample_surface(&box_mesh(Vec3::new(0.9, 0.5, 0.4), 4), 1500, &mut rng).unwrap();
        let data = vec![(sphere, "sphere".to_string()), (cube, "box".to_string())];
        let cfg = TrainConfig {
            architecture: tiny(),
            iterations: 300,
            points_per_shape: 256,
            seed: 7,
            ..Default::default()
        };
        let (model, trace) = train_multishape(&data, &cfg).unwrap();
        assert_eq!(trace.len(), 300);
        let smooth = |a: usize, b: usize| trace[a..b].iter().map(|r| r.total).sum::<f64>() / (b - a) as f64;
        assert!(smooth(290, 300) < trace[10].total, "{} vs {}", smooth(290, 300), trace[10].total);
        let (a, b) = (model.latent_of("sphere").unwrap(), model.latent_of("box").unwrap());
        let d: f64 = a.0.iter().zip(&b.0).map(|(x, y)| (x - y).powi(2)).sum();
        assert!(d > 0.0);

        let (again, _) = train_multishape(&data, &cfg).unwrap();
        assert_eq!(again, model);
    }
}
