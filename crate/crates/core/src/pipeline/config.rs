use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::baselines::GpisConfig;
use crate::haptic_sim::NormalMode;
use crate::implicit_net::InferenceConfig;
use crate::uncertainty::SelectConfig;
use crate::{Error, Result};

macro_rules! named_enum {
    ($name:ident { $($variant:ident => $text:literal),+ $(,)? }) => {
        #[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        pub enum $name {
            $(#[serde(rename = $text)] $variant),+
        }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn name(self) -> &'static str {
                match self {
                    $($name::$variant => $text),+
                }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.name())
            }
        }

        impl FromStr for $name {
            type Err = Error;

            fn from_str(s: &str) -> Result<Self> {
                match s {
                    $($text => Ok($name::$variant),)+
                    _ => Err(Error::Config(format!(concat!("unknown ", stringify!($name), " '{}'"), s))),
                }
            }
        }
    };
}

named_enum!(Policy {
    Uncertainty => "uncertainty",
    Random => "random",
    Gpis => "gpis",
});

named_enum!(Reconstructor {
    Igr => "igr",
    Hull => "hull",
    Alpha => "alpha",
    Gpis => "gpis",
});

named_enum!(Outcome {
    None => "none",
    Hit => "hit",
    Fallback => "fallback",
    Miss => "miss",
});

/// One active completion run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    /// Scene JSON.
    pub scene: PathBuf,
    pub checkpoint: Option<PathBuf>,
    pub policy: Policy,
    pub reconstructor: Reconstructor,
    /// Haptic explorations M.
    pub touches: usize,
    /// Latent descent steps G per inference.
    pub steps: usize,
    /// Store interval L.
    pub store_every: usize,
    /// Shape samples S taken from the last stored codes.
    pub samples: usize,
    pub seed: u64,
    pub output: PathBuf,
    /// Object label for reports; defaults to the scene file stem.
    pub object: Option<String>,
    /// Run label for reports; derived from the other fields when absent.
    pub run_id: Option<String>,
    /// Selections per touch before the touch is recorded as a miss.
    pub max_attempts: usize,
    pub normal_mode: NormalMode,
    /// Cells per axis of the reconstruction grid.
    pub mesh_resolution: usize,
    /// Cells per axis when decoding shape samples.
    pub sample_resolution: usize,
    /// Surface samples per mesh for Chamfer.
    pub eval_samples: usize,
    pub alpha: f64,
    pub gpis: GpisConfig,
    pub select: SelectConfig,
    /// Optimizer settings; `steps` and `store_every` are taken from the fields above.
    pub inference: InferenceConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            scene: PathBuf::new(),
            checkpoint: None,
            policy: Policy::Uncertainty,
            reconstructor: Reconstructor::Igr,
            touches: 5,
            steps: 800,
            store_every: 50,
            samples: 4,
            seed: 0,
            output: PathBuf::from("run"),
            object: None,
            run_id: None,
            max_attempts: 5,
            normal_mode: NormalMode::GtNormal,
            mesh_resolution: 64,
            sample_resolution: 40,
            eval_samples: 10_000,
            alpha: 0.3,
            gpis: GpisConfig::default(),
            select: SelectConfig::default(),
            inference: InferenceConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn needs_model(&self) -> bool {
        self.reconstructor == Reconstructor::Igr || self.policy == Policy::Uncertainty
    }

    /// Checks everything, including that a checkpoint is named when one is needed.
    pub fn validate(&self) -> Result<()> {
        self.validate_settings()?;
        if self.needs_model() && self.checkpoint.is_none() {
            return Err(Error::Config("a checkpoint is required for the igr reconstructor or the uncertainty policy".into()));
        }
        Ok(())
    }

    /// Checks the numeric settings only.
    pub fn validate_settings(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.into()));
        if self.store_every == 0 || self.store_every > self.steps {
            return bad("store interval must be in 1..=steps");
        }
        if self.policy == Policy::Uncertainty && (self.samples < 2 || self.steps / self.store_every < 2) {
            return bad("uncertainty policy needs at least two stored shape samples");
        }
        if self.max_attempts == 0 {
            return bad("max_attempts must be >= 1");
        }
        if self.mesh_resolution < 2 || self.sample_resolution < 2 || self.eval_samples == 0 {
            return bad("resolutions must be >= 2 and eval_samples >= 1");
        }
        if !(self.alpha > 0.0) {
            return bad("alpha must be positive");
        }
        self.gpis.validate().map_err(|e| Error::Config(e.to_string()))?;
        self.inference_config().validate().map_err(|e| Error::Config(e.to_string()))
    }

    pub fn inference_config(&self) -> InferenceConfig {
        InferenceConfig { steps: self.steps, store_every: self.store_every, ..self.inference.clone() }
    }

    pub fn object_name(&self) -> String {
        self.object.clone().unwrap_or_else(|| {
            self.scene.file_stem().map_or_else(|| "object".into(), |s| s.to_string_lossy().into_owned())
        })
    }

    pub fn run_name(&self) -> String {
        self.run_id.clone().unwrap_or_else(|| {
            format!("{}_{}_{}_s{}", self.object_name(), self.reconstructor, self.policy, self.seed)
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        for p in Policy::ALL {
            assert_eq!(p.name().parse::<Policy>().unwrap(), *p);
            assert_eq!(serde_json::to_string(p).unwrap(), format!("\"{p}\""));
        }
        for r in Reconstructor::ALL {
            assert_eq!(r.name().parse::<Reconstructor>().unwrap(), *r);
        }
        assert!("bpa".parse::<Reconstructor>().is_err());
    }

    #[test]
    fn defaults_and_validation() {
        let c = RunConfig::default();
        assert_eq!((c.touches, c.steps, c.store_every, c.samples), (5, 800, 50, 4));
        assert!(matches!(c.validate(), Err(Error::Config(_))));
        let c = RunConfig { checkpoint: Some("m.ckpt".into()), ..RunConfig::default() };
        c.validate().unwrap();
        let c = RunConfig { store_every: 900, ..c };
        assert!(c.validate().is_err());
        let c = RunConfig { policy: Policy::Random, reconstructor: Reconstructor::Hull, ..RunConfig::default() };
        c.validate().unwrap();
    }

    #[test]
    fn partial_json() {
        let c: RunConfig = serde_json::from_str(r#"{"scene": "a/mug.json", "policy": "random", "touches": 0}"#).unwrap();
        assert_eq!(c.policy, Policy::Random);
        assert_eq!(c.touches, 0);
        assert_eq!(c.object_name(), "mug");
        assert!(serde_json::from_str::<RunConfig>(r#"{"policy": "bogus"}"#).is_err());
    }
}
