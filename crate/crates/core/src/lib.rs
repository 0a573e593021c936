//! Active visuo-haptic shape completion.
//!
//! A single simulated depth capture is completed into a watertight shape by a
//! latent-conditioned implicit decoder. Further observations come from
//! simulated straight-line touches placed where the decoder's shape samples
//! disagree most. The crate also ships the geometric baselines (convex hull,
//! alpha shapes, Gaussian process implicit surfaces), the random and GP
//! uncertainty touch policies, and the benchmark harness used to compare them.
//!
//! Module map:
//! - [`geometry`]: meshes, clouds, voxel grids, ray casting, isosurfaces, metrics, file formats
//! - [`implicit_net`]: the decoder, its Eikonal-regularized loss with exact gradients, training and latent inference
//! - [`uncertainty`]: shape samples from intermediate codes, voxel variance, touch selection
//! - [`haptic_sim`]: simulated camera and probe
//! - [`baselines`]: hull / alpha / GPIS reconstructors and baseline policies
//! - [`pipeline`]: the active completion loop, corpus generation, training and benchmark drivers

pub mod baselines;
pub mod geometry;
pub mod haptic_sim;
pub mod implicit_net;
pub mod pipeline;
pub mod uncertainty;

mod error;

pub use error::{Error, Result};

/// 3D vector used for positions, directions and normals throughout the crate.
pub type Vec3 = nalgebra::Vector3<f64>;

/// Deterministic random number generator used for every stochastic step.
pub type Rng = rand_chacha::ChaCha8Rng;

/// Build the crate RNG from a seed.
pub fn rng_from_seed(seed: u64) -> Rng {
    use rand::SeedableRng;
    Rng::seed_from_u64(seed)
}
