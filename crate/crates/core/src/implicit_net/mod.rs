//! Latent-conditioned implicit decoder f(x; theta, z): forward evaluation,
//! exact gradients, Eikonal-regularized fitting, training and latent inference.

mod checkpoint;
mod decoder;
mod loss;
mod surface;
mod train;

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, CHECKPOINT_MAGIC};
pub use decoder::{Architecture, DecoderState, LatentCode};
pub(crate) use decoder::{gemm_ab, gemm_abt};
pub use loss::{
    draw_batch, loss_gradients, neighbor_sigmas, objective, reconstruction_loss, Batch, Gradients,
    LossConfig, LossRecord, LossTerms,
};
pub use surface::surface_mesh;
pub use train::{
    infer_latent, loss_csv, step_schedule, train_multishape, train_with_progress, Inference,
    InferenceConfig, TrainConfig, TrainedModel,
};
