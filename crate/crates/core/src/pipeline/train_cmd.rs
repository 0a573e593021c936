use std::path::Path;

use super::corpus::load_corpus_clouds;
use crate::geometry::io::write_atomic;
use crate::implicit_net::{loss_csv, save_checkpoint, train_with_progress, LossRecord, TrainConfig, TrainedModel};
use crate::{Error, Result};

/// Trains on every cloud of the corpus, then writes the checkpoint and the
/// per-iteration loss CSV. The CSV is also written when training diverges.
pub fn train_command(
    corpus: &Path,
    cfg: &TrainConfig,
    checkpoint: &Path,
    loss_path: &Path,
    progress: impl FnMut(&LossRecord),
) -> Result<(TrainedModel, Vec<LossRecord>)> {
    let data = load_corpus_clouds(corpus)?;
    match train_with_progress(&data, cfg, progress) {
        Ok((model, trace)) => {
            save_checkpoint(&model, checkpoint)?;
            write_atomic(loss_path, loss_csv(&trace).as_bytes())?;
            Ok((model, trace))
        }
        Err(Error::Diverged { iteration, trace }) => {
            write_atomic(loss_path, loss_csv(&trace).as_bytes())?;
            Err(Error::Diverged { iteration, trace })
        }
        Err(e) => Err(e),
    }
}

/// Mean of the first and last `window` totals.
pub fn smoothed_ends(trace: &[LossRecord], window: usize) -> Option<(f64, f64)> {
    let w = window.min(trace.len());
    if w == 0 {
        return None;
    }
    let mean = |s: &[LossRecord]| s.iter().map(|r| r.total).sum::<f64>() / s.len() as f64;
    Some((mean(&trace[..w]), mean(&trace[trace.len() - w..])))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::implicit_net::{load_checkpoint, Architecture};
    use crate::pipeline::corpus::{build_corpus, CorpusConfig};

    #[test]
    fn writes_checkpoint_and_csv() {
        let dir = tempfile::tempdir().unwrap();
        let corpus = dir.path().join("corpus");
        build_corpus(&CorpusConfig { shapes: 2, rotations: 1, points: 300, subdivisions: 2, ..CorpusConfig::default() }, &corpus).unwrap();
        let cfg = TrainConfig {
            architecture: Architecture { layers: 3, width: 16, skip: Some(1), beta: 100.0, latent_dim: 4 },
            iterations: 12,
            batch_shapes: 2,
            points_per_shape: 64,
            seed: 3,
            ..TrainConfig::default()
        };
        let (ck, csv) = (dir.path().join("m.ckpt"), dir.path().join("loss.csv"));
        let (model, trace) = train_command(&corpus, &cfg, &ck, &csv, |_| {}).unwrap();
        assert_eq!(load_checkpoint(&ck).unwrap(), model);
        let text = std::fs::read_to_string(&csv).unwrap();
        assert_eq!(text.lines().count(), 1 + cfg.iterations);
        assert_eq!(trace.len(), cfg.iterations);
        let (ck2, csv2) = (dir.path().join("m2.ckpt"), dir.path().join("loss2.csv"));
        train_command(&corpus, &cfg, &ck2, &csv2, |_| {}).unwrap();
        assert_eq!(std::fs::read(&ck).unwrap(), std::fs::read(&ck2).unwrap());
        assert_eq!(text, std::fs::read_to_string(&csv2).unwrap());
    }
}
