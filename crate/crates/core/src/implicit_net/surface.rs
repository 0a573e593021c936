use super::decoder::{DecoderState, LatentCode};
use crate::geometry::{Aabb, NodeGrid, TriangleMesh};
use crate::{Error, Result};

/// Coarse sampling stride of the narrow-band evaluation.
const BAND_STRIDE: usize = 4;

/// Zero level set of f(.; theta, z) over `bbox` on a `resolution^3` cell grid.
///
/// Returns `None` when the sampled field has a single sign. Boundary nodes are
/// forced outside, so any returned mesh is closed.
pub fn surface_mesh(
    decoder: &DecoderState,
    z: &LatentCode,
    bbox: &Aabb,
    resolution: usize,
) -> Result<Option<TriangleMesh>> {
    if z.dim() != decoder.latent_dim() {
        return Err(crate::error::invalid("latent dimension does not match the decoder"));
    }
    let mut grid = NodeGrid::sample_narrow_band(bbox, resolution, BAND_STRIDE, |ps| {
        decoder.forward(ps, z).expect("checked latent")
    })?;
    if grid.values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Degenerate("decoder produced a non-finite value".into()));
    }
    if grid.has_uniform_sign() {
        return Ok(None);
    }
    grid.close_boundary();
    Ok(Some(grid.extract()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::implicit_net::Architecture;
    use crate::rng_from_seed;

    #[test]
    fn initial_decoder_gives_closed_sphere() {
        let arch = Architecture::compact();
        let d = DecoderState::geometric_init(arch, 0.6, &mut rng_from_seed(1)).unwrap();
        let m = surface_mesh(&d, &LatentCode::zeros(arch.latent_dim), &Aabb::cube(1.1), 32)
            .unwrap()
            .unwrap();
        assert!(m.is_watertight());
        assert!(m.signed_volume() > 0.0);
        let r: Vec<f64> = m.vertices.iter().map(|v| v.norm()).collect();
        let mean = r.iter().sum::<f64>() / r.len() as f64;
        assert!(mean > 0.3 && mean < 0.9, "{mean}");
    }

    #[test]
    fn constant_field_has_no_surface() {
        let arch = Architecture { layers: 2, width: 4, skip: None, beta: 100.0, latent_dim: 2 };
        let mut d = DecoderState::zeros(arch).unwrap();
        *d.output_bias_mut() = 1.0;
        assert!(surface_mesh(&d, &LatentCode::zeros(2), &Aabb::cube(1.0), 8).unwrap().is_none());
    }
}
