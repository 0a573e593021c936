//! Binary model checkpoint, little endian.
//!
//! | field | encoding |
//! |-------|----------|
//! | magic | `VHSCKPT1` |
//! | version | u32 (= 1) |
//! | layers, width | u32, u32 |
//! | skip | i32, -1 when absent |
//! | beta | f64 |
//! | latent_dim | u32 |
//! | normalized half extent | f64 |
//! | parameter count, parameters | u64, f64 each |
//! | shape count | u32 |
//! | per shape | u32 id length, UTF-8 id, latent_dim x f64 |

use std::fs;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use super::decoder::{Architecture, DecoderState, LatentCode};
use super::train::TrainedModel;
use crate::geometry::io::write_atomic;
use crate::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"VHSCKPT1";
const VERSION: u32 = 1;

fn fmt(msg: impl Into<String>) -> Error {
    Error::Format(msg.into())
}

fn u32_of(v: usize) -> Result<u32> {
    u32::try_from(v).map_err(|_| fmt("value exceeds u32"))
}

pub fn write_checkpoint(model: &TrainedModel, out: &mut impl Write) -> Result<()> {
    let a = model.decoder.architecture();
    let mut w = BufWriter::new(out);
    w.write_all(CHECKPOINT_MAGIC)?;
    w.write_u32::<LittleEndian>(VERSION)?;
    w.write_u32::<LittleEndian>(u32_of(a.layers)?)?;
    w.write_u32::<LittleEndian>(u32_of(a.width)?)?;
    w.write_i32::<LittleEndian>(a.skip.map(|s| s as i32).unwrap_or(-1))?;
    w.write_f64::<LittleEndian>(a.beta)?;
    w.write_u32::<LittleEndian>(u32_of(a.latent_dim)?)?;
    w.write_f64::<LittleEndian>(model.normalized_half_extent)?;
    let p = model.decoder.params();
    w.write_u64::<LittleEndian>(p.len() as u64)?;
    for v in p {
        w.write_f64::<LittleEndian>(*v)?;
    }
    w.write_u32::<LittleEndian>(u32_of(model.latents.len())?)?;
    for (id, z) in model.shape_ids.iter().zip(&model.latents) {
        w.write_u32::<LittleEndian>(u32_of(id.len())?)?;
        w.write_all(id.as_bytes())?;
        for v in &z.0 {
            w.write_f64::<LittleEndian>(*v)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_checkpoint(input: impl Read) -> Result<TrainedModel> {
    let mut r = BufReader::new(input);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(fmt("not a model checkpoint"));
    }
    let version = r.read_u32::<LittleEndian>()?;
    if version != VERSION {
        return Err(fmt(format!("unsupported checkpoint version {version}")));
    }
    let layers = r.read_u32::<LittleEndian>()? as usize;
    let width = r.read_u32::<LittleEndian>()? as usize;
    let skip = r.read_i32::<LittleEndian>()?;
    let beta = r.read_f64::<LittleEndian>()?;
    let latent_dim = r.read_u32::<LittleEndian>()? as usize;
    let half = r.read_f64::<LittleEndian>()?;
    let arch = Architecture {
        layers,
        width,
        skip: (skip >= 0).then_some(skip as usize),
        beta,
        latent_dim,
    };
    arch.validate().map_err(|e| fmt(e.to_string()))?;
    let n = r.read_u64::<LittleEndian>()? as usize;
    if n != arch.param_count() {
        return Err(fmt("parameter count does not match the architecture"));
    }
    let mut params = vec![0.0; n];
    r.read_f64_into::<LittleEndian>(&mut params)?;
    let decoder = DecoderState::from_params(arch, params).map_err(|e| fmt(e.to_string()))?;
    let shapes = r.read_u32::<LittleEndian>()? as usize;
    let mut shape_ids = Vec::with_capacity(shapes);
    let mut latents = Vec::with_capacity(shapes);
    for _ in 0..shapes {
        let len = r.read_u32::<LittleEndian>()? as usize;
        let mut id = vec![0u8; len];
        r.read_exact(&mut id)?;
        shape_ids.push(String::from_utf8(id).map_err(|_| fmt("shape id is not UTF-8"))?);
        let mut z = vec![0.0; latent_dim];
        r.read_f64_into::<LittleEndian>(&mut z)?;
        latents.push(LatentCode(z));
    }
    Ok(TrainedModel { decoder, latents, shape_ids, normalized_half_extent: half })
}

pub fn save_checkpoint(model: &TrainedModel, path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    write_checkpoint(model, &mut buf)?;
    write_atomic(path, &buf)
}

pub fn load_checkpoint(path: &Path) -> Result<TrainedModel> {
    read_checkpoint(fs::File::open(path)?)
}
