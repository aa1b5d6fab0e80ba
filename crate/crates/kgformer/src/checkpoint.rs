//! Binary model checkpoints.
//!
//! Little-endian: magic `KGTC`, then u32 version, n_e, n_r, d, L, H, d_ff,
//! then every parameter tensor as f32 in declaration order (embeddings first,
//! then per layer the head projections, output projection, norms and
//! feed-forward weights).

use std::io::{Read, Write};
use std::path::Path;

use kgformer_core::kgformer::{Architecture, ModelParams};

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"KGTC";
pub const VERSION: u32 = 1;

pub fn write_checkpoint<W: Write>(params: &ModelParams, mut w: W) -> std::io::Result<()> {
    w.write_all(MAGIC)?;
    let a = &params.arch;
    for v in [VERSION, params.entity_count as u32, params.relation_count as u32, a.dim as u32, a.layers as u32, a.heads as u32, a.ff_dim as u32] {
        w.write_all(&v.to_le_bytes())?;
    }
    for t in params.tensors() {
        for &v in t.data() {
            w.write_all(&(v as f32).to_le_bytes())?;
        }
    }
    w.flush()
}

struct Cursor<'a>(&'a [u8]);

impl Cursor<'_> {
    fn take<const N: usize>(&mut self) -> Result<[u8; N]> {
        if self.0.len() < N {
            return Err(Error::Truncated);
        }
        let (head, rest) = self.0.split_at(N);
        self.0 = rest;
        Ok(head.try_into().expect("length checked"))
    }

    fn u32(&mut self) -> Result<u32> {
        self.take::<4>().map(u32::from_le_bytes)
    }
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<ModelParams> {
    let mut c = Cursor(bytes);
    if bytes.len() >= 4 && &bytes[..4] != MAGIC {
        return Err(Error::BadMagic);
    }
    c.take::<4>()?;
    let version = c.u32()?;
    if version != VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    let mut h = [0usize; 6];
    for v in &mut h {
        *v = c.u32()? as usize;
    }
    let [n_e, n_r, dim, layers, heads, ff_dim] = h;
    let arch = Architecture { dim, heads, layers, ff_dim };
    arch.validate()?;
    // size check before allocating anything a corrupt header asks for
    let (d, f) = (dim as u128, ff_dim as u128);
    let per_layer = 3 * d * d + d * d + 4 * d + 2 * d * f + f + d;
    let expected = (n_e as u128 + n_r as u128) * d + layers as u128 * per_layer;
    if (c.0.len() as u128) < expected * 4 {
        return Err(Error::Truncated);
    }
    let mut params = ModelParams::zeros(n_e, n_r, arch)?;
    for t in params.tensors_mut() {
        for v in t.data_mut() {
            *v = f32::from_le_bytes(c.take::<4>()?) as f64;
        }
    }
    if !c.0.is_empty() {
        return Err(Error::TrailingBytes(c.0.len()));
    }
    if !params.is_finite() {
        return Err(kgformer_core::Error::NonFinite("checkpoint parameters".into()).into());
    }
    Ok(params)
}

pub fn save_checkpoint(params: &ModelParams, path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    write_checkpoint(params, &mut buf).expect("writing to memory");
    std::fs::write(path, buf).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<ModelParams> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes)
}
