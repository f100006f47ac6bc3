//! Little-endian binary parameter files.
//!
//! Layout: magic `STGNN1`, `u32` layer count, one `(F_out, F_in, K)` `u32`
//! triple per layer, then every tap as `f64` in `(f, g, k)` order.

use std::path::Path;

use super::{Activation, LayerParams, StgnnParams};
use crate::error::{Error, Result};

const MAGIC: &[u8; 6] = b"STGNN1";

pub fn params_to_bytes(params: &StgnnParams) -> Vec<u8> {
    let mut out = Vec::with_capacity(MAGIC.len() + 4 + 12 * params.n_layers() + 8 * params.n_params());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(params.n_layers() as u32).to_le_bytes());
    for l in &params.layers {
        for d in [l.f_out, l.f_in, l.k] {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
    }
    for l in &params.layers {
        for t in &l.taps {
            out.extend_from_slice(&t.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    offset: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize, what: &str) -> Result<&[u8]> {
        if self.bytes.len() - self.offset < n {
            return Err(Error::MalformedParams {
                offset: self.offset,
                reason: format!("truncated while reading {what}"),
            });
        }
        let s = &self.bytes[self.offset..self.offset + n];
        self.offset += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<usize> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes(b.try_into().unwrap()) as usize)
    }
}

pub fn params_from_bytes(bytes: &[u8], final_activation: Activation) -> Result<StgnnParams> {
    let mut r = Reader { bytes, offset: 0 };
    if r.take(MAGIC.len(), "magic")? != MAGIC {
        return Err(Error::MalformedParams {
            offset: 0,
            reason: "bad magic".into(),
        });
    }
    let n_layers = r.u32("layer count")?;
    if n_layers == 0 {
        return Err(Error::MalformedParams {
            offset: r.offset - 4,
            reason: "zero layers".into(),
        });
    }
    let mut shapes = Vec::with_capacity(n_layers.min(1024));
    for l in 0..n_layers {
        let at = r.offset;
        let f_out = r.u32("layer shape")?;
        let f_in = r.u32("layer shape")?;
        let k = r.u32("layer shape")?;
        if f_out == 0 || f_in == 0 || k == 0 {
            return Err(Error::MalformedParams {
                offset: at,
                reason: format!("layer {l} has a zero dimension"),
            });
        }
        if let Some(&(prev_out, _, _)) = shapes.last() {
            if prev_out != f_in {
                return Err(Error::MalformedParams {
                    offset: at,
                    reason: format!("layer {l} expects {f_in} inputs, previous layer emits {prev_out}"),
                });
            }
        }
        shapes.push((f_out, f_in, k));
    }
    let mut layers = Vec::with_capacity(n_layers);
    for (f_out, f_in, k) in shapes {
        let mut layer = LayerParams::zeros(f_out, f_in, k);
        for t in layer.taps.iter_mut() {
            let at = r.offset;
            *t = f64::from_le_bytes(r.take(8, "taps")?.try_into().unwrap());
            if !t.is_finite() {
                return Err(Error::MalformedParams {
                    offset: at,
                    reason: "non-finite tap".into(),
                });
            }
        }
        layers.push(layer);
    }
    if r.offset != bytes.len() {
        return Err(Error::MalformedParams {
            offset: r.offset,
            reason: format!("{} trailing bytes", bytes.len() - r.offset),
        });
    }
    Ok(StgnnParams {
        layers,
        final_activation,
    })
}

pub fn save_params(params: &StgnnParams, path: &Path) -> Result<()> {
    std::fs::write(path, params_to_bytes(params)).map_err(|e| Error::io(path, e))
}

/// Loads a parameter file; the output activation defaults to identity.
pub fn load_params(path: &Path) -> Result<StgnnParams> {
    load_params_with(path, Activation::Identity)
}

pub fn load_params_with(path: &Path, final_activation: Activation) -> Result<StgnnParams> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    params_from_bytes(&bytes, final_activation)
}
