//! `MDNZ1` checkpoints: magic, version byte, u32 LE descriptor length,
//! UTF-8 network descriptor, u64 LE parameter count, f64 LE parameters.

use std::fs;
use std::path::Path;

use metadenoise_core::{DenoiserModel, NetworkSpec};

use crate::{Error, Result};

pub const MAGIC: &[u8; 5] = b"MDNZ1";
pub const VERSION: u8 = 1;

pub fn encode_checkpoint(model: &DenoiserModel) -> Vec<u8> {
    let desc = model.spec().to_string();
    let params = model.get_params().values();
    let mut out = Vec::with_capacity(5 + 1 + 4 + desc.len() + 8 + 8 * params.len());
    out.extend_from_slice(MAGIC);
    out.push(VERSION);
    out.extend_from_slice(&(desc.len() as u32).to_le_bytes());
    out.extend_from_slice(desc.as_bytes());
    out.extend_from_slice(&(params.len() as u64).to_le_bytes());
    for v in params {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_checkpoint(bytes: &[u8], path: &Path) -> Result<DenoiserModel> {
    let bad = |m: String| Error::format(path, m);
    if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
        return Err(bad("not an MDNZ1 checkpoint (bad magic)".into()));
    }
    let mut pos = MAGIC.len();
    let mut take = |n: usize, what: &str| -> Result<&[u8]> {
        if bytes.len() - pos < n {
            return Err(bad(format!("truncated {}", what)));
        }
        pos += n;
        Ok(&bytes[pos - n..pos])
    };
    let version = take(1, "version")?[0];
    if version != VERSION {
        return Err(bad(format!("unsupported version {}", version)));
    }
    let desc_len = u32::from_le_bytes(take(4, "descriptor length")?.try_into().expect("4 bytes")) as usize;
    let desc = std::str::from_utf8(take(desc_len, "descriptor")?).map_err(|_| bad("descriptor is not UTF-8".into()))?;
    let spec: NetworkSpec = desc.parse().map_err(|e| bad(format!("bad descriptor: {}", e)))?;
    let count = u64::from_le_bytes(take(8, "parameter count")?.try_into().expect("8 bytes"));
    let remaining = (bytes.len() - pos) as u64;
    if count.checked_mul(8) != Some(remaining) {
        return Err(bad(format!("parameter count {} does not match {} payload bytes", count, remaining)));
    }
    if count != spec.param_count() as u64 {
        return Err(bad(format!("network needs {} parameters, file declares {}", spec.param_count(), count)));
    }
    let values: Vec<f64> = bytes[pos..].chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
    let mut model = DenoiserModel::zeroed(spec);
    model.set_param_values(&values).map_err(|e| bad(e.to_string()))?;
    Ok(model)
}

pub fn save_checkpoint(model: &DenoiserModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_checkpoint(model)).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<DenoiserModel> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes, path)
}
