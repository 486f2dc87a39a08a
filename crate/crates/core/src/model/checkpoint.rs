use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

use super::EnhancerParams;

pub const MAGIC: &[u8; 4] = b"LCC1";

/// Writes `LCC1`, knot count and hidden width (u32 LE), then every parameter
/// in canonical order as f64 LE.
pub fn write_params<T: Real, W: Write>(mut w: W, p: &EnhancerParams<T>) -> std::io::Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&(p.knots as u32).to_le_bytes())?;
    w.write_all(&(p.hidden as u32).to_le_bytes())?;
    for v in p.flatten() {
        w.write_all(&v.as_f64().to_le_bytes())?;
    }
    w.flush()
}

pub fn read_params<T: Real, R: Read>(mut r: R) -> Result<EnhancerParams<T>> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)
        .map_err(|e| Error::Format(format!("read failed: {e}")))?;
    if bytes.len() < 12 || &bytes[..4] != MAGIC {
        return Err(Error::Format("missing LCC1 header".into()));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap()) as usize;
    let (knots, hidden) = (word(4), word(8));
    if knots < 2 {
        return Err(Error::Format(format!("invalid knot count {knots}")));
    }
    let count = EnhancerParams::<T>::param_count_for(knots, hidden);
    let body = &bytes[12..];
    if body.len() != count * 8 {
        return Err(Error::Format(format!(
            "expected {} parameter bytes for {knots} knots / {hidden} hidden, found {}",
            count * 8,
            body.len()
        )));
    }
    let flat: Vec<T> = body
        .chunks_exact(8)
        .map(|c| T::lit(f64::from_le_bytes(c.try_into().unwrap())))
        .collect();
    EnhancerParams::from_flat(knots, hidden, &flat)
}

pub fn save_params<T: Real>(path: impl AsRef<Path>, p: &EnhancerParams<T>) -> Result<()> {
    let path = path.as_ref();
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    write_params(BufWriter::new(f), p).map_err(|e| Error::io(path, e))
}

pub fn load_params<T: Real>(path: impl AsRef<Path>) -> Result<EnhancerParams<T>> {
    let path = path.as_ref();
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    read_params(BufReader::new(f))
}

#[derive(Serialize, Deserialize)]
struct JsonMirror {
    format: String,
    seed: Option<u64>,
    params: EnhancerParams<f64>,
}

/// Human-readable copy of a checkpoint, with the training seed if known.
pub fn save_params_json<T: Real>(path: impl AsRef<Path>, p: &EnhancerParams<T>, seed: Option<u64>) -> Result<()> {
    let path = path.as_ref();
    let doc = JsonMirror {
        format: "LCC1".into(),
        seed,
        params: p.cast(),
    };
    let text = serde_json::to_string_pretty(&doc)?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn load_params_json<T: Real>(path: impl AsRef<Path>) -> Result<(EnhancerParams<T>, Option<u64>)> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let doc: JsonMirror = serde_json::from_str(&text)?;
    let flat = doc.params.flatten();
    if flat.len() != doc.params.param_count() {
        return Err(Error::Format("parameter blocks do not match declared shape".into()));
    }
    Ok((doc.params.cast(), doc.seed))
}
