//! Trained-field persistence.
//!
//! Layout: magic `SPCK`, u32 version, u64 JSON header length, JSON header
//! `{kind, bounds, config, param_count}`, then `param_count` f64 parameters.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::aperture::SceneBounds;
use crate::dataset::ByteReader;
use crate::field::{self, SceneField};
use crate::{Result, SpinrError};

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"SPCK";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Header {
    kind: String,
    bounds: SceneBounds,
    config: serde_json::Value,
    param_count: usize,
}

pub fn checkpoint_bytes(f: &dyn SceneField) -> Result<Vec<u8>> {
    let params = f.params();
    let header = serde_json::to_vec(&Header {
        kind: f.kind().to_string(),
        bounds: f.bounds(),
        config: f.config(),
        param_count: params.len(),
    })?;
    let mut out = Vec::with_capacity(16 + header.len() + 8 * params.len());
    out.extend_from_slice(&CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(header.len() as u64).to_le_bytes());
    out.extend_from_slice(&header);
    for p in params {
        out.extend_from_slice(&p.to_le_bytes());
    }
    Ok(out)
}

pub fn field_from_bytes(bytes: &[u8]) -> Result<Box<dyn SceneField>> {
    let mut cur = ByteReader::new(bytes);
    cur.expect_preamble(CHECKPOINT_MAGIC, CHECKPOINT_VERSION)?;
    let h: Header =
        serde_json::from_slice(cur.json_header()?).map_err(|e| SpinrError::MalformedHeader(e.to_string()))?;
    let mut params = Vec::with_capacity(h.param_count.min(cur.remaining() / 8));
    for _ in 0..h.param_count {
        params.push(cur.f64("parameters")?);
    }
    cur.expect_end()?;
    let mut f = field::registry().get(&h.kind)?.build(&h.bounds, &h.config, 0)?;
    if f.params().len() != params.len() {
        return Err(SpinrError::MalformedHeader(format!(
            "config implies {} parameters, checkpoint holds {}",
            f.params().len(),
            params.len()
        )));
    }
    f.params_mut().copy_from_slice(&params);
    Ok(f)
}

pub fn save_field(f: &dyn SceneField, path: impl AsRef<Path>) -> Result<()> {
    let bytes = checkpoint_bytes(f)?;
    let mut file = std::fs::File::create(path)?;
    file.write_all(&bytes)?;
    file.flush()?;
    Ok(())
}

pub fn load_field(path: impl AsRef<Path>) -> Result<Box<dyn SceneField>> {
    field_from_bytes(&std::fs::read(path)?)
}
