// SPDX-License-Identifier: MIT OR Apache-2.0

//! Checkpoint (`SAE1`), little-endian:
//!
//! ```text
//! magic "SAE1" | u32 version (1) | u32 config_len | config JSON
//! u32 n_tensors | per tensor: u32 ndim, ndim x u32 dims, f32 values
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{Result, SAEConfig, SAEParams, SaeError};
use crate::baselm::{check_magic, get_u32, put_u32, read_tensor, write_tensor, LmError};

const MAGIC: &[u8; 4] = b"SAE1";
const VERSION: u32 = 1;

impl From<LmError> for SaeError {
    fn from(e: LmError) -> Self {
        match e {
            LmError::Io(e) => SaeError::Io(e),
            other => SaeError::Format(other.to_string()),
        }
    }
}

pub fn save_sae(path: &Path, params: &SAEParams) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    put_u32(&mut w, VERSION)?;
    let cfg = serde_json::to_vec(&params.config).map_err(|e| SaeError::Format(e.to_string()))?;
    put_u32(&mut w, cfg.len() as u32)?;
    w.write_all(&cfg)?;
    put_u32(&mut w, params.tensors.len() as u32)?;
    for t in &params.tensors {
        write_tensor(&mut w, t)?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_sae(path: &Path) -> Result<SAEParams> {
    let mut r = BufReader::new(File::open(path)?);
    check_magic(&mut r, MAGIC)?;
    let n = get_u32(&mut r)? as usize;
    let mut cb = vec![0u8; n];
    r.read_exact(&mut cb)?;
    let config: SAEConfig = serde_json::from_slice(&cb).map_err(|e| SaeError::Format(e.to_string()))?;
    // Shapes are checked against a fresh init.
    let like = SAEParams::init(&config)?;
    let n = get_u32(&mut r)? as usize;
    if n != like.tensors.len() {
        return Err(SaeError::Format(format!("expected {} tensors, found {n}", like.tensors.len())));
    }
    let mut tensors = Vec::with_capacity(n);
    for l in &like.tensors {
        let t = read_tensor(&mut r)?;
        if t.shape() != l.shape() {
            return Err(SaeError::Format(format!("tensor shape {:?}, expected {:?}", t.shape(), l.shape())));
        }
        tensors.push(t);
    }
    Ok(SAEParams { config, tensors })
}
