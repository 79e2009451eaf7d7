// SPDX-License-Identifier: MIT OR Apache-2.0

//! Binary formats.
//!
//! Checkpoint (`ALM1`), all integers little-endian:
//!
//! ```text
//! magic "ALM1" | u32 version (1) | u32 header_len | header JSON {config, vocab}
//! u32 n_tensors | per tensor: u32 ndim, ndim x u32 dims, f32 values
//! ```
//!
//! Tensors follow the declared order of [`LMParams::names`].
//!
//! Activation store (`ASAE`):
//!
//! ```text
//! magic "ASAE" | u32 version (1) | u32 d_model | u32 n_layers | u64 n_records
//! per record: u64 example_id | u16 layer | u16 relation_index | d_model x f32
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::model::{LMConfig, LMParams};
use super::vocab::Vocab;
use super::{LmError, Result};
use crate::numkern::Tensor;

const LM_MAGIC: &[u8; 4] = b"ALM1";
const ACT_MAGIC: &[u8; 4] = b"ASAE";
const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Header {
    config: LMConfig,
    vocab: Vocab,
}

pub(crate) fn put_u32(w: &mut impl Write, x: u32) -> Result<()> {
    Ok(w.write_all(&x.to_le_bytes())?)
}

pub(crate) fn get_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn get_u64(r: &mut impl Read) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn get_u16(r: &mut impl Read) -> Result<u16> {
    let mut b = [0u8; 2];
    r.read_exact(&mut b)?;
    Ok(u16::from_le_bytes(b))
}

pub(crate) fn check_magic(r: &mut impl Read, magic: &[u8; 4]) -> Result<()> {
    let mut m = [0u8; 4];
    r.read_exact(&mut m)?;
    if &m != magic {
        return Err(LmError::Format(format!(
            "bad magic {:?}, expected {:?}",
            String::from_utf8_lossy(&m),
            String::from_utf8_lossy(magic)
        )));
    }
    let v = get_u32(r)?;
    if v != VERSION {
        return Err(LmError::Format(format!("unsupported version {v}")));
    }
    Ok(())
}

pub(crate) fn write_f32s(w: &mut impl Write, xs: &[f64]) -> Result<()> {
    let mut buf = Vec::with_capacity(xs.len() * 4);
    for &x in xs {
        buf.extend_from_slice(&(x as f32).to_le_bytes());
    }
    Ok(w.write_all(&buf)?)
}

pub(crate) fn read_f32s(r: &mut impl Read, n: usize) -> Result<Vec<f64>> {
    let mut buf = vec![0u8; n * 4];
    r.read_exact(&mut buf)?;
    Ok(buf
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect())
}

pub(crate) fn write_tensor(w: &mut impl Write, t: &Tensor) -> Result<()> {
    put_u32(w, t.shape().len() as u32)?;
    for &d in t.shape() {
        put_u32(w, d as u32)?;
    }
    write_f32s(w, t.data())
}

pub(crate) fn read_tensor(r: &mut impl Read) -> Result<Tensor> {
    let nd = get_u32(r)? as usize;
    if nd == 0 || nd > 4 {
        return Err(LmError::Format(format!("tensor rank {nd} unsupported")));
    }
    let mut shape = Vec::with_capacity(nd);
    for _ in 0..nd {
        shape.push(get_u32(r)? as usize);
    }
    let n: usize = shape.iter().product();
    let data = read_f32s(r, n)?;
    Ok(Tensor::new(shape, data)?)
}

pub fn save_lm(path: &Path, params: &LMParams, vocab: &Vocab) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(LM_MAGIC)?;
    put_u32(&mut w, VERSION)?;
    let header = serde_json::to_vec(&Header {
        config: params.config.clone(),
        vocab: vocab.clone(),
    })
    .map_err(|e| LmError::Format(e.to_string()))?;
    put_u32(&mut w, header.len() as u32)?;
    w.write_all(&header)?;
    put_u32(&mut w, params.tensors.len() as u32)?;
    for t in &params.tensors {
        write_tensor(&mut w, t)?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_lm(path: &Path) -> Result<(LMParams, Vocab)> {
    let mut r = BufReader::new(File::open(path)?);
    check_magic(&mut r, LM_MAGIC)?;
    let hlen = get_u32(&mut r)? as usize;
    let mut hb = vec![0u8; hlen];
    r.read_exact(&mut hb)?;
    let header: Header = serde_json::from_slice(&hb).map_err(|e| LmError::Format(e.to_string()))?;
    header.config.validate()?;
    let shapes = LMParams::shapes(&header.config);
    let n = get_u32(&mut r)? as usize;
    if n != shapes.len() {
        return Err(LmError::Format(format!("expected {} tensors, found {n}", shapes.len())));
    }
    let mut tensors = Vec::with_capacity(n);
    for shape in shapes {
        let t = read_tensor(&mut r)?;
        if t.shape() != shape.as_slice() {
            return Err(LmError::Format(format!("tensor shape {:?}, expected {shape:?}", t.shape())));
        }
        tensors.push(t);
    }
    Ok((
        LMParams {
            config: header.config,
            tensors,
        },
        header.vocab,
    ))
}

// ---------------------------------------------------------------------------
// Activation store

#[derive(Debug, Clone, PartialEq)]
pub struct ActivationRecord {
    pub example_id: u64,
    pub layer: u16,
    pub relation_index: u16,
    /// Stored as f32; held here widened to f64.
    pub h: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActivationStore {
    pub d_model: usize,
    pub n_layers: usize,
    pub records: Vec<ActivationRecord>,
}

impl ActivationStore {
    /// Records at `layer`, in stored order.
    pub fn layer(&self, layer: usize) -> Vec<&ActivationRecord> {
        self.records.iter().filter(|r| r.layer as usize == layer).collect()
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(ACT_MAGIC)?;
        put_u32(&mut w, VERSION)?;
        put_u32(&mut w, self.d_model as u32)?;
        put_u32(&mut w, self.n_layers as u32)?;
        w.write_all(&(self.records.len() as u64).to_le_bytes())?;
        for r in &self.records {
            if r.h.len() != self.d_model {
                return Err(LmError::Format(format!(
                    "record of width {} in a {}-wide store",
                    r.h.len(),
                    self.d_model
                )));
            }
            w.write_all(&r.example_id.to_le_bytes())?;
            w.write_all(&r.layer.to_le_bytes())?;
            w.write_all(&r.relation_index.to_le_bytes())?;
            write_f32s(&mut w, &r.h)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let mut r = BufReader::new(File::open(path)?);
        check_magic(&mut r, ACT_MAGIC)?;
        let d_model = get_u32(&mut r)? as usize;
        let n_layers = get_u32(&mut r)? as usize;
        let n = get_u64(&mut r)? as usize;
        let mut records = Vec::with_capacity(n);
        for _ in 0..n {
            let example_id = get_u64(&mut r)?;
            let layer = get_u16(&mut r)?;
            let relation_index = get_u16(&mut r)?;
            if layer as usize >= n_layers {
                return Err(LmError::Format(format!("record layer {layer} beyond {n_layers} layers")));
            }
            let h = read_f32s(&mut r, d_model)?;
            records.push(ActivationRecord {
                example_id,
                layer,
                relation_index,
                h,
            });
        }
        Ok(ActivationStore {
            d_model,
            n_layers,
            records,
        })
    }
}
