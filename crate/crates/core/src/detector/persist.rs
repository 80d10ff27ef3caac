//! Detector model file.
//!
//! Layout (all little-endian):
//!
//! | field        | type      |
//! |--------------|-----------|
//! | magic        | `b"RISD"` |
//! | version      | u32       |
//! | M, F, H      | 3 x u32   |
//! | dropout rate | f32       |
//! | tensors      | f32 each, declaration order: conv_w, conv_b, dense_w, dense_b, out_w, out_b |

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use super::{Architecture, DetectorModel, Params};
use crate::error::{Error, Result};

pub const MODEL_MAGIC: [u8; 4] = *b"RISD";
pub const MODEL_VERSION: u32 = 1;

pub fn write_model<W: Write>(model: &DetectorModel, mut w: W) -> Result<()> {
    let a = &model.arch;
    w.write_all(&MODEL_MAGIC)?;
    w.write_all(&MODEL_VERSION.to_le_bytes())?;
    for dim in [a.frame_len, a.filters, a.hidden] {
        w.write_all(&(dim as u32).to_le_bytes())?;
    }
    w.write_all(&(model.dropout_rate as f32).to_le_bytes())?;
    for t in model.params.tensors() {
        for &x in t {
            w.write_all(&(x as f32).to_le_bytes())?;
        }
    }
    Ok(())
}

fn format_err(msg: impl Into<String>) -> Error {
    Error::Format(msg.into())
}

pub fn read_model<R: Read>(mut r: R) -> Result<DetectorModel> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    let mut cur = Cursor { bytes: &bytes, pos: 0 };

    if cur.take(4)? != MODEL_MAGIC {
        return Err(format_err("not a detector model file (bad magic)"));
    }
    let version = cur.u32()?;
    if version != MODEL_VERSION {
        return Err(format_err(format!("unsupported model version {version}, expected {MODEL_VERSION}")));
    }
    let arch =
        Architecture { frame_len: cur.u32()? as usize, filters: cur.u32()? as usize, hidden: cur.u32()? as usize };
    arch.validate().map_err(|e| format_err(format!("bad architecture in header: {e}")))?;
    let dropout_rate = cur.f32()? as f64;

    let mut params = Params::zeros(&arch);
    let need: usize = params.len() * 4;
    if cur.remaining() != need {
        return Err(format_err(format!("expected {need} bytes of weights, found {}", cur.remaining())));
    }
    for t in params.tensors_mut() {
        for x in t.iter_mut() {
            *x = cur.f32()? as f64;
        }
    }
    if !params.all_finite() {
        return Err(format_err("non-finite weight"));
    }
    DetectorModel::new(arch, dropout_rate, params).map_err(|e| format_err(e.to_string()))
}

pub fn save_model(model: &DetectorModel, path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    write_model(model, &mut buf)?;
    fs::write(path, buf)?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<DetectorModel> {
    read_model(fs::File::open(path)?)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(format_err("truncated model file"));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }
}
