//! Flat little-endian checkpoint layout:
//!
//! ```text
//! magic  b"QACP"
//! u32    version (= 1)
//! u32    layer count
//! per layer:
//!   u32  inputs
//!   u32  outputs
//!   f64  weight values, inputs × outputs, row-major
//!   f64  bias values, outputs
//! ```

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::nnkit::mlp::Linear;
use crate::nnkit::tensor::Tensor;
use crate::scalar::{lit, to_f64, Scalar};

pub const MAGIC: &[u8; 4] = b"QACP";
pub const VERSION: u32 = 1;

pub fn write_layers<S: Scalar, W: Write>(mut w: W, layers: &[&Linear<S>]) -> std::io::Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(layers.len() as u32).to_le_bytes())?;
    for l in layers {
        w.write_all(&(l.inputs() as u32).to_le_bytes())?;
        w.write_all(&(l.outputs() as u32).to_le_bytes())?;
        for &v in l.weight.values().iter().chain(l.bias.values()) {
            w.write_all(&to_f64(v).to_le_bytes())?;
        }
    }
    w.flush()
}

fn format_err(message: impl Into<String>) -> Error {
    Error::Format { what: "checkpoint", message: message.into() }
}

pub fn read_layers<S: Scalar, R: Read>(mut r: R) -> Result<Vec<Linear<S>>> {
    let mut buf = Vec::new();
    r.read_to_end(&mut buf).map_err(|e| format_err(e.to_string()))?;
    let mut cur = Cursor { buf: &buf, pos: 0 };
    if cur.take(4)? != MAGIC {
        return Err(format_err("bad magic bytes"));
    }
    let version = cur.u32()?;
    if version != VERSION {
        return Err(format_err(format!("unsupported version {version}")));
    }
    let count = cur.u32()? as usize;
    let mut layers = Vec::with_capacity(count);
    for _ in 0..count {
        let (i, o) = (cur.u32()? as usize, cur.u32()? as usize);
        let w = (0..i * o).map(|_| cur.f64().map(lit)).collect::<Result<Vec<S>>>()?;
        let b = (0..o).map(|_| cur.f64().map(lit)).collect::<Result<Vec<S>>>()?;
        layers.push(Linear::from_parts(Tensor::matrix(i, o, w)?, Tensor::vector(b))?);
    }
    if cur.pos != buf.len() {
        return Err(format_err(format!("{} trailing bytes", buf.len() - cur.pos)));
    }
    Ok(layers)
}

pub fn save_layers<S: Scalar>(path: &Path, layers: &[&Linear<S>]) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_layers(std::io::BufWriter::new(file), layers).map_err(|e| Error::io(path, e))
}

pub fn load_layers<S: Scalar>(path: &Path) -> Result<Vec<Linear<S>>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_layers(std::io::BufReader::new(file))
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos + n;
        if end > self.buf.len() {
            return Err(format_err("truncated"));
        }
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}
