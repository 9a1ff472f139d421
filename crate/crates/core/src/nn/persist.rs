//! Binary model format (`.aefv`).
//!
//! Little-endian, no padding:
//!
//! ```text
//! magic      b"AEFV"
//! version    u32 = 1
//! input_dim  u32
//! layers     u32
//! per layer:
//!   out_dim  u32
//!   in_dim   u32
//!   act      u8   (0 linear, 1 relu, 2 sigmoid, 3 softmax)
//!   weights  out_dim * in_dim f64, row-major
//!   bias     out_dim f64
//! ```

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use super::{Activation, DenseLayer, Network};
use crate::error::{Error, Result};
use crate::tensor::Matrix;

pub const MAGIC: &[u8; 4] = b"AEFV";
pub const VERSION: u32 = 1;

fn dim_u32(value: usize, what: &str) -> Result<u32> {
    u32::try_from(value).map_err(|_| Error::Model(format!("{what} {value} does not fit in u32")))
}

pub fn write_model<W: Write>(net: &Network, mut out: W) -> Result<()> {
    out.write_all(MAGIC)?;
    out.write_all(&VERSION.to_le_bytes())?;
    out.write_all(&dim_u32(net.input_dim(), "input_dim")?.to_le_bytes())?;
    out.write_all(&dim_u32(net.layers().len(), "layer count")?.to_le_bytes())?;
    for layer in net.layers() {
        out.write_all(&dim_u32(layer.out_dim(), "out_dim")?.to_le_bytes())?;
        out.write_all(&dim_u32(layer.in_dim(), "in_dim")?.to_le_bytes())?;
        out.write_all(&[layer.activation().code()])?;
        for w in layer.weights().data().iter().chain(layer.bias()) {
            out.write_all(&w.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn to_bytes(net: &Network) -> Vec<u8> {
    let mut buf = Vec::new();
    write_model(net, &mut buf).expect("writing to a Vec cannot fail");
    buf
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::Model(format!(
                "truncated at byte {} while reading {what}",
                self.pos
            )));
        }
        let slice = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(slice)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn f64s(&mut self, count: usize, what: &str) -> Result<Vec<f64>> {
        let needed = count
            .checked_mul(8)
            .ok_or_else(|| Error::Model(format!("{what}: size overflow")))?;
        let raw = self.take(needed, what)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect())
    }
}

pub fn from_bytes(bytes: &[u8]) -> Result<Network> {
    let mut cur = Cursor { bytes, pos: 0 };
    if cur.take(4, "magic")? != MAGIC {
        return Err(Error::Model("bad magic, not an AEFV model".to_owned()));
    }
    let version = cur.u32("version")?;
    if version != VERSION {
        return Err(Error::Model(format!("unsupported format version {version}")));
    }
    let input_dim = cur.u32("input_dim")? as usize;
    let count = cur.u32("layer count")? as usize;
    let mut layers = Vec::with_capacity(count.min(64));
    for i in 0..count {
        let out_dim = cur.u32("out_dim")? as usize;
        let in_dim = cur.u32("in_dim")? as usize;
        let code = cur.take(1, "activation")?[0];
        let activation = Activation::from_code(code)
            .ok_or_else(|| Error::Model(format!("layer {i}: unknown activation code {code}")))?;
        let n_weights = out_dim
            .checked_mul(in_dim)
            .ok_or_else(|| Error::Model(format!("layer {i}: size overflow")))?;
        let weights = cur.f64s(n_weights, "weights")?;
        let bias = cur.f64s(out_dim, "bias")?;
        let weights = Matrix::new(out_dim, in_dim, weights)
            .map_err(|e| Error::Model(format!("layer {i} weights: {e}")))?;
        let layer = DenseLayer::new(weights, bias, activation)
            .map_err(|e| Error::Model(format!("layer {i}: {e}")))?;
        layers.push(layer);
    }
    if cur.pos != bytes.len() {
        return Err(Error::Model(format!(
            "{} trailing bytes after last layer",
            bytes.len() - cur.pos
        )));
    }
    Network::new(input_dim, layers).map_err(|e| Error::Model(e.to_string()))
}

pub fn read_model<R: Read>(mut input: R) -> Result<Network> {
    let mut buf = Vec::new();
    input.read_to_end(&mut buf)?;
    from_bytes(&buf)
}

pub fn save_model(net: &Network, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, to_bytes(net)).map_err(|e| Error::file(path, e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<Network> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::file(path, e))?;
    from_bytes(&bytes)
}
