//! Little-endian binary tensor containers.
//!
//! All three share one layout: 4-byte magic, `u32` tensor count, then per
//! tensor a `u32` name length, the name bytes and four `u32` dims, followed
//! by a magic-specific payload.
//!
//! | magic  | dims          | payload                                   |
//! |--------|---------------|-------------------------------------------|
//! | `SATW` | (F, C, K, K)  | `f32` values                              |
//! | `SATQ` | (F, C, K, K)  | `f64` scale, `i32` zero point, `u32` bits, `i32` values |
//! | `SATI` | (1, H, W, C)  | `i32` fractional bits, `i32` words        |

use std::collections::BTreeMap;
use std::path::Path;

use yoloflow_core::golden::RefTensor;
use yoloflow_core::graph::TensorShape;
use yoloflow_core::quant::{QuantParams, QuantizedTensor};
use yoloflow_core::weights::Tensor4;

use crate::error::{CliError, Result};

pub const WEIGHTS_MAGIC: &[u8; 4] = b"SATW";
pub const QUANT_MAGIC: &[u8; 4] = b"SATQ";
pub const TENSOR_MAGIC: &[u8; 4] = b"SATI";

/// Fixed-point activation tensor: real value = word · 2^-frac.
#[derive(Debug, Clone, PartialEq)]
pub struct FixedTensor {
    pub frac: i32,
    pub tensor: RefTensor<i64>,
}

struct Writer(Vec<u8>);

impl Writer {
    fn new(magic: &[u8; 4], count: usize) -> Self {
        let mut w = Writer(magic.to_vec());
        w.u32(count as u32);
        w
    }
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn i32(&mut self, v: i32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn head(&mut self, name: &str, dims: [usize; 4]) {
        self.u32(name.len() as u32);
        self.0.extend_from_slice(name.as_bytes());
        for d in dims {
            self.u32(d as u32);
        }
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
    what: &'static str,
}

impl<'a> Reader<'a> {
    fn open(buf: &'a [u8], magic: &[u8; 4], what: &'static str) -> Result<(Self, usize)> {
        if buf.len() < 8 || &buf[..4] != magic {
            let m = String::from_utf8_lossy(magic);
            return Err(CliError::input(what, format!("not a {m} container")));
        }
        let mut r = Reader { buf, pos: 4, what };
        let n = r.u32()? as usize;
        Ok((r, n))
    }
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| CliError::input(self.what, "truncated container"))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
    fn i32(&mut self) -> Result<i32> {
        Ok(i32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
    fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
    fn head(&mut self) -> Result<(String, [usize; 4])> {
        let len = self.u32()? as usize;
        let name = String::from_utf8(self.take(len)?.to_vec())
            .map_err(|_| CliError::input(self.what, "tensor name is not UTF-8"))?;
        let mut dims = [0usize; 4];
        for d in &mut dims {
            *d = self.u32()? as usize;
        }
        Ok((name, dims))
    }
    fn finish(&self) -> Result<()> {
        if self.pos == self.buf.len() {
            Ok(())
        } else {
            Err(CliError::input(self.what, "trailing bytes after last tensor"))
        }
    }
}

fn count(dims: &[usize; 4], what: &'static str) -> Result<usize> {
    dims.iter()
        .try_fold(1usize, |a, &d| a.checked_mul(d))
        .filter(|&n| n <= 1 << 31)
        .ok_or_else(|| CliError::input(what, "tensor dimensions overflow"))
}

pub fn encode_weights(weights: &BTreeMap<String, Tensor4>) -> Vec<u8> {
    let mut w = Writer::new(WEIGHTS_MAGIC, weights.len());
    for (name, t) in weights {
        w.head(name, t.dims);
        for v in &t.values {
            w.0.extend_from_slice(&v.to_le_bytes());
        }
    }
    w.0
}

pub fn decode_weights(buf: &[u8]) -> Result<BTreeMap<String, Tensor4>> {
    let (mut r, n) = Reader::open(buf, WEIGHTS_MAGIC, "weights")?;
    let mut out = BTreeMap::new();
    for _ in 0..n {
        let (name, dims) = r.head()?;
        let len = count(&dims, "weights")?;
        let values = (0..len).map(|_| r.f32()).collect::<Result<Vec<_>>>()?;
        out.insert(name, Tensor4 { dims, values });
    }
    r.finish()?;
    Ok(out)
}

pub fn read_weights(path: &Path) -> Result<BTreeMap<String, Tensor4>> {
    let buf = std::fs::read(path).map_err(|e| CliError::io("weights", path, e))?;
    decode_weights(&buf).map_err(|e| CliError::input("weights", format!("{}: {}", path.display(), e.message)))
}

fn dims4(dims: &[usize]) -> [usize; 4] {
    let mut d = [1usize; 4];
    let off = 4usize.saturating_sub(dims.len());
    for (i, &v) in dims.iter().take(4).enumerate() {
        d[off + i] = v;
    }
    d
}

pub fn encode_quantized(tensors: &BTreeMap<String, QuantizedTensor>) -> Vec<u8> {
    let mut w = Writer::new(QUANT_MAGIC, tensors.len());
    for (name, q) in tensors {
        w.head(name, dims4(&q.dims));
        w.0.extend_from_slice(&q.params.scale.to_le_bytes());
        w.i32(q.params.zero_point as i32);
        w.u32(q.params.bits);
        for &v in &q.values {
            w.i32(v);
        }
    }
    w.0
}

pub fn decode_quantized(buf: &[u8]) -> Result<BTreeMap<String, QuantizedTensor>> {
    let (mut r, n) = Reader::open(buf, QUANT_MAGIC, "quantize")?;
    let mut out = BTreeMap::new();
    for _ in 0..n {
        let (name, dims) = r.head()?;
        let len = count(&dims, "quantize")?;
        let scale = r.f64()?;
        let zero_point = r.i32()? as i64;
        let bits = r.u32()?;
        let values = (0..len).map(|_| r.i32()).collect::<Result<Vec<_>>>()?;
        out.insert(name, QuantizedTensor { values, params: QuantParams { scale, zero_point, bits }, dims: dims.to_vec() });
    }
    r.finish()?;
    Ok(out)
}

pub fn encode_tensors(tensors: &BTreeMap<String, FixedTensor>) -> Vec<u8> {
    let mut w = Writer::new(TENSOR_MAGIC, tensors.len());
    for (name, t) in tensors {
        let s = t.tensor.shape;
        w.head(name, [1, s.h, s.w, s.c]);
        w.i32(t.frac);
        for &v in &t.tensor.data {
            w.i32(v as i32);
        }
    }
    w.0
}

pub fn decode_tensors(buf: &[u8]) -> Result<BTreeMap<String, FixedTensor>> {
    let (mut r, n) = Reader::open(buf, TENSOR_MAGIC, "tensor")?;
    let mut out = BTreeMap::new();
    for _ in 0..n {
        let (name, dims) = r.head()?;
        if dims[0] != 1 || dims[1..].contains(&0) {
            return Err(CliError::input("tensor", format!("`{name}`: expected dims (1, H, W, C)")));
        }
        let len = count(&dims, "tensor")?;
        let frac = r.i32()?;
        let data = (0..len).map(|_| r.i32().map(i64::from)).collect::<Result<Vec<_>>>()?;
        let shape = TensorShape::new(dims[1], dims[2], dims[3]);
        out.insert(name, FixedTensor { frac, tensor: RefTensor { shape, data } });
    }
    r.finish()?;
    Ok(out)
}
