//! Layer-wise post-training quantization of weights.
//!
//! One `(scale, zero_point)` pair covers a whole tensor. With `S` the scale and
//! `Z` the zero point, a real weight `w` maps to
//! `w' = clamp(round(w / S - Z), -2^(L-1), 2^(L-1) - 1)` and back to
//! `(w' + Z) * S`.

use alloc::vec::Vec;
use core::fmt;

/// Rounding applied when mapping reals to integers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Rounding {
    #[default]
    HalfAwayFromZero,
    HalfToEven,
}

impl Rounding {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Rounding::HalfAwayFromZero => libm::round(x),
            Rounding::HalfToEven => libm::rint(x),
        }
    }
}

/// Wordlengths used for weights and activations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct QuantConfig {
    pub w_bits: u32,
    pub a_bits: u32,
    pub rounding: Rounding,
}

impl Default for QuantConfig {
    fn default() -> Self {
        Self { w_bits: 8, a_bits: 16, rounding: Rounding::HalfAwayFromZero }
    }
}

impl QuantConfig {
    pub fn new(w_bits: u32, a_bits: u32) -> Result<Self, QuantError> {
        check_bits(w_bits)?;
        check_bits(a_bits)?;
        Ok(Self { w_bits, a_bits, rounding: Rounding::default() })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct QuantParams {
    pub scale: f64,
    pub zero_point: i64,
    pub bits: u32,
}

impl QuantParams {
    pub fn compute(w_min: f64, w_max: f64, bits: u32, rounding: Rounding) -> Result<Self, QuantError> {
        check_bits(bits)?;
        if !w_min.is_finite() || !w_max.is_finite() {
            return Err(QuantError::NonFinite);
        }
        if w_min > w_max {
            return Err(QuantError::InvertedRange { w_min, w_max });
        }
        let half = 1i64 << (bits - 1);
        let (scale, zero_point) = if w_min == w_max {
            // Constant tensor: every element quantizes to 0 and Z carries the value.
            let scale = libm::fabs(w_min).max(DEGENERATE_EPS) / (half - 1).max(1) as f64;
            (scale, rounding.apply(w_min / scale) as i64)
        } else {
            let levels = ((1u64 << bits) - 1) as f64;
            let scale = (w_max - w_min) / levels;
            (scale, rounding.apply(w_min / scale) as i64 + half)
        };
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(QuantError::NonFinite);
        }
        if zero_point < i32::MIN as i64 || zero_point > i32::MAX as i64 {
            return Err(QuantError::ZeroPointOverflow(zero_point));
        }
        Ok(Self { scale, zero_point, bits })
    }

    pub fn min_code(&self) -> i64 {
        -(1i64 << (self.bits - 1))
    }

    pub fn max_code(&self) -> i64 {
        (1i64 << (self.bits - 1)) - 1
    }

    #[inline]
    pub fn quantize(&self, w: f64, rounding: Rounding) -> i32 {
        let q = rounding.apply(w / self.scale - self.zero_point as f64);
        q.clamp(self.min_code() as f64, self.max_code() as f64) as i32
    }

    #[inline]
    pub fn dequantize(&self, q: i32) -> f64 {
        (q as i64 + self.zero_point) as f64 * self.scale
    }
}

/// Lower bound on the scale of a constant tensor.
pub const DEGENERATE_EPS: f64 = 1e-12;

/// Scale and zero point for a tensor spanning `[w_min, w_max]` with `bits`-bit
/// codes, rounding half away from zero.
pub fn quant_params(w_min: f64, w_max: f64, bits: u32) -> Result<QuantParams, QuantError> {
    QuantParams::compute(w_min, w_max, bits, Rounding::HalfAwayFromZero)
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct QuantizedTensor {
    pub values: Vec<i32>,
    pub params: QuantParams,
    pub dims: Vec<usize>,
}

impl QuantizedTensor {
    /// Dequantized value of element `i`.
    #[inline]
    pub fn real(&self, i: usize) -> f64 {
        self.params.dequantize(self.values[i])
    }

    /// `w' + Z`, the integer the datapath multiplies by.
    #[inline]
    pub fn effective(&self, i: usize) -> i64 {
        self.values[i] as i64 + self.params.zero_point
    }
}

pub fn quantize_tensor(w: &[f64], dims: &[usize], bits: u32) -> Result<QuantizedTensor, QuantError> {
    quantize_tensor_with(w, dims, bits, Rounding::HalfAwayFromZero)
}

pub fn quantize_tensor_with(
    w: &[f64],
    dims: &[usize],
    bits: u32,
    rounding: Rounding,
) -> Result<QuantizedTensor, QuantError> {
    if w.is_empty() {
        return Err(QuantError::Empty);
    }
    let (lo, hi) = w.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if w.iter().any(|v| !v.is_finite()) {
        return Err(QuantError::NonFinite);
    }
    let params = QuantParams::compute(lo, hi, bits, rounding)?;
    let values = w.iter().map(|&v| params.quantize(v, rounding)).collect();
    Ok(QuantizedTensor { values, params, dims: dims.to_vec() })
}

pub fn dequantize_tensor(q: &QuantizedTensor) -> Vec<f64> {
    q.values.iter().map(|&v| q.params.dequantize(v)).collect()
}

fn check_bits(bits: u32) -> Result<(), QuantError> {
    if (2..=32).contains(&bits) {
        Ok(())
    } else {
        Err(QuantError::Wordlength(bits))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum QuantError {
    NonFinite,
    InvertedRange { w_min: f64, w_max: f64 },
    Wordlength(u32),
    Empty,
    ZeroPointOverflow(i64),
}

impl fmt::Display for QuantError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            QuantError::NonFinite => f.write_str("non-finite value in quantization range"),
            QuantError::InvertedRange { w_min, w_max } => write!(f, "w_min {w_min} exceeds w_max {w_max}"),
            QuantError::Wordlength(b) => write!(f, "wordlength {b} outside 2..=32"),
            QuantError::Empty => f.write_str("cannot quantize an empty tensor"),
            QuantError::ZeroPointOverflow(z) => write!(f, "zero point {z} does not fit in 32 bits"),
        }
    }
}

impl core::error::Error for QuantError {}
