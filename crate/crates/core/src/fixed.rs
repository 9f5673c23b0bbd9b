//! Fixed-point primitives shared by the simulator datapath and the quantized
//! reference. Activations are signed `a_bits` integers with a per-tensor
//! power-of-two scale: an integer `x` with `frac` fractional bits stands for
//! `x * 2^-frac`.

/// Fractional-bit exponents are kept inside this band.
pub const FRAC_LIMIT: i32 = 40;

/// Shift used for the HardSwish divide-by-six and the LeakyReLU slope.
pub const CONST_SHIFT: u32 = 16;

/// `round(2^16 / 6)`.
pub const INV_SIX: i128 = 10923;

/// Divide by `2^s`, rounding half away from zero.
#[inline]
pub fn round_shift(x: i128, s: u32) -> i128 {
    if s == 0 {
        return x;
    }
    if s >= 127 {
        return 0;
    }
    let half = 1i128 << (s - 1);
    if x >= 0 {
        (x + half) >> s
    } else {
        -((-x + half) >> s)
    }
}

#[inline]
pub fn min_word(bits: u32) -> i64 {
    -(1i64 << (bits - 1))
}

#[inline]
pub fn max_word(bits: u32) -> i64 {
    (1i64 << (bits - 1)) - 1
}

/// Clamp into the signed `bits`-bit range.
#[inline]
pub fn saturate(x: i128, bits: u32) -> i64 {
    x.clamp(min_word(bits) as i128, max_word(bits) as i128) as i64
}

/// Re-express `x` from `from` to `to` fractional bits (unsaturated).
#[inline]
pub fn rescale(x: i64, from: i32, to: i32) -> i128 {
    if to >= from {
        (x as i128) << (to - from).min(80) as u32
    } else {
        round_shift(x as i128, (from - to) as u32)
    }
}

/// Fractional bits that fit `max_abs` into a signed `bits`-bit word with the
/// most precision.
pub fn frac_for_range(max_abs: f64, bits: u32) -> i32 {
    if max_abs.is_nan() || max_abs <= 0.0 || max_abs.is_infinite() {
        return (bits as i32 - 1).clamp(-FRAC_LIMIT, FRAC_LIMIT);
    }
    let k = libm::floor(libm::log2(max_abs)) as i32;
    (bits as i32 - 2 - k).clamp(-FRAC_LIMIT, FRAC_LIMIT)
}

/// Real to fixed point.
#[inline]
pub fn to_fixed(x: f64, frac: i32, bits: u32) -> i64 {
    let v = libm::round(x * libm::exp2(frac as f64));
    saturate(v.clamp(i64::MIN as f64, i64::MAX as f64) as i128, bits)
}

#[inline]
pub fn to_real(x: i64, frac: i32) -> f64 {
    x as f64 * libm::exp2(-frac as f64)
}

/// Integer multiplier and shift approximating a positive real factor:
/// `y = round(acc * mult / 2^shift)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Requant {
    pub mult: i64,
    pub shift: i32,
}

impl Requant {
    pub fn from_real(factor: f64) -> Self {
        if factor.is_nan() || factor <= 0.0 || factor.is_infinite() {
            return Self { mult: 0, shift: 0 };
        }
        let (m, e) = libm::frexp(factor);
        let mut mult = libm::round(m * (1u64 << 31) as f64) as i64;
        let mut e = e;
        if mult == 1 << 31 {
            mult >>= 1;
            e += 1;
        }
        Self { mult, shift: 31 - e }
    }

    #[inline]
    pub fn apply(&self, acc: i128) -> i128 {
        let p = acc * self.mult as i128;
        if self.shift >= 0 {
            round_shift(p, self.shift as u32)
        } else {
            p << (-self.shift).min(64) as u32
        }
    }
}

/// `x * relu6(x + 3) / 6` on fixed-point input. `relu6(x + 3)` is evaluated at
/// the activation scale, the product in double width, and the division as a
/// multiply by `round(2^16 / 6)` followed by an arithmetic shift of 16.
#[inline]
pub fn hardswish(x: i64, frac: i32, bits: u32) -> i64 {
    let three = rescale(3, 0, frac);
    let six = rescale(6, 0, frac);
    let t = (x as i128 + three).clamp(0, six);
    let prod = x as i128 * t;
    let div = (prod * INV_SIX) >> CONST_SHIFT;
    saturate(rescale_wide(div, 2 * frac, frac), bits)
}

#[inline]
fn rescale_wide(x: i128, from: i32, to: i32) -> i128 {
    if to >= from {
        x << (to - from).min(80) as u32
    } else {
        round_shift(x, (from - to) as u32)
    }
}

/// LeakyReLU slope in Q16.
#[inline]
pub fn slope_q16(slope: f64) -> i64 {
    libm::round(slope * (1u64 << CONST_SHIFT) as f64) as i64
}

/// Select between `x` and `x * slope` by sign. Output keeps the input scale.
#[inline]
pub fn leaky_relu(x: i64, slope_q16: i64, bits: u32) -> i64 {
    if x >= 0 {
        x
    } else {
        saturate(round_shift(x as i128 * slope_q16 as i128, CONST_SHIFT), bits)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_shift_ties_away() {
        assert_eq!(round_shift(3, 1), 2);
        assert_eq!(round_shift(-3, 1), -2);
        assert_eq!(round_shift(5, 2), 1);
        assert_eq!(round_shift(6, 2), 2);
        assert_eq!(round_shift(-6, 2), -2);
    }

    #[test]
    fn frac_keeps_range() {
        for &(m, bits) in &[(1.0, 16), (0.9, 16), (3.99, 8), (1000.0, 16), (1e-3, 16)] {
            let f = frac_for_range(m, bits);
            let scaled = m * libm::exp2(f as f64);
            assert!(scaled < (1u64 << (bits - 1)) as f64, "{m} {bits} {f}");
            assert!(to_fixed(m, f, bits) >= max_word(bits) / 2, "{m} {bits} {f}");
        }
    }

    #[test]
    fn requant_tracks_factor() {
        for &r in &[1.0, 0.37, 3.1e-5, 12345.6] {
            let q = Requant::from_real(r);
            let acc = 1_000_000i128;
            let y = q.apply(acc) as f64;
            assert!((y - r * 1e6).abs() <= 1.0 + r * 1e6 * 1e-9, "{r}: {y}");
        }
        assert_eq!(Requant::from_real(0.0).apply(99), 0);
    }

    #[test]
    fn hardswish_knots() {
        let f = 8;
        let bits = 16;
        let at = |x: f64| to_real(hardswish(to_fixed(x, f, bits), f, bits), f);
        assert_eq!(at(-3.0), 0.0);
        assert_eq!(at(-5.0), 0.0);
        assert_eq!(at(0.0), 0.0);
        assert!((at(3.0) - 3.0).abs() < 0.01);
        assert!((at(1.0) - 2.0 / 3.0).abs() < 0.01);
    }

    #[test]
    fn leaky_negative_branch() {
        let s = slope_q16(0.1);
        assert_eq!(leaky_relu(100, s, 16), 100);
        assert_eq!(leaky_relu(-100, s, 16), -10);
    }
}
