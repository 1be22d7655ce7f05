//! Integer primitives shared by the non-linear kernels: sign-propagating
//! shifts, the base-2 shift exponential, reciprocal-based integer division
//! and the fixed-iteration integer square root.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tunables of the integer approximations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntMathConfig {
    /// Left-shift headroom applied before the exponent shift.
    pub n: u32,
    /// Reciprocal precision exponent of [`int_div`].
    pub m: u32,
    /// Newton iterations of [`int_isqrt`].
    pub iters: u32,
}

impl Default for IntMathConfig {
    fn default() -> Self {
        Self {
            n: 15,
            m: 47,
            iters: 10,
        }
    }
}

impl IntMathConfig {
    pub fn validate(&self) -> Result<()> {
        if !(8..=20).contains(&self.n) {
            return Err(Error::Argument(format!(
                "N must be in [8, 20], got {}",
                self.n
            )));
        }
        if !(40..=60).contains(&self.m) {
            return Err(Error::Argument(format!(
                "M must be in [40, 60], got {}",
                self.m
            )));
        }
        if self.iters < 1 {
            return Err(Error::Argument("isqrt iterations must be >= 1".into()));
        }
        Ok(())
    }
}

/// Floor division by `2^s`.
#[inline]
pub fn arith_rshift(x: i64, s: u32) -> i64 {
    debug_assert!(s <= 62);
    x >> s
}

/// `I_0 = round(1 / S)`, the integer standing for 1.0 at scale `S`.
pub fn unit_integer(scale: f64) -> Result<i64> {
    crate::audit::real_op("reciprocal of scale");
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(Error::Argument(format!(
            "scale must be positive, got {scale}"
        )));
    }
    let i0 = (1.0 / scale).round();
    if i0 < 1.0 || i0 >= (1u64 << 31) as f64 {
        return Err(Error::Domain(format!(
            "round(1/S) = {i0} outside [1, 2^31) for S = {scale}"
        )));
    }
    Ok(i0 as i64)
}

/// Fixed-point exponential: `scale · mantissa ≈ e^(S·I)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExpFixed {
    pub mantissa: i64,
    pub scale: f64,
}

/// Integer core of the shift exponential for a non-positive `i` given
/// `i0 = round(1/S)`. The result is at scale `S / 2^n`.
#[inline]
pub fn shift_exp_int(i: i64, i0: i64, n: u32) -> i64 {
    debug_assert!(i <= 0 && i0 >= 1);
    // i · log2(e) with log2(e) ≈ 1.0111b
    let ip = i + (i >> 1) - (i >> 4);
    // ip = -q·i0 - r with r in [0, i0)
    let q = (-ip) / i0;
    let r = -(ip + q * i0);
    // 2^(-r·S) ≈ 1 - r·S/2
    let ib = ((-r) >> 1) + i0;
    if q <= n as i64 {
        ib << (n as i64 - q)
    } else {
        let s = q - n as i64;
        if s >= 63 {
            0
        } else {
            ib >> s
        }
    }
}

pub fn shift_exp(i: i64, scale: f64, cfg: &IntMathConfig) -> Result<ExpFixed> {
    if i > 0 {
        return Err(Error::Domain(format!(
            "shift exponential needs a non-positive input, got {i}"
        )));
    }
    let i0 = unit_integer(scale)?;
    Ok(ExpFixed {
        mantissa: shift_exp_int(i, i0, cfg.n),
        scale: scale / (1u64 << cfg.n) as f64,
    })
}

/// Integer core of [`int_div`]: `(floor(2^m / i2) · i1) >> (m - (k_out - 1))`, clamped.
#[inline]
pub fn int_div_int(i1: i64, i2: i64, k_out: u8, m: u32) -> i64 {
    debug_assert!(i2 > 0 && (0..=i2).contains(&i1));
    let recip = (1i64 << m) / i2;
    let v = (recip * i1) >> (m - (k_out as u32 - 1));
    v.min((1i64 << (k_out - 1)) - 1)
}

/// Fixed-point ratio `i1 / i2` with `k_out` bits. Returns `(I_out, S_out)`
/// where `S_out = 1 / 2^(k_out - 1)`.
pub fn int_div(i1: i64, i2: i64, k_out: u8, cfg: &IntMathConfig) -> Result<(i64, f64)> {
    if i2 == 0 {
        return Err(Error::Domain("integer division by zero".into()));
    }
    if !(0..1 << 31).contains(&i2) {
        return Err(Error::Argument(format!("divisor {i2} outside (0, 2^31)")));
    }
    if i1 < 0 || i1 > i2 {
        return Err(Error::Argument(format!(
            "dividend {i1} must lie in [0, {i2}]"
        )));
    }
    if !(2..=16).contains(&k_out) {
        return Err(Error::Argument(format!(
            "k_out must be in [2, 16], got {k_out}"
        )));
    }
    if cfg.m < k_out as u32 || cfg.m > 62 {
        return Err(Error::Argument(format!(
            "M = {} unusable for k_out = {k_out}",
            cfg.m
        )));
    }
    Ok((
        int_div_int(i1, i2, k_out, cfg.m),
        1.0 / (1u64 << (k_out - 1)) as f64,
    ))
}

/// Position of the highest set bit plus one; zero for zero.
#[inline]
pub fn bit_length(v: u64) -> u32 {
    64 - v.leading_zeros()
}

/// Integer square root by exactly `iters` Newton steps from `2^(bit(v)/2)`.
/// The result is within one of `floor(sqrt(v))`.
pub fn int_isqrt(v: i64, iters: u32) -> i64 {
    debug_assert!(v >= 0);
    if v <= 0 {
        return 0;
    }
    let mut x = 1i64 << (bit_length(v as u64) / 2);
    for _ in 0..iters {
        x = (x + v / x) >> 1;
    }
    x
}
