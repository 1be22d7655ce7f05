//! Integer-only layer kernels.
//!
//! Each kernel has an integer path driven by precomputed constants (a
//! [`Requant`], [`ShiftmaxPlan`], ...) and, where useful, a convenience entry
//! point that derives those constants from real scales.

mod dense;
mod gelu;
mod layernorm;
mod residual;
mod shiftmax;

pub use dense::{int_dense, int_dense_acc, int_matmul, int_matmul_with, matmul_acc, DenseWeights};
pub use gelu::{shift_gelu, shift_gelu_raw, GeluPlan};
pub use layernorm::{i_layernorm, LayerNormParams};
pub use residual::{residual_add, residual_add_with, ResidualPlan};
pub use shiftmax::{shiftmax, shiftmax_with, ShiftmaxPlan};

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::quant::{dyadic, requantize, DyadicScale, Rounding, SatCounter};
use crate::tensor::QTensor;

/// Precomputed rescale of an integer tensor onto a target scale and width.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Requant {
    pub dyadic: DyadicScale,
    pub s_out: f64,
    pub k_out: u8,
    pub rounding: Rounding,
}

impl Requant {
    /// Requantizer for `value · s_in` onto `s_out`, i.e. ratio `s_in / s_out`.
    pub fn from_scales(s_in: f64, s_out: f64, k_out: u8, rounding: Rounding) -> Result<Self> {
        crate::audit::real_op("scale ratio");
        Ok(Self {
            dyadic: dyadic(s_in / s_out)?,
            s_out,
            k_out,
            rounding,
        })
    }

    pub fn apply(&self, acc: &QTensor, sat: &SatCounter) -> Result<QTensor> {
        requantize(acc, self.dyadic, self.k_out, self.s_out, self.rounding, sat)
    }
}

/// Round-half-away-from-zero integer division by a positive divisor.
#[inline]
pub(crate) fn div_round(a: i64, b: i64) -> i64 {
    debug_assert!(b > 0);
    if a >= 0 {
        (a + b / 2) / b
    } else {
        -((-a + b / 2) / b)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn div_round_ties_away() {
        assert_eq!(div_round(5, 2), 3);
        assert_eq!(div_round(-5, 2), -3);
        assert_eq!(div_round(4, 3), 1);
        assert_eq!(div_round(-2, 3), -1);
        assert_eq!(div_round(0, 7), 0);
    }
}
