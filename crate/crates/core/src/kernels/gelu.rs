use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::intmath::{int_div_int, shift_exp_int, unit_integer, IntMathConfig};
use crate::tensor::QTensor;

/// Integer constants for the shift-based GELU at a fixed input scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeluPlan {
    /// `round(1 / S_in)`
    pub i0: i64,
    /// Bit-width of the sigmoid estimate.
    pub k_out: u8,
    /// `S_in / 2^(k_out - 1)`, the scale of the raw product.
    pub s_out: f64,
}

impl GeluPlan {
    pub fn new(s_in: f64, k_out: u8) -> Result<Self> {
        if !(2..=16).contains(&k_out) {
            return Err(Error::Argument(format!(
                "k_out must be in [2, 16], got {k_out}"
            )));
        }
        Ok(Self {
            i0: unit_integer(s_in)?,
            k_out,
            s_out: s_in / (1u64 << (k_out - 1)) as f64,
        })
    }
}

/// GELU(x) ≈ x·σ(1.702x) with σ evaluated as `e^(x'-M) / (e^(x'-M) + e^(-M))`
/// over the whole tensor, `M = max(0, max x')`. Output is the raw product
/// `I_in · I_sigma` at scale `S_in / 2^(k_out-1)`, `bits_in + k_out` wide.
pub fn shift_gelu_raw(x: &QTensor, plan: &GeluPlan, cfg: &IntMathConfig) -> Result<QTensor> {
    let bits = x.bits() + plan.k_out;
    if bits > 32 {
        return Err(Error::Range(format!("gelu product would need {bits} bits")));
    }
    if plan.i0 >= 1 << (30 - cfg.n) {
        return Err(Error::Range(format!(
            "I_0 = {} too large for 31-bit sigmoid sums",
            plan.i0
        )));
    }
    // 1.702 ≈ 1.1011b
    let scaled = |i: i64| i + (i >> 1) + (i >> 3) + (i >> 4);
    let max_p = x.data().iter().map(|&i| scaled(i)).max().unwrap().max(0);
    let tail = shift_exp_int(-max_p, plan.i0, cfg.n);
    let data = x
        .data()
        .iter()
        .map(|&i| {
            let num = shift_exp_int(scaled(i) - max_p, plan.i0, cfg.n);
            let den = num + tail;
            let sigma = if den == 0 {
                0
            } else {
                int_div_int(num, den, plan.k_out, cfg.m)
            };
            i * sigma
        })
        .collect();
    QTensor::new(x.dims().to_vec(), data, plan.s_out, bits)
}

pub fn shift_gelu(x: &QTensor, k_out: u8, cfg: &IntMathConfig) -> Result<QTensor> {
    shift_gelu_raw(x, &GeluPlan::new(x.scale(), k_out)?, cfg)
}
