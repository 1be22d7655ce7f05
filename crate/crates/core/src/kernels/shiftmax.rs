use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::intmath::{int_div_int, shift_exp_int, unit_integer, IntMathConfig};
use crate::tensor::QTensor;

/// Integer constants for a softmax over inputs at a fixed scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShiftmaxPlan {
    /// `round(1 / S_in)`
    pub i0: i64,
    pub k_out: u8,
    /// `1 / 2^(k_out - 1)`
    pub s_out: f64,
}

impl ShiftmaxPlan {
    pub fn new(s_in: f64, k_out: u8) -> Result<Self> {
        if !(2..=16).contains(&k_out) {
            return Err(Error::Argument(format!(
                "k_out must be in [2, 16], got {k_out}"
            )));
        }
        Ok(Self {
            i0: unit_integer(s_in)?,
            k_out,
            s_out: 1.0 / (1u64 << (k_out - 1)) as f64,
        })
    }
}

/// Row-wise integer softmax along the last dimension.
pub fn shiftmax_with(x: &QTensor, plan: &ShiftmaxPlan, cfg: &IntMathConfig) -> Result<QTensor> {
    if x.bits() > 16 {
        return Err(Error::Range(format!("shiftmax input of {} bits", x.bits())));
    }
    let d = x.row_len();
    let mut out = Vec::with_capacity(x.len());
    let mut exps = vec![0i64; d];
    for row in x.rows() {
        let max = *row.iter().max().unwrap();
        for (e, &v) in exps.iter_mut().zip(row) {
            *e = shift_exp_int(v - max, plan.i0, cfg.n);
        }
        let sum: i64 = exps.iter().sum();
        if sum >= 1 << 31 {
            return Err(Error::Range(format!(
                "exponential sum {sum} exceeds 31 bits"
            )));
        }
        out.extend(exps.iter().map(|&e| int_div_int(e, sum, plan.k_out, cfg.m)));
    }
    QTensor::new(x.dims().to_vec(), out, plan.s_out, plan.k_out)
}

pub fn shiftmax(x: &QTensor, k_out: u8, cfg: &IntMathConfig) -> Result<QTensor> {
    shiftmax_with(x, &ShiftmaxPlan::new(x.scale(), k_out)?, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    const CFG: IntMathConfig = IntMathConfig {
        n: 15,
        m: 47,
        iters: 10,
    };

    #[test]
    fn equal_inputs_share_mass() {
        let x = QTensor::new(vec![1, 4], vec![5; 4], 1.0 / 16.0, 8).unwrap();
        let y = shiftmax(&x, 8, &CFG).unwrap();
        assert_eq!(y.data(), &[32; 4]);
        assert_eq!(y.scale(), 1.0 / 128.0);
    }

    #[test]
    fn single_element_clamps() {
        let x = QTensor::new(vec![3, 1], vec![-100, 0, 100], 0.1, 8).unwrap();
        assert_eq!(shiftmax(&x, 8, &CFG).unwrap().data(), &[127; 3]);
    }

    #[test]
    fn two_element_trace() {
        let x = QTensor::new(vec![2], vec![0, -16], 1.0 / 16.0, 8).unwrap();
        assert_eq!(shiftmax(&x, 8, &CFG).unwrap().data(), &[93, 34]);
    }

    #[test]
    fn rejects_wide_inputs() {
        let x = QTensor::new(vec![2], vec![0, 1], 1.0, 32).unwrap();
        assert!(shiftmax(&x, 8, &CFG).is_err());
    }
}
