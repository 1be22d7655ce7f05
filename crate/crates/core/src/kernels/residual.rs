use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quant::{dyadic, qmax_clamp, rescale, DyadicScale, Rounding, SatCounter};
use crate::tensor::QTensor;

/// Alignment of two operands onto a shared output scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResidualPlan {
    pub a: DyadicScale,
    pub b: DyadicScale,
    pub s_out: f64,
    pub k_out: u8,
    pub rounding: Rounding,
}

impl ResidualPlan {
    pub fn new(s_a: f64, s_b: f64, s_out: f64, k_out: u8, rounding: Rounding) -> Result<Self> {
        crate::audit::real_op("residual alignment");
        Ok(Self {
            a: dyadic(s_a / s_out)?,
            b: dyadic(s_b / s_out)?,
            s_out,
            k_out,
            rounding,
        })
    }
}

pub fn residual_add_with(
    a: &QTensor,
    b: &QTensor,
    plan: &ResidualPlan,
    sat: &SatCounter,
) -> Result<QTensor> {
    if a.dims() != b.dims() {
        return Err(Error::Shape(format!(
            "residual operands {:?} vs {:?}",
            a.dims(),
            b.dims()
        )));
    }
    let mut clamped = 0;
    let data = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| {
            let sum = rescale(x, plan.a, plan.rounding) + rescale(y, plan.b, plan.rounding);
            qmax_clamp(sum, plan.k_out, &mut clamped)
        })
        .collect();
    sat.add(clamped);
    QTensor::new(a.dims().to_vec(), data, plan.s_out, plan.k_out)
}

pub fn residual_add(
    a: &QTensor,
    b: &QTensor,
    s_out: f64,
    k_out: u8,
    rounding: Rounding,
) -> Result<QTensor> {
    let plan = ResidualPlan::new(a.scale(), b.scale(), s_out, k_out, rounding)?;
    residual_add_with(a, b, &plan, &SatCounter::default())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn adding_zero_is_identity() {
        let a = QTensor::new(vec![2, 2], vec![1, -127, 64, 0], 0.03, 8).unwrap();
        let z = QTensor::zeros(vec![2, 2], 0.7, 8).unwrap();
        assert_eq!(residual_add(&a, &z, 0.03, 8, Rounding::Nearest).unwrap(), a);
    }

    #[test]
    fn opposites_cancel() {
        let a = QTensor::new(vec![3], vec![5, -9, 127], 0.1, 8).unwrap();
        let b = QTensor::new(vec![3], vec![-5, 9, -127], 0.1, 8).unwrap();
        let y = residual_add(&a, &b, 0.37, 8, Rounding::Nearest).unwrap();
        assert!(y.data().iter().all(|&v| v == 0));
    }

    #[test]
    fn shape_mismatch() {
        let a = QTensor::zeros(vec![3], 0.1, 8).unwrap();
        let b = QTensor::zeros(vec![1, 3], 0.1, 8).unwrap();
        assert!(residual_add(&a, &b, 0.1, 8, Rounding::Nearest).is_err());
    }
}
