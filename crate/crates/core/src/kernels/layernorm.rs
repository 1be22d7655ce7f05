use crate::error::{Error, Result};
use crate::intmath::{int_isqrt, IntMathConfig};
use crate::kernels::{div_round, Requant};
use crate::quant::{calibrate_minmax, quantize, rescale_clamped, Rounding, SatCounter};
use crate::tensor::{FpTensor, QTensor};

/// Affine parameters of the integer LayerNorm.
///
/// The normalized value is carried at scale `2^-p`, so the affine
/// accumulator `n·I_γ + I_β` sits at `2^-p · S_γ` and `beta` is stored there.
#[derive(Debug, Clone)]
pub struct LayerNormParams {
    pub gamma: QTensor,
    pub beta: Vec<i64>,
    pub p: u32,
    pub requant: Requant,
    pub saturation: SatCounter,
}

impl LayerNormParams {
    pub fn new(
        gamma: QTensor,
        beta: Vec<i64>,
        p: u32,
        s_out: f64,
        k_out: u8,
        rounding: Rounding,
    ) -> Result<Self> {
        if gamma.dims().len() != 1 || beta.len() != gamma.len() {
            return Err(Error::Shape(format!(
                "gamma {:?} and beta of {} entries must be matching vectors",
                gamma.dims(),
                beta.len()
            )));
        }
        if !(1..=24).contains(&p) {
            return Err(Error::Argument(format!(
                "precision exponent {p} outside [1, 24]"
            )));
        }
        crate::audit::real_op("layernorm scales");
        let acc_scale = gamma.scale() / (1u64 << p) as f64;
        let requant = Requant::from_scales(acc_scale, s_out, k_out, rounding)?;
        Ok(Self {
            gamma,
            beta,
            p,
            requant,
            saturation: SatCounter::default(),
        })
    }

    /// Quantizes real affine factors: γ by min-max at `k_gamma` bits, β onto
    /// the accumulator scale.
    pub fn from_real(
        gamma: &FpTensor,
        beta: &FpTensor,
        k_gamma: u8,
        p: u32,
        s_out: f64,
        k_out: u8,
        rounding: Rounding,
    ) -> Result<Self> {
        if gamma.len() != beta.len() {
            return Err(Error::Shape("gamma and beta lengths differ".into()));
        }
        let qg = quantize(gamma, &calibrate_minmax(gamma, k_gamma)?)?;
        let qg = qg.reshape(vec![gamma.len()])?;
        let acc_scale = qg.scale() / (1u64 << p) as f64;
        let limit = ((1i64 << 31) - 1) as f64;
        let beta = beta
            .data()
            .iter()
            .map(|&b| (b / acc_scale).round().clamp(-limit, limit) as i64)
            .collect();
        Self::new(qg, beta, p, s_out, k_out, rounding)
    }

    pub fn acc_scale(&self) -> f64 {
        self.gamma.scale() / (1u64 << self.p) as f64
    }
}

/// Integer LayerNorm over the last dimension.
pub fn i_layernorm(x: &QTensor, params: &LayerNormParams, cfg: &IntMathConfig) -> Result<QTensor> {
    let d = x.row_len();
    if d < 2 {
        return Err(Error::Argument(
            "layernorm rows need at least two elements".into(),
        ));
    }
    if d != params.gamma.len() {
        return Err(Error::Shape(format!(
            "row length {d} vs {} affine factors",
            params.gamma.len()
        )));
    }
    if x.bits() > 16 {
        return Err(Error::Range(format!(
            "layernorm input of {} bits",
            x.bits()
        )));
    }
    let n = d as i64;
    let rq = &params.requant;
    let mut clamped = 0;
    let mut out = Vec::with_capacity(x.len());
    let mut centered = vec![0i64; d];
    for row in x.rows() {
        let mean = div_round(row.iter().sum(), n);
        for (c, &v) in centered.iter_mut().zip(row) {
            *c = v - mean;
        }
        let var = centered.iter().map(|c| c * c).sum::<i64>() / n;
        let std = int_isqrt(var, cfg.iters).max(1);
        for ((&c, &g), &b) in centered.iter().zip(params.gamma.data()).zip(&params.beta) {
            let norm = div_round(c << params.p, std);
            out.push(rescale_clamped(
                norm * g + b,
                rq.dyadic,
                rq.rounding,
                rq.k_out,
                &mut clamped,
            ));
        }
    }
    params.saturation.add(clamped);
    QTensor::new(x.dims().to_vec(), out, rq.s_out, rq.k_out)
}
