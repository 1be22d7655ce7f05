use crate::error::{Error, Result};
use crate::kernels::Requant;
use crate::quant::{Rounding, SatCounter};
use crate::tensor::QTensor;

const MAX_INNER: usize = 1 << 15;
const ACC_LIMIT: i64 = (1 << 31) - 1;

/// `a · b_tᵀ` accumulated exactly; fails if any sum leaves the 32-bit range.
/// `a` is `rows × inner`, `b_t` is `cols × inner`.
pub fn matmul_acc(a: &QTensor, b_t: &QTensor) -> Result<Vec<i64>> {
    let (rows, inner) = a.matrix_dims();
    let (cols, inner_b) = b_t.matrix_dims();
    if inner != inner_b {
        return Err(Error::Shape(format!(
            "inner dimensions differ: {inner} vs {inner_b}"
        )));
    }
    if inner > MAX_INNER {
        return Err(Error::Range(format!(
            "accumulation length {inner} exceeds {MAX_INNER}"
        )));
    }
    if a.bits() > 16 || b_t.bits() > 16 {
        return Err(Error::Range(format!(
            "operands of {} and {} bits are too wide",
            a.bits(),
            b_t.bits()
        )));
    }
    let mut out = Vec::with_capacity(rows * cols);
    for ar in a.rows() {
        for br in b_t.rows() {
            let acc: i64 = ar.iter().zip(br).map(|(x, y)| x * y).sum();
            if acc.abs() > ACC_LIMIT {
                return Err(Error::Range(format!("accumulator {acc} overflows 32 bits")));
            }
            out.push(acc);
        }
    }
    Ok(out)
}

/// `q · kᵀ` rescaled with a precomputed requantizer.
pub fn int_matmul_with(
    q: &QTensor,
    k: &QTensor,
    rq: &Requant,
    sat: &SatCounter,
) -> Result<QTensor> {
    let rows = q.matrix_dims().0;
    let cols = k.matrix_dims().0;
    let acc = matmul_acc(q, k)?;
    // the accumulator scale is not needed by the integer rescale; tag with s_out
    let acc = QTensor::new(vec![rows, cols], acc, rq.s_out, 32)?;
    rq.apply(&acc, sat)
}

/// `q · kᵀ` requantized to `s_out` with `k_out` bits.
pub fn int_matmul(
    q: &QTensor,
    k: &QTensor,
    s_out: f64,
    k_out: u8,
    rounding: Rounding,
) -> Result<QTensor> {
    let rq = Requant::from_scales(q.scale() * k.scale(), s_out, k_out, rounding)?;
    int_matmul_with(q, k, &rq, &SatCounter::default())
}

/// Quantized dense layer `y = x · Wᵀ + bias`.
///
/// `w` is `out × in` at scale `S_W`; `bias` is held at the accumulator
/// scale `S_in · S_W` so it adds directly onto the 32-bit sums.
#[derive(Debug, Clone)]
pub struct DenseWeights {
    pub w: QTensor,
    pub bias: Vec<i64>,
    /// `S_in · S_W`, the scale of the raw accumulator.
    pub acc_scale: f64,
    pub requant: Requant,
    pub saturation: SatCounter,
}

impl DenseWeights {
    pub fn new(
        w: QTensor,
        bias: Vec<i64>,
        s_in: f64,
        s_out: f64,
        k_out: u8,
        rounding: Rounding,
    ) -> Result<Self> {
        let (out, _) = w.matrix_dims();
        if bias.len() != out {
            return Err(Error::Shape(format!(
                "bias has {} entries for {out} outputs",
                bias.len()
            )));
        }
        if bias.iter().any(|b| b.abs() > ACC_LIMIT) {
            return Err(Error::Range("bias does not fit 32 bits".into()));
        }
        crate::audit::real_op("dense scales");
        let acc_scale = s_in * w.scale();
        let requant = Requant::from_scales(acc_scale, s_out, k_out, rounding)?;
        Ok(Self {
            w,
            bias,
            acc_scale,
            requant,
            saturation: SatCounter::default(),
        })
    }

    pub fn in_features(&self) -> usize {
        self.w.row_len()
    }

    pub fn out_features(&self) -> usize {
        self.w.matrix_dims().0
    }
}

/// Raw 32-bit output `x · Wᵀ + bias` at scale `S_in · S_W`.
pub fn int_dense_acc(x: &QTensor, w: &DenseWeights) -> Result<QTensor> {
    if x.row_len() != w.in_features() {
        return Err(Error::Shape(format!(
            "dense expects {} input features, got {}",
            w.in_features(),
            x.row_len()
        )));
    }
    let rows = x.matrix_dims().0;
    let mut acc = matmul_acc(x, &w.w)?;
    for row in acc.chunks_exact_mut(w.out_features()) {
        for (a, b) in row.iter_mut().zip(&w.bias) {
            *a += b;
            if a.abs() > ACC_LIMIT {
                return Err(Error::Range(format!("accumulator {a} overflows 32 bits")));
            }
        }
    }
    QTensor::new(vec![rows, w.out_features()], acc, w.acc_scale, 32)
}

pub fn int_dense(x: &QTensor, w: &DenseWeights) -> Result<QTensor> {
    let acc = int_dense_acc(x, w)?;
    w.requant.apply(&acc, &w.saturation)
}
