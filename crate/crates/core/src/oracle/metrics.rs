use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quant::dequantize;
use crate::tensor::{FpTensor, QTensor};

/// Agreement statistics between an integer result and its real reference.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub count: usize,
    pub rows: usize,
    pub max_abs_error: f64,
    pub mean_abs_error: f64,
    /// Mean over rows of the per-row cosine similarity.
    pub cosine: f64,
    pub min_cosine: f64,
    pub argmax_agreement: f64,
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    match (na == 0.0, nb == 0.0) {
        (true, true) => 1.0,
        (true, false) | (false, true) => 0.0,
        _ => (dot / (na * nb)).clamp(-1.0, 1.0),
    }
}

/// First index of the maximum.
pub(crate) fn argmax<T: PartialOrd + Copy>(v: &[T]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Metrics over rows of length `row_len`. `got_argmax` overrides the argmax
/// of `got` per row (used to take it on integers).
pub fn compare_values(
    got: &[f64],
    want: &[f64],
    row_len: usize,
    got_argmax: Option<&[usize]>,
) -> Result<Metrics> {
    if got.len() != want.len() || row_len == 0 || !got.len().is_multiple_of(row_len) {
        return Err(Error::Shape(format!(
            "compare {} vs {} values in rows of {row_len}",
            got.len(),
            want.len()
        )));
    }
    let rows = got.len() / row_len;
    if rows == 0 {
        return Ok(Metrics {
            count: 0,
            rows: 0,
            max_abs_error: 0.0,
            mean_abs_error: 0.0,
            cosine: 1.0,
            min_cosine: 1.0,
            argmax_agreement: 1.0,
        });
    }
    let (mut max_abs, mut sum_abs) = (0.0f64, 0.0);
    for (g, w) in got.iter().zip(want) {
        let e = (g - w).abs();
        max_abs = max_abs.max(e);
        sum_abs += e;
    }
    let (mut cos_sum, mut cos_min, mut agree) = (0.0, f64::INFINITY, 0usize);
    for (r, (g, w)) in got
        .chunks_exact(row_len)
        .zip(want.chunks_exact(row_len))
        .enumerate()
    {
        let c = cosine(g, w);
        cos_sum += c;
        cos_min = cos_min.min(c);
        let ga = got_argmax.map_or_else(|| argmax(g), |a| a[r]);
        if ga == argmax(w) {
            agree += 1;
        }
    }
    Ok(Metrics {
        count: got.len(),
        rows,
        max_abs_error: max_abs,
        mean_abs_error: sum_abs / got.len() as f64,
        cosine: cos_sum / rows as f64,
        min_cosine: cos_min,
        argmax_agreement: agree as f64 / rows as f64,
    })
}

/// Dequantizes `int_out` and compares it with `fp_out` row by row; the
/// integer argmax is taken on the raw integers.
pub fn compare(int_out: &QTensor, fp_out: &FpTensor) -> Result<Metrics> {
    if int_out.dims() != fp_out.dims() {
        return Err(Error::Shape(format!(
            "compare {:?} vs {:?}",
            int_out.dims(),
            fp_out.dims()
        )));
    }
    let got = dequantize(int_out);
    let argmaxes: Vec<usize> = int_out.rows().map(argmax).collect();
    compare_values(
        got.data(),
        fp_out.data(),
        int_out.row_len(),
        Some(&argmaxes),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_values() {
        let v = [0.5, -1.0, 2.0, 3.0];
        let m = compare_values(&v, &v, 2, None).unwrap();
        assert_eq!(m.max_abs_error, 0.0);
        assert!((m.cosine - 1.0).abs() < 1e-12);
        assert_eq!(m.argmax_agreement, 1.0);
    }

    #[test]
    fn orthogonal_rows() {
        let m = compare_values(&[1.0, 0.0], &[0.0, 1.0], 2, None).unwrap();
        assert_eq!(m.cosine, 0.0);
        assert_eq!(m.argmax_agreement, 0.0);
    }

    #[test]
    fn shiftmax_trace_pair() {
        let m = compare_values(&[1.0, 0.0], &[0.727, 0.266], 2, None).unwrap();
        assert!((m.max_abs_error - 0.273).abs() < 1e-12);
    }

    #[test]
    fn self_comparison_of_quantized() {
        let q = QTensor::new(vec![2, 3], vec![1, -5, 7, 0, 127, -127], 0.013, 8).unwrap();
        let m = compare(&q, &dequantize(&q)).unwrap();
        assert_eq!(m.max_abs_error, 0.0);
        assert_eq!(m.argmax_agreement, 1.0);
    }

    #[test]
    fn shape_mismatch() {
        let q = QTensor::zeros(vec![2, 3], 0.1, 8).unwrap();
        let f = FpTensor::zeros(vec![3, 2]).unwrap();
        assert!(compare(&q, &f).is_err());
    }
}
