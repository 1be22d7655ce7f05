//! Symmetric uniform quantization and dyadic requantization.

use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{qmax, FpTensor, QTensor};

/// Shift used for every dyadic conversion unless the multiplier would overflow.
pub const DEFAULT_SHIFT: u32 = 30;
pub const MAX_SHIFT: u32 = 62;

/// Clipping value `m`, bit-width `k` and the derived step `scale = 2m / (2^k - 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuantParams {
    pub m: f64,
    pub k: u8,
    pub scale: f64,
}

impl QuantParams {
    pub fn new(m: f64, k: u8) -> Result<Self> {
        crate::audit::real_op("quantization parameters");
        if !(m > 0.0 && m.is_finite()) {
            return Err(Error::Argument(format!(
                "clipping value must be positive, got {m}"
            )));
        }
        if !(2..=32).contains(&k) {
            return Err(Error::Argument(format!(
                "bit-width must be in 2..=32, got {k}"
            )));
        }
        let scale = 2.0 * m / ((1u64 << k) - 1) as f64;
        Ok(Self { m, k, scale })
    }
}

/// Min-max clipping value of a set of samples; 1.0 when every sample is zero.
pub fn minmax_clip(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Argument("cannot calibrate an empty tensor".into()));
    }
    let (lo, hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    let m = lo.abs().max(hi.abs());
    Ok(if m == 0.0 { 1.0 } else { m })
}

pub fn calibrate_minmax(t: &FpTensor, k: u8) -> Result<QuantParams> {
    QuantParams::new(minmax_clip(t.data())?, k)
}

pub fn quantize(t: &FpTensor, p: &QuantParams) -> Result<QTensor> {
    crate::audit::real_op("quantize");
    let hi = qmax(p.k);
    let data = t
        .data()
        .iter()
        .map(|&r| {
            let i = (r.clamp(-p.m, p.m) / p.scale).round() as i64;
            i.clamp(-hi, hi)
        })
        .collect();
    QTensor::new(t.dims().to_vec(), data, p.scale, p.k)
}

pub fn dequantize(q: &QTensor) -> FpTensor {
    crate::audit::real_op("dequantize");
    let s = q.scale();
    FpTensor::new(
        q.dims().to_vec(),
        q.data().iter().map(|&i| s * i as f64).collect(),
    )
    .expect("dequantized values of a valid QTensor are finite")
}

/// The rational `b / 2^c`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DyadicScale {
    pub b: u64,
    pub c: u32,
}

impl DyadicScale {
    pub const ONE: DyadicScale = DyadicScale { b: 1, c: 0 };

    pub fn value(&self) -> f64 {
        self.b as f64 / (1u64 << self.c) as f64
    }
}

/// `b = round(x · 2^c)`; fails when `b` would not fit 32 bits.
pub fn to_dyadic(x: f64, c: u32) -> Result<DyadicScale> {
    crate::audit::real_op("dyadic conversion");
    if !(x > 0.0 && x.is_finite()) {
        return Err(Error::Argument(format!(
            "dyadic conversion needs a positive finite value, got {x}"
        )));
    }
    if c > MAX_SHIFT {
        return Err(Error::Argument(format!("shift {c} exceeds {MAX_SHIFT}")));
    }
    let b = (x * (1u64 << c) as f64).round();
    if b >= (1u64 << 32) as f64 {
        return Err(Error::Range(format!(
            "multiplier for {x} at shift {c} exceeds 32 bits"
        )));
    }
    Ok(DyadicScale { b: b as u64, c })
}

/// Dyadic form of `x` at [`DEFAULT_SHIFT`], lowering the shift until `b` fits.
pub fn dyadic(x: f64) -> Result<DyadicScale> {
    let mut c = DEFAULT_SHIFT;
    loop {
        match to_dyadic(x, c) {
            Err(Error::Range(_)) if c > 0 => c -= 1,
            other => return other,
        }
    }
}

/// Rounding applied by the requantization shift.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Rounding {
    /// `(b·I + 2^(c-1)) >> c`
    #[default]
    Nearest,
    /// `(b·I) >> c`
    Floor,
}

impl std::str::FromStr for Rounding {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "nearest" => Ok(Rounding::Nearest),
            "floor" => Ok(Rounding::Floor),
            _ => Err(Error::Argument(format!(
                "rounding must be floor or nearest, got {s}"
            ))),
        }
    }
}

/// Count of values clamped at a bit-width boundary. Safe to bump from many threads.
#[derive(Debug, Default)]
pub struct SatCounter(AtomicU64);

impl SatCounter {
    pub fn add(&self, n: u64) {
        if n > 0 {
            self.0.fetch_add(n, Ordering::Relaxed);
        }
    }

    pub fn get(&self) -> u64 {
        self.0.load(Ordering::Relaxed)
    }

    pub fn reset(&self) {
        self.0.store(0, Ordering::Relaxed);
    }
}

impl Clone for SatCounter {
    fn clone(&self) -> Self {
        SatCounter(AtomicU64::new(self.get()))
    }
}

/// Integer rescale of one accumulator value, without clamping.
#[inline]
pub fn rescale(acc: i64, d: DyadicScale, rounding: Rounding) -> i64 {
    let prod = d.b as i128 * acc as i128;
    let shifted = match rounding {
        Rounding::Nearest if d.c > 0 => (prod + (1i128 << (d.c - 1))) >> d.c,
        _ => prod >> d.c,
    };
    shifted as i64
}

/// Rescale and clamp to the symmetric `k_out` range, counting saturations.
#[inline]
pub(crate) fn rescale_clamped(
    acc: i64,
    d: DyadicScale,
    rounding: Rounding,
    k_out: u8,
    sat: &mut u64,
) -> i64 {
    qmax_clamp(rescale(acc, d, rounding), k_out, sat)
}

#[inline]
pub(crate) fn qmax_clamp(y: i64, k_out: u8, sat: &mut u64) -> i64 {
    let hi = qmax(k_out);
    if y > hi {
        *sat += 1;
        hi
    } else if y < -hi {
        *sat += 1;
        -hi
    } else {
        y
    }
}

/// Requantize a 32-bit accumulator tensor with `d`, tagging the output with `s_out`.
pub fn requantize(
    acc: &QTensor,
    d: DyadicScale,
    k_out: u8,
    s_out: f64,
    rounding: Rounding,
    sat: &SatCounter,
) -> Result<QTensor> {
    if acc.bits() > 32 {
        return Err(Error::Range(format!(
            "accumulator declares {} bits",
            acc.bits()
        )));
    }
    if d.b >= 1 << 32 || d.c > MAX_SHIFT {
        return Err(Error::Range(format!("dyadic scale {d:?} out of range")));
    }
    let mut clamped = 0;
    let data = acc
        .data()
        .iter()
        .map(|&i| rescale_clamped(i, d, rounding, k_out, &mut clamped))
        .collect();
    sat.add(clamped);
    QTensor::new(acc.dims().to_vec(), data, s_out, k_out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fp(v: &[f64]) -> FpTensor {
        FpTensor::new(vec![v.len()], v.to_vec()).unwrap()
    }

    #[test]
    fn calibration_examples() {
        let p = calibrate_minmax(&fp(&[-0.5, 0.25]), 8).unwrap();
        assert_eq!(p.m, 0.5);
        assert_eq!(p.scale, 1.0 / 255.0);
        assert_eq!(calibrate_minmax(&fp(&[0.0, 0.0, 0.0]), 8).unwrap().m, 1.0);
        let p = calibrate_minmax(&fp(&[-1.0, 1.0]), 4).unwrap();
        assert_eq!(p.m, 1.0);
        assert_eq!(p.scale, 2.0 / 15.0);
        assert!(minmax_clip(&[]).is_err());
    }

    #[test]
    fn quantize_examples() {
        let p = QuantParams::new(1.0, 8).unwrap();
        assert_eq!(p.scale, 2.0 / 255.0);
        let q = quantize(&fp(&[0.0, 0.25, -0.25]), &p).unwrap();
        assert_eq!(q.data(), &[0, 32, -32]);
        assert_eq!(q.scale(), 2.0 / 255.0);
        assert_eq!(q.bits(), 8);
        assert_eq!(quantize(&fp(&[1.0]), &p).unwrap().data(), &[127]);
        assert_eq!(quantize(&fp(&[-3.0]), &p).unwrap().data(), &[-127]);
        let p = QuantParams::new(0.3, 4).unwrap();
        assert_eq!(quantize(&fp(&[0.0]), &p).unwrap().data(), &[0]);
    }

    #[test]
    fn dequantize_examples() {
        let q = QTensor::new(vec![2], vec![0, 32], 2.0 / 255.0, 8).unwrap();
        let r = dequantize(&q);
        assert_eq!(r.data()[0], 0.0);
        assert_eq!(r.data()[1], 32.0 * 2.0 / 255.0);
    }

    #[test]
    fn dyadic_examples() {
        assert_eq!(to_dyadic(0.5, 1).unwrap(), DyadicScale { b: 1, c: 1 });
        assert_eq!(to_dyadic(1.0, 0).unwrap(), DyadicScale { b: 1, c: 0 });
        let d = to_dyadic(0.3, 24).unwrap();
        assert_eq!(d.b, 5_033_165);
        assert!((d.value() - 0.3).abs() <= 2f64.powi(-25));
        assert!(matches!(to_dyadic(5.0, 30), Err(Error::Range(_))));
        assert!(to_dyadic(-1.0, 3).is_err());
        assert!(to_dyadic(1.0, 63).is_err());
    }

    #[test]
    fn dyadic_lowers_shift_on_overflow() {
        assert_eq!(dyadic(0.3).unwrap().c, 30);
        let d = dyadic(5.0).unwrap();
        assert_eq!(d.c, 29);
        assert_eq!(d.value(), 5.0);
        assert!(dyadic(2f64.powi(40)).is_err());
    }

    #[test]
    fn requantize_examples() {
        let sat = SatCounter::default();
        let acc = |v: i64| QTensor::new(vec![1], vec![v], 1.0, 32).unwrap();
        let r = |v, b, c| {
            requantize(
                &acc(v),
                DyadicScale { b, c },
                8,
                1.0,
                Rounding::Nearest,
                &sat,
            )
            .unwrap()
            .data()[0]
        };
        assert_eq!(r(2, 1, 0), 2);
        assert_eq!(r(3, 1, 1), 2);
        assert_eq!(r(-3, 1, 1), -1);
        assert_eq!(r(100, 5_033_165, 24), 30);
        assert_eq!(sat.get(), 0);
        assert_eq!(r(1000, 1, 0), 127);
        assert_eq!(r(-1000, 1, 0), -127);
        assert_eq!(sat.get(), 2);
    }

    #[test]
    fn floor_rounding_truncates() {
        let sat = SatCounter::default();
        let acc = QTensor::new(vec![3], vec![3, -3, 5], 1.0, 32).unwrap();
        let out = requantize(
            &acc,
            DyadicScale { b: 1, c: 1 },
            8,
            1.0,
            Rounding::Floor,
            &sat,
        )
        .unwrap();
        assert_eq!(out.data(), &[1, -2, 2]);
    }

    #[test]
    fn rounding_parses() {
        assert_eq!("floor".parse::<Rounding>().unwrap(), Rounding::Floor);
        assert_eq!("nearest".parse::<Rounding>().unwrap(), Rounding::Nearest);
        assert!("up".parse::<Rounding>().is_err());
    }
}
