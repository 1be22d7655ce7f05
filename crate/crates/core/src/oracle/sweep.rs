//! Randomized and grid sweeps of single kernels against their references.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::intmath::{int_div, int_isqrt, IntMathConfig};
use crate::kernels::{i_layernorm, shift_gelu, shiftmax, LayerNormParams};
use crate::oracle::metrics::argmax;
use crate::oracle::{
    compare_values, fp_layernorm, fp_softmax, gelu_erf, gelu_sigmoid, tolerances as tol,
};
use crate::oracle::{ErrorReport, SiteRecord};
use crate::quant::{requantize, to_dyadic, Rounding, SatCounter};
use crate::rng::Rng;
use crate::tensor::{FpTensor, QTensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelId {
    Shiftmax,
    ShiftGelu,
    ILayernorm,
    IntDiv,
    Isqrt,
    Requantize,
}

impl KernelId {
    pub const ALL: [KernelId; 6] = [
        KernelId::Shiftmax,
        KernelId::ShiftGelu,
        KernelId::ILayernorm,
        KernelId::IntDiv,
        KernelId::Isqrt,
        KernelId::Requantize,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            KernelId::Shiftmax => "shiftmax",
            KernelId::ShiftGelu => "shift_gelu",
            KernelId::ILayernorm => "i_layernorm",
            KernelId::IntDiv => "int_div",
            KernelId::Isqrt => "isqrt",
            KernelId::Requantize => "requantize",
        }
    }
}

impl std::str::FromStr for KernelId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        KernelId::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Argument(format!("unknown kernel id {s}")))
    }
}

/// How integer inputs are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum InputDist {
    /// Uniform over the symmetric 8-bit lattice.
    Uniform,
    /// Rounded Gaussian with the given standard deviation in integer units.
    Gaussian { std_lsb: f64 },
    /// Every lattice point with `|S·I| <= x_range` (element-wise kernels only).
    Grid { x_range: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub row_len: usize,
    pub scales: Vec<f64>,
    pub dist: InputDist,
    pub k_out: u8,
}

impl SweepSpec {
    /// Sensible defaults per kernel.
    pub fn default_for(kernel: KernelId) -> Self {
        let pow2 = |v: &[i32]| v.iter().map(|&e| 2f64.powi(-e)).collect::<Vec<_>>();
        match kernel {
            KernelId::Shiftmax => Self {
                row_len: 197,
                scales: pow2(&[3, 4, 6, 7]),
                dist: InputDist::Uniform,
                k_out: 8,
            },
            KernelId::ShiftGelu => Self {
                row_len: 1,
                scales: pow2(&[3, 4, 6]),
                dist: InputDist::Grid { x_range: 16.0 },
                k_out: 8,
            },
            KernelId::ILayernorm => Self {
                row_len: 64,
                scales: vec![0.05],
                dist: InputDist::Gaussian { std_lsb: 30.0 },
                k_out: 8,
            },
            KernelId::IntDiv | KernelId::Isqrt | KernelId::Requantize => Self {
                row_len: 1,
                scales: vec![1.0],
                dist: InputDist::Uniform,
                k_out: 8,
            },
        }
    }
}

fn draw(rng: &mut Rng, dist: InputDist) -> i64 {
    match dist {
        InputDist::Gaussian { std_lsb } => {
            let u1 = 1.0 - rng.next_f64();
            let u2 = rng.next_f64();
            let z = (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos();
            ((z * std_lsb).round() as i64).clamp(-127, 127)
        }
        _ => rng.range_i64(-127, 127),
    }
}

fn pick_scale(rng: &mut Rng, scales: &[f64]) -> f64 {
    scales[rng.range_i64(0, scales.len() as i64 - 1) as usize]
}

/// Runs `trials` samples of `kernel` against its reference and checks the
/// pinned tolerances. Deterministic given `seed`.
pub fn kernel_sweep(
    kernel: KernelId,
    spec: &SweepSpec,
    trials: usize,
    seed: u64,
    cfg: &IntMathConfig,
) -> Result<ErrorReport> {
    cfg.validate()?;
    if spec.scales.is_empty() || spec.row_len == 0 {
        return Err(Error::Argument(
            "sweep needs at least one scale and a positive row length".into(),
        ));
    }
    let config = serde_json::json!({ "kernel": kernel.name(), "spec": spec, "trials": trials, "intmath": cfg });
    let mut report = ErrorReport::new(seed, config);
    let mut rng = Rng::new(seed);
    match kernel {
        KernelId::Shiftmax => sweep_shiftmax(&mut report, spec, trials, &mut rng, cfg)?,
        KernelId::ShiftGelu => sweep_gelu(&mut report, spec, trials, &mut rng, cfg)?,
        KernelId::ILayernorm => sweep_layernorm(&mut report, spec, trials, &mut rng, cfg)?,
        KernelId::IntDiv => sweep_int_div(&mut report, spec, trials, &mut rng, cfg)?,
        KernelId::Isqrt => sweep_isqrt(&mut report, trials, &mut rng, cfg)?,
        KernelId::Requantize => sweep_requant(&mut report, trials, &mut rng)?,
    }
    Ok(report)
}

/// Structural softmax properties of one row: `(normalization bound holds,
/// order is preserved)`.
pub fn shiftmax_row_invariants(input: &[i64], out: &[i64], s_out: f64) -> (bool, bool) {
    let d = input.len() as f64;
    let sum: f64 = out.iter().map(|&v| v as f64 * s_out).sum();
    let norm_ok = sum <= 1.0 && sum >= 1.0 - (d + 2.0) * s_out;
    let mut order_ok = out[argmax(input)] == *out.iter().max().unwrap();
    let mut idx: Vec<usize> = (0..input.len()).collect();
    idx.sort_by_key(|&i| input[i]);
    for w in idx.windows(2) {
        if input[w[0]] < input[w[1]] && out[w[0]] > out[w[1]] {
            order_ok = false;
        }
    }
    (norm_ok, order_ok)
}

fn sweep_shiftmax(
    r: &mut ErrorReport,
    spec: &SweepSpec,
    trials: usize,
    rng: &mut Rng,
    cfg: &IntMathConfig,
) -> Result<()> {
    let d = spec.row_len;
    let (mut got, mut want) = (
        Vec::with_capacity(trials * d),
        Vec::with_capacity(trials * d),
    );
    let (mut norm_bad, mut order_bad, mut shift_bad) = (0usize, 0usize, 0usize);
    for _ in 0..trials {
        let s = pick_scale(rng, &spec.scales);
        let row: Vec<i64> = (0..d).map(|_| draw(rng, spec.dist)).collect();
        let x = QTensor::new(vec![1, d], row.clone(), s, 8)?;
        let y = shiftmax(&x, spec.k_out, cfg)?;
        let (n_ok, o_ok) = shiftmax_row_invariants(&row, y.data(), y.scale());
        norm_bad += usize::from(!n_ok);
        order_bad += usize::from(!o_ok);
        let offset = rng.range_i64(-1000, 1000);
        let shifted = QTensor::new(vec![1, d], row.iter().map(|v| v + offset).collect(), s, 16)?;
        if shiftmax(&shifted, spec.k_out, cfg)?.data() != y.data() {
            shift_bad += 1;
        }
        let fp = fp_softmax(&FpTensor::new(
            vec![d],
            row.iter().map(|&v| v as f64 * s).collect(),
        )?);
        got.extend(y.data().iter().map(|&v| v as f64 * y.scale()));
        want.extend_from_slice(fp.data());
    }
    let m = compare_values(&got, &want, d, None)?;
    r.add_site(SiteRecord::from_metrics("shiftmax", &m, 0));
    if trials > 0 {
        r.check_max(
            "shiftmax.max_abs_error",
            m.max_abs_error,
            tol::SHIFTMAX_MAX_ABS,
        );
        r.check_max(
            "shiftmax.mean_abs_error",
            m.mean_abs_error,
            tol::SHIFTMAX_MAX_ABS / 6.0,
        );
    }
    r.check_max("shiftmax.normalization_violations", norm_bad as f64, 0.0);
    r.check_max("shiftmax.order_violations", order_bad as f64, 0.0);
    r.check_max(
        "shiftmax.shift_invariance_violations",
        shift_bad as f64,
        0.0,
    );
    Ok(())
}

fn sweep_gelu(
    r: &mut ErrorReport,
    spec: &SweepSpec,
    trials: usize,
    rng: &mut Rng,
    cfg: &IntMathConfig,
) -> Result<()> {
    let (mut got, mut want, mut erf) = (Vec::new(), Vec::new(), Vec::new());
    let mut push = |x: f64, y: f64| {
        got.push(y);
        want.push(gelu_sigmoid(x));
        erf.push(gelu_erf(x));
    };
    match spec.dist {
        InputDist::Grid { x_range } => {
            for &s in &spec.scales {
                for i in -128i64..=127 {
                    if (i as f64 * s).abs() > x_range {
                        continue;
                    }
                    let y = shift_gelu(&QTensor::new(vec![1], vec![i], s, 8)?, spec.k_out, cfg)?;
                    push(i as f64 * s, y.data()[0] as f64 * y.scale());
                }
            }
        }
        dist => {
            for _ in 0..trials {
                let s = pick_scale(rng, &spec.scales);
                let row: Vec<i64> = (0..spec.row_len).map(|_| draw(rng, dist)).collect();
                let y = shift_gelu(
                    &QTensor::new(vec![spec.row_len], row.clone(), s, 8)?,
                    spec.k_out,
                    cfg,
                )?;
                for (&i, &o) in row.iter().zip(y.data()) {
                    push(i as f64 * s, o as f64 * y.scale());
                }
            }
        }
    }
    let m = compare_values(&got, &want, 1, None)?;
    r.add_site(SiteRecord::from_metrics("shift_gelu", &m, 0));
    let gap = compare_values(&want, &erf, 1, None)?;
    r.add_site(SiteRecord::from_metrics("gelu_sigmoid_vs_erf", &gap, 0));
    let limit = match spec.dist {
        InputDist::Grid { .. } => tol::SHIFT_GELU_GRID_MAX_ABS,
        _ => tol::SHIFT_GELU_TENSOR_MAX_ABS,
    };
    r.check_max("shift_gelu.max_abs_error", m.max_abs_error, limit);
    Ok(())
}

fn sweep_layernorm(
    r: &mut ErrorReport,
    spec: &SweepSpec,
    trials: usize,
    rng: &mut Rng,
    cfg: &IntMathConfig,
) -> Result<()> {
    let d = spec.row_len.max(2);
    let ones = FpTensor::new(vec![d], vec![1.0; d])?;
    let zeros = FpTensor::zeros(vec![d])?;
    let s_out = tol::LAYERNORM_OUT_CLIP / 127.5;
    let params =
        LayerNormParams::from_real(&ones, &zeros, 8, 15, s_out, spec.k_out, Rounding::Nearest)?;
    let gamma: Vec<f64> = params
        .gamma
        .data()
        .iter()
        .map(|&g| g as f64 * params.gamma.scale())
        .collect();
    // the reference is clipped to the representable output range; clamping is counted as saturation
    let clip = crate::tensor::qmax(spec.k_out) as f64 * s_out;
    let (mut got, mut want) = (Vec::new(), Vec::new());
    let (mut std_err_sum, mut std_err_max, mut mean_max, mut rows) = (0.0, 0.0f64, 0.0f64, 0usize);
    for _ in 0..trials {
        let s = pick_scale(rng, &spec.scales);
        let row: Vec<i64> = (0..d).map(|_| draw(rng, spec.dist)).collect();
        let y = i_layernorm(&QTensor::new(vec![1, d], row.clone(), s, 8)?, &params, cfg)?;
        let x = FpTensor::new(vec![1, d], row.iter().map(|&v| v as f64 * s).collect())?;
        let fp = fp_layernorm(&x, &gamma, zeros.data())?;
        let vals: Vec<f64> = y.data().iter().map(|&v| v as f64 * s_out).collect();
        let mean = vals.iter().sum::<f64>() / d as f64;
        let sd = (vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64).sqrt();
        let fsd = (fp.data().iter().map(|v| v * v).sum::<f64>() / d as f64).sqrt();
        if fsd > 0.0 {
            let e = (sd / fsd - 1.0).abs();
            std_err_sum += e;
            std_err_max = std_err_max.max(e);
            rows += 1;
        }
        mean_max = mean_max.max(mean.abs());
        got.extend(vals);
        want.extend(fp.data().iter().map(|v| v.clamp(-clip, clip)));
    }
    let m = compare_values(&got, &want, d, None)?;
    r.add_site(SiteRecord::from_metrics(
        "i_layernorm",
        &m,
        params.saturation.get(),
    ));
    if trials > 0 {
        r.check_max(
            "i_layernorm.max_abs_error",
            m.max_abs_error,
            tol::LAYERNORM_MAX_ABS,
        );
        r.check_max("i_layernorm.row_mean_in_output_lsb", mean_max / s_out, 2.0);
        r.check_max(
            "i_layernorm.std_relative_error.mean",
            std_err_sum / rows.max(1) as f64,
            tol::LAYERNORM_STD_REL_MEAN,
        );
        r.check_max(
            "i_layernorm.std_relative_error.max",
            std_err_max,
            tol::LAYERNORM_STD_REL_MAX,
        );
    }
    Ok(())
}

fn sweep_int_div(
    r: &mut ErrorReport,
    spec: &SweepSpec,
    trials: usize,
    rng: &mut Rng,
    cfg: &IntMathConfig,
) -> Result<()> {
    let k = spec.k_out;
    let (mut got, mut want) = (Vec::with_capacity(trials), Vec::with_capacity(trials));
    let (mut mismatches, mut bound_bad) = (0usize, 0usize);
    for _ in 0..trials {
        let i2 = rng.range_i64(1, (1 << 31) - 1);
        let i1 = rng.range_i64(0, i2);
        let (q, s_out) = int_div(i1, i2, k, cfg)?;
        let wide = (((1u128 << cfg.m) / i2 as u128) * i1 as u128) >> (cfg.m - (k as u32 - 1));
        let wide = wide.min((1u128 << (k - 1)) - 1) as i64;
        mismatches += usize::from(wide != q);
        let ratio = i1 as f64 / i2 as f64;
        let err = (q as f64 * s_out - ratio).abs();
        if err > s_out * (1.0 + i2 as f64 / 2f64.powi(cfg.m as i32 - k as i32 + 1)) {
            bound_bad += 1;
        }
        got.push(q as f64 * s_out);
        want.push(ratio);
    }
    let m = compare_values(&got, &want, 1, None)?;
    r.add_site(SiteRecord::from_metrics("int_div", &m, 0));
    r.check_max("int_div.oracle_mismatches", mismatches as f64, 0.0);
    r.check_max("int_div.bound_violations", bound_bad as f64, 0.0);
    Ok(())
}

fn sweep_isqrt(
    r: &mut ErrorReport,
    trials: usize,
    rng: &mut Rng,
    cfg: &IntMathConfig,
) -> Result<()> {
    let (mut got, mut want) = (Vec::with_capacity(trials), Vec::with_capacity(trials));
    let mut bad = 0usize;
    for _ in 0..trials {
        let v = rng.range_i64(0, (1 << 31) - 1);
        let s = int_isqrt(v, cfg.iters);
        let exact = (v as u64).isqrt() as i64;
        bad += usize::from((s - exact).abs() > 1);
        got.push(s as f64);
        want.push(exact as f64);
    }
    let m = compare_values(&got, &want, 1, None)?;
    r.add_site(SiteRecord::from_metrics("isqrt", &m, 0));
    r.check_max("isqrt.off_by_more_than_one", bad as f64, 0.0);
    Ok(())
}

/// Ratios are log-uniform in `[2^-16, 1]`; accumulators are uniform over the
/// 32-bit values whose rescaled result stays inside the 8-bit range.
fn sweep_requant(r: &mut ErrorReport, trials: usize, rng: &mut Rng) -> Result<()> {
    let sat = SatCounter::default();
    let (mut got, mut want) = (Vec::with_capacity(trials), Vec::with_capacity(trials));
    let mut worst = 0.0f64;
    for _ in 0..trials {
        let ratio = 2f64.powf(-16.0 * rng.next_f64());
        let s_out = 2f64.powf(-10.0 * rng.next_f64());
        let s_acc = ratio * s_out;
        let lim = ((127.0 / ratio).floor() as i64).min((1 << 31) - 1);
        let acc = rng.range_i64(-lim, lim);
        let d = to_dyadic(ratio, crate::quant::DEFAULT_SHIFT)?;
        let t = QTensor::new(vec![1], vec![acc], s_acc, 32)?;
        let y = requantize(&t, d, 8, s_out, Rounding::Nearest, &sat)?;
        let v = y.data()[0] as f64 * s_out;
        let exact = s_acc * acc as f64;
        worst = worst.max((v - exact).abs() / s_out);
        got.push(v / s_out);
        want.push(exact / s_out);
    }
    let m = compare_values(&got, &want, 1, None)?;
    r.add_site(SiteRecord::from_metrics("requantize", &m, sat.get()));
    r.check_max(
        "requantize.error_in_output_lsb",
        worst,
        tol::REQUANT_MAX_LSB,
    );
    Ok(())
}
