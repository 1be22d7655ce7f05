//! Acceptance suite: one line per criterion, non-zero exit if any fails.

use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use intvit::engine::{build_qmodel, Calibration, FpViT, KernelSettings, ModelConfig};
use intvit::intmath::{int_div, int_isqrt, IntMathConfig};
use intvit::kernels::{shift_gelu, shiftmax};
use intvit::oracle::{
    kernel_sweep, model_report, shiftmax_row_invariants, ErrorReport, GeluForm, KernelId, SweepSpec,
};
use intvit::rng::{gen_gaussian, Rng};
use intvit::QTensor;

const CFG: IntMathConfig = IntMathConfig {
    n: 15,
    m: 47,
    iters: 10,
};
const SOFTMAX_SCALES: [f64; 4] = [1.0 / 8.0, 1.0 / 16.0, 1.0 / 64.0, 1.0 / 128.0];
const GELU_SCALES: [f64; 3] = [1.0 / 8.0, 1.0 / 16.0, 1.0 / 64.0];
const SHIFTMAX_ROWS: usize = 100_000;
const ROW_LEN: usize = 197;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

fn failing_checks(r: &ErrorReport) -> String {
    let bad: Vec<_> = r
        .tolerances
        .iter()
        .filter(|t| !t.pass)
        .map(|t| format!("{}={:.4e}", t.name, t.value))
        .collect();
    bad.join(", ")
}

fn check_value(r: &ErrorReport, name: &str) -> f64 {
    r.tolerances
        .iter()
        .find(|t| t.name == name)
        .map_or(f64::NAN, |t| t.value)
}

// Straight-line scalar transcriptions of the two algorithms, kept free of the
// library's helpers so the kernels are checked against an independent reading.

fn floor_div(a: i64, b: i64) -> i64 {
    let q = a / b;
    if a % b != 0 && ((a < 0) != (b < 0)) {
        q - 1
    } else {
        q
    }
}

fn scalar_shift_exp(i: i64, i0: i64, n: i64) -> i64 {
    let i_p = i + (i >> 1) - (i >> 4);
    let q = floor_div(i_p, -i0);
    let r = -(i_p - q * (-i0));
    let i_b = ((-r) >> 1) + i0;
    if q <= n {
        i_b << (n - q)
    } else {
        i_b >> (q - n)
    }
}

fn scalar_int_div(i1: i64, i2: i64, k_out: u32, m: u32) -> i64 {
    let f = (1i128 << m) / i2 as i128;
    let v = (f * i1 as i128) >> (m - (k_out - 1));
    let top = (1i128 << (k_out - 1)) - 1;
    if v > top {
        top as i64
    } else {
        v as i64
    }
}

fn scalar_shiftmax(row: &[i64], scale: f64, k_out: u32) -> Vec<i64> {
    let i0 = (1.0 / scale).round() as i64;
    let mut max = row[0];
    for &v in row {
        if v > max {
            max = v;
        }
    }
    let mut exps = Vec::with_capacity(row.len());
    let mut sum = 0;
    for &v in row {
        let e = scalar_shift_exp(v - max, i0, CFG.n as i64);
        exps.push(e);
        sum += e;
    }
    let mut out = Vec::with_capacity(row.len());
    for e in exps {
        out.push(scalar_int_div(e, sum, k_out, CFG.m));
    }
    out
}

fn scalar_shift_gelu(xs: &[i64], scale: f64, k_out: u32) -> Vec<i64> {
    let i0 = (1.0 / scale).round() as i64;
    let mut max_p = 0;
    for &i in xs {
        let p = i + (i >> 1) + (i >> 3) + (i >> 4);
        if p > max_p {
            max_p = p;
        }
    }
    let tail = scalar_shift_exp(-max_p, i0, CFG.n as i64);
    let mut out = Vec::with_capacity(xs.len());
    for &i in xs {
        let p = i + (i >> 1) + (i >> 3) + (i >> 4);
        let num = scalar_shift_exp(p - max_p, i0, CFG.n as i64);
        let sigma = if num + tail == 0 {
            0
        } else {
            scalar_int_div(num, num + tail, k_out, CFG.m)
        };
        out.push(i * sigma);
    }
    out
}

/// Near-tie and extreme rows that random sampling rarely produces.
fn adversarial_rows() -> Vec<Vec<i64>> {
    let mut rows = Vec::new();
    for d in [1usize, 2, 3, 16, ROW_LEN] {
        for v in [-128i64, -1, 0, 1, 127] {
            rows.push(vec![v; d]);
        }
        if d >= 2 {
            for base in [-128i64, -5, 0, 100] {
                let mut r = vec![base; d];
                r[d / 2] = base + 1;
                rows.push(r);
                rows.push((0..d).map(|j| base + (j % 2) as i64).collect());
                rows.push((0..d).map(|j| base + (j % 3) as i64).collect());
            }
            let mut r = vec![-128i64; d];
            r[0] = 127;
            r[d - 1] = 127;
            rows.push(r);
            let mut r = vec![127i64; d];
            r[d - 1] = -128;
            rows.push(r);
            rows.push((0..d).map(|j| 127 - (j as i64 % 256)).collect());
        }
    }
    rows
}

fn uniform_row(rng: &mut Rng) -> Vec<i64> {
    (0..ROW_LEN).map(|_| rng.range_i64(-128, 127)).collect()
}

fn criterion_1() -> (Verdict, Option<ErrorReport>) {
    let start = Instant::now();
    let spec = SweepSpec::default_for(KernelId::Shiftmax);
    let r =
        kernel_sweep(KernelId::Shiftmax, &spec, SHIFTMAX_ROWS, 1, &CFG).expect("shiftmax sweep");
    let elapsed = start.elapsed();
    let max = check_value(&r, "shiftmax.max_abs_error");
    let mean = check_value(&r, "shiftmax.mean_abs_error");
    let fidelity = r
        .tolerances
        .iter()
        .filter(|t| t.name.ends_with("abs_error"))
        .all(|t| t.pass);
    let pass = fidelity && elapsed < Duration::from_secs(60);
    let v = verdict(
        pass,
        format!(
            "{SHIFTMAX_ROWS} rows of {ROW_LEN}: max_abs={max:.5} mean_abs={mean:.5} in {:.1}s",
            elapsed.as_secs_f64()
        ),
    );
    (v, Some(r))
}

fn criterion_2(random: Option<&ErrorReport>) -> Verdict {
    let mut random_bad = Vec::new();
    if let Some(r) = random {
        for name in ["normalization", "order", "shift_invariance"] {
            let v = check_value(r, &format!("shiftmax.{name}_violations"));
            if v != 0.0 {
                random_bad.push(format!("{name}={v}"));
            }
        }
    } else {
        random_bad.push("random sweep missing".into());
    }
    let rows = adversarial_rows();
    let (mut norm, mut order, mut shift, mut total) = (0, 0, 0, 0);
    for row in &rows {
        for &s in &SOFTMAX_SCALES {
            total += 1;
            let x = QTensor::new(vec![1, row.len()], row.clone(), s, 8).unwrap();
            let y = shiftmax(&x, 8, &CFG).unwrap();
            let (n_ok, o_ok) = shiftmax_row_invariants(row, y.data(), y.scale());
            norm += usize::from(!n_ok);
            order += usize::from(!o_ok);
            for off in [-1000i64, -1, 1, 999] {
                let shifted = QTensor::new(
                    vec![1, row.len()],
                    row.iter().map(|v| v + off).collect(),
                    s,
                    16,
                )
                .unwrap();
                if shiftmax(&shifted, 8, &CFG).unwrap().data() != y.data() {
                    shift += 1;
                    break;
                }
            }
        }
    }
    let pass = random_bad.is_empty() && norm + order + shift == 0;
    verdict(
        pass,
        format!(
            "{SHIFTMAX_ROWS} random rows clean={} ; {total} adversarial rows: normalization={norm} order={order} shift={shift} {}",
            random_bad.is_empty(),
            random_bad.join(" ")
        ),
    )
}

fn criterion_3() -> Verdict {
    let spec = SweepSpec::default_for(KernelId::ShiftGelu);
    let r = kernel_sweep(KernelId::ShiftGelu, &spec, 0, 0, &CFG).expect("gelu sweep");
    let kernel = r.sites.iter().find(|s| s.site == "shift_gelu").unwrap();
    let gap = r
        .sites
        .iter()
        .find(|s| s.site == "gelu_sigmoid_vs_erf")
        .unwrap();
    verdict(
        r.pass,
        format!(
            "{} grid points: max_abs={:.4} (sigmoid form vs erf GELU gap {:.4}, not counted) {}",
            kernel.samples,
            kernel.max_abs_error,
            gap.max_abs_error,
            failing_checks(&r)
        ),
    )
}

fn criterion_4() -> Verdict {
    let mut bad = 0u64;
    let mut worst = 0i64;
    let mut check = |v: i64| {
        let d = (int_isqrt(v, 10) - (v as u64).isqrt() as i64).abs();
        worst = worst.max(d);
        bad += u64::from(d > 1);
    };
    for v in 0..=(1i64 << 20) {
        check(v);
    }
    let mut rng = Rng::new(4);
    for _ in 0..1_000_000 {
        check(rng.range_i64(0, (1 << 31) - 1));
    }
    verdict(
        bad == 0,
        format!(
            "exhaustive [0, 2^20] + 10^6 random below 2^31: failures={bad} worst_offset={worst}"
        ),
    )
}

fn criterion_5() -> Verdict {
    let mut rng = Rng::new(5);
    let (mut mismatch, mut bound) = (0u64, 0u64);
    for t in 0..1_000_000u64 {
        let k = [8u8, 16, 4, 12][(t % 4) as usize];
        let i2 = rng.range_i64(1, (1 << 31) - 1);
        let i1 = rng.range_i64(0, i2);
        let (q, s_out) = int_div(i1, i2, k, &CFG).unwrap();
        // 128-bit oracle: floor(2^47 / I2) · I1 >> (47 - (k - 1)), clamped
        let wide = (((1u128 << 47) / i2 as u128) * i1 as u128) >> (47 - (k as u32 - 1));
        let wide = wide.min((1u128 << (k - 1)) - 1) as i64;
        mismatch += u64::from(wide != q);
        // the bound as stated holds for 8-bit outputs; wider outputs scale it by 2^(k-8)
        let slack = i2 as f64 / 2f64.powi(40) * 2f64.powi(k as i32 - 8);
        let err = (q as f64 * s_out - i1 as f64 / i2 as f64).abs();
        bound += u64::from(err > s_out * (1.0 + slack));
    }
    verdict(mismatch + bound == 0, format!("10^6 pairs, k in {{4, 8, 12, 16}}: oracle mismatches={mismatch} bound violations={bound}"))
}

fn criterion_6() -> Verdict {
    let r = kernel_sweep(
        KernelId::Requantize,
        &SweepSpec::default_for(KernelId::Requantize),
        100_000,
        6,
        &CFG,
    )
    .expect("requant sweep");
    let worst = check_value(&r, "requantize.error_in_output_lsb");
    verdict(
        r.pass,
        format!(
            "10^5 samples, shift 30: worst error {worst:.4} output LSB {}",
            failing_checks(&r)
        ),
    )
}

fn criterion_7() -> Verdict {
    let (mut rows_checked, mut bad) = (0usize, 0usize);
    let mut rng = Rng::new(1);
    let mut rows: Vec<Vec<i64>> = (0..SHIFTMAX_ROWS / 10)
        .map(|_| uniform_row(&mut rng))
        .collect();
    rows.extend(adversarial_rows());
    for row in &rows {
        for &s in &SOFTMAX_SCALES {
            let x = QTensor::new(vec![1, row.len()], row.clone(), s, 8).unwrap();
            for k in [8u8, 16] {
                rows_checked += 1;
                if shiftmax(&x, k, &CFG).unwrap().data()
                    != scalar_shiftmax(row, s, k as u32).as_slice()
                {
                    bad += 1;
                }
            }
        }
    }
    let mut gelu_inputs: Vec<Vec<i64>> = (-128..=127).map(|i| vec![i]).collect();
    gelu_inputs.extend((0..2000).map(|_| {
        (0..64)
            .map(|_| rng.range_i64(-128, 127))
            .collect::<Vec<_>>()
    }));
    gelu_inputs
        .extend((0..200).map(|_| (0..64).map(|_| rng.range_i64(-128, -1)).collect::<Vec<_>>()));
    gelu_inputs.extend(adversarial_rows());
    let mut gelu_checked = 0usize;
    for xs in &gelu_inputs {
        for &s in GELU_SCALES.iter().chain([1.0 / 32.0, 1.0 / 128.0].iter()) {
            let x = QTensor::new(vec![xs.len()], xs.clone(), s, 8).unwrap();
            gelu_checked += 1;
            if shift_gelu(&x, 8, &CFG).unwrap().data() != scalar_shift_gelu(xs, s, 8).as_slice() {
                bad += 1;
            }
        }
    }
    verdict(
        bad == 0,
        format!(
            "{rows_checked} shiftmax rows + {gelu_checked} shift_gelu tensors: mismatches={bad}"
        ),
    )
}

fn criterion_8() -> Verdict {
    let start = Instant::now();
    let cfg = ModelConfig::default();
    let fp = FpViT::random(&cfg, 0).unwrap();
    let mut rng = Rng::new(1);
    let dims = |b: usize| [vec![b], cfg.image_dims()].concat();
    let calib_imgs = gen_gaussian(&mut rng, &dims(64), 0.0, 1.0).unwrap();
    let calib = Calibration::collect(&fp, &calib_imgs, GeluForm::Erf).unwrap();
    let q = build_qmodel(&fp, &calib, &KernelSettings::default()).unwrap();
    let test_imgs = gen_gaussian(&mut rng, &dims(1000), 0.0, 1.0).unwrap();
    let r = model_report(
        &fp,
        &q,
        &test_imgs,
        GeluForm::Erf,
        0,
        0,
        serde_json::Value::Null,
    )
    .unwrap();
    let elapsed = start.elapsed();
    let cos = check_value(&r, "logits_mean_cosine");
    let min_cos = check_value(&r, "logits_min_cosine");
    let agree = check_value(&r, "logits_argmax_agreement");
    verdict(
        r.pass && elapsed < Duration::from_secs(300),
        format!(
            "desk model, 1000 images: cosine mean={cos:.4} min={min_cos:.4} argmax agreement={agree:.3} in {:.1}s {}",
            elapsed.as_secs_f64(),
            failing_checks(&r)
        ),
    )
}

fn run_cli(dir: &Path, args: &[&str]) -> (i32, Vec<u8>) {
    let out = Command::new(env!("CARGO_BIN_EXE_intvit"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("spawn intvit");
    (out.status.code().unwrap_or(-1), out.stdout)
}

fn snapshot(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((
                    p.strip_prefix(dir).unwrap().display().to_string(),
                    fs::read(&p).unwrap(),
                ));
            }
        }
    }
    out.sort();
    out
}

fn criterion_9() -> Verdict {
    let script: Vec<Vec<&str>> = vec![
        vec!["gen-model", "--out", "fp", "--seed", "7"],
        vec![
            "gen-inputs",
            "--model-dir",
            "fp",
            "--count",
            "8",
            "--out",
            "x.itns",
            "--seed",
            "8",
        ],
        vec![
            "calibrate",
            "--model",
            "fp",
            "--count",
            "16",
            "--seed",
            "9",
            "--out",
            "calib.json",
        ],
        vec![
            "quantize",
            "--model",
            "fp",
            "--calib",
            "calib.json",
            "--out",
            "q",
        ],
        vec![
            "infer",
            "--model",
            "q",
            "--input",
            "x.itns",
            "--out",
            "logits_int.itns",
        ],
        vec![
            "infer-fp",
            "--model",
            "fp",
            "--input",
            "x.itns",
            "--out",
            "logits_fp.itns",
        ],
        vec![
            "compare",
            "--fp-model",
            "fp",
            "--model",
            "q",
            "--count",
            "32",
            "--seed",
            "10",
            "--report",
            "r.json",
        ],
        vec![
            "kernel-test",
            "--kernel",
            "shiftmax",
            "--trials",
            "200",
            "--seed",
            "11",
            "--report",
            "k1.json",
        ],
        vec![
            "kernel-test",
            "--kernel",
            "shift_gelu",
            "--seed",
            "11",
            "--report",
            "k2.json",
        ],
        vec![
            "kernel-test",
            "--kernel",
            "i_layernorm",
            "--trials",
            "200",
            "--seed",
            "11",
            "--report",
            "k3.json",
        ],
        vec![
            "kernel-test",
            "--kernel",
            "int_div",
            "--trials",
            "2000",
            "--seed",
            "11",
            "--report",
            "k4.json",
        ],
        vec![
            "kernel-test",
            "--kernel",
            "isqrt",
            "--trials",
            "2000",
            "--seed",
            "11",
            "--report",
            "k5.json",
        ],
        vec![
            "kernel-test",
            "--kernel",
            "requantize",
            "--trials",
            "2000",
            "--seed",
            "11",
            "--report",
            "k6.json",
        ],
    ];
    let runs: Vec<_> = (0..2)
        .map(|_| {
            let dir = tempfile::tempdir().unwrap();
            let outputs: Vec<_> = script
                .iter()
                .map(|args| run_cli(dir.path(), args))
                .collect();
            (outputs, snapshot(dir.path()))
        })
        .collect();
    let mut problems = Vec::new();
    for (args, (a, b)) in script.iter().zip(runs[0].0.iter().zip(&runs[1].0)) {
        if a.0 != 0 {
            problems.push(format!("`{}` exited {}", args[0], a.0));
        }
        if a != b {
            problems.push(format!("`{}` stdout/status differs", args[0]));
        }
    }
    let (fa, fb) = (&runs[0].1, &runs[1].1);
    if fa.len() != fb.len() {
        problems.push(format!("{} vs {} output files", fa.len(), fb.len()));
    }
    for ((na, ba), (nb, bb)) in fa.iter().zip(fb) {
        if na != nb || ba != bb {
            problems.push(format!("{na} differs"));
        }
    }
    verdict(
        problems.is_empty(),
        format!(
            "{} commands, {} files byte-compared {}",
            script.len(),
            fa.len(),
            problems.join("; ")
        ),
    )
}

fn main() {
    // honour `cargo test -- <filter>` loosely: run everything unless asked to list
    if std::env::args().any(|a| a == "--list") {
        println!("acceptance: test");
        return;
    }
    let mut results = Vec::new();
    let (c1, sweep) = criterion_1();
    results.push((1, "Shiftmax fidelity", c1));
    results.push((2, "Shiftmax invariants", criterion_2(sweep.as_ref())));
    results.push((3, "ShiftGELU fidelity", criterion_3()));
    results.push((4, "integer square root", criterion_4()));
    results.push((5, "IntDiv bit-exactness", criterion_5()));
    results.push((6, "dyadic requantization", criterion_6()));
    results.push((7, "scalar transcription equivalence", criterion_7()));
    results.push((8, "end-to-end fidelity", criterion_8()));
    results.push((9, "CLI determinism", criterion_9()));
    let mut failed = 0;
    for (n, name, v) in &results {
        println!(
            "criterion {n} {name:<34} {}  {}",
            if v.pass { "PASS" } else { "FAIL" },
            v.detail.trim_end()
        );
        failed += usize::from(!v.pass);
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        results.len() - failed
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
