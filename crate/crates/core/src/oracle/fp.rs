//! 64-bit real reference implementations.

use serde::{Deserialize, Serialize};

use crate::engine::{unfold_patches, FpBlock, FpLinear, FpViT};
use crate::error::{Error, Result};
use crate::tensor::FpTensor;

/// Row-wise softmax over the last dimension, max-subtracted.
pub fn fp_softmax(x: &FpTensor) -> FpTensor {
    let mut out = Vec::with_capacity(x.len());
    for row in x.rows() {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let start = out.len();
        out.extend(row.iter().map(|v| (v - max).exp()));
        let sum: f64 = out[start..].iter().sum();
        out[start..].iter_mut().for_each(|v| *v /= sum);
    }
    FpTensor::new(x.dims().to_vec(), out).unwrap()
}

pub fn gelu_erf(x: f64) -> f64 {
    0.5 * x * (1.0 + statrs::function::erf::erf(x / std::f64::consts::SQRT_2))
}

/// `x · σ(1.702 x)`
pub fn gelu_sigmoid(x: f64) -> f64 {
    x / (1.0 + (-1.702 * x).exp())
}

pub fn fp_gelu_erf(x: &FpTensor) -> FpTensor {
    map(x, gelu_erf)
}

pub fn fp_gelu_sigmoid(x: &FpTensor) -> FpTensor {
    map(x, gelu_sigmoid)
}

fn map(x: &FpTensor, f: impl Fn(f64) -> f64) -> FpTensor {
    FpTensor::new(x.dims().to_vec(), x.data().iter().map(|&v| f(v)).collect()).unwrap()
}

/// LayerNorm over the last dimension with population variance and no
/// epsilon; a constant row normalizes to zero.
pub fn fp_layernorm(x: &FpTensor, gamma: &[f64], beta: &[f64]) -> Result<FpTensor> {
    let d = x.row_len();
    if gamma.len() != d || beta.len() != d {
        return Err(Error::Shape(format!(
            "row length {d} vs affine {}/{}",
            gamma.len(),
            beta.len()
        )));
    }
    let mut out = Vec::with_capacity(x.len());
    for row in x.rows() {
        let n = d as f64;
        let mean = row.iter().sum::<f64>() / n;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let inv = if var > 0.0 { 1.0 / var.sqrt() } else { 0.0 };
        out.extend(
            row.iter()
                .zip(gamma)
                .zip(beta)
                .map(|((v, g), b)| (v - mean) * inv * g + b),
        );
    }
    FpTensor::new(x.dims().to_vec(), out)
}

/// GELU variant used by the reference forward pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GeluForm {
    #[default]
    Erf,
    Sigmoid,
}

/// `a · bᵀ` for row-major `a: n×k`, `b: m×k`.
pub(crate) fn matmul_t(a: &[f64], b: &[f64], k: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(a.len() / k * (b.len() / k));
    for ar in a.chunks_exact(k) {
        for br in b.chunks_exact(k) {
            out.push(ar.iter().zip(br).map(|(x, y)| x * y).sum());
        }
    }
    out
}

fn linear(x: &FpTensor, l: &FpLinear) -> FpTensor {
    let rows = x.len() / x.row_len();
    let mut out = matmul_t(x.data(), l.w.data(), l.in_features());
    for row in out.chunks_exact_mut(l.out_features()) {
        row.iter_mut().zip(l.b.data()).for_each(|(v, b)| *v += b);
    }
    FpTensor::new(vec![rows, l.out_features()], out).unwrap()
}

fn add(a: &FpTensor, b: &FpTensor) -> FpTensor {
    FpTensor::new(
        a.dims().to_vec(),
        a.data().iter().zip(b.data()).map(|(x, y)| x + y).collect(),
    )
    .unwrap()
}

fn cols(x: &FpTensor, start: usize, count: usize) -> Vec<f64> {
    x.rows()
        .flat_map(|r| r[start..start + count].iter().copied())
        .collect()
}

fn transpose(data: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let mut out = vec![0.0; data.len()];
    for r in 0..rows {
        for c in 0..cols {
            out[c * rows + r] = data[r * cols + c];
        }
    }
    out
}

/// Observer of intermediate activations, keyed by site name.
pub type Trace<'a> = &'a mut dyn FnMut(&str, &FpTensor);

fn block_forward(
    x: &FpTensor,
    b: &FpBlock,
    i: usize,
    model: &FpViT,
    gelu: GeluForm,
    trace: Trace,
) -> FpTensor {
    let cfg = &model.config;
    let t = cfg.tokens();
    let dh = cfg.head_dim();
    let site = |s: &str| format!("block{i}.{s}");

    let ln1 = fp_layernorm(x, b.ln1.gamma.data(), b.ln1.beta.data()).unwrap();
    trace(&site("ln1"), &ln1);
    let q = linear(&ln1, &b.q);
    let k = linear(&ln1, &b.k);
    let v = linear(&ln1, &b.v);
    trace(&site("q"), &q);
    trace(&site("k"), &k);
    trace(&site("v"), &v);

    let scale = 1.0 / (dh as f64).sqrt();
    let mut all_scores = Vec::with_capacity(cfg.heads * t * t);
    let mut heads = Vec::with_capacity(cfg.heads);
    for h in 0..cfg.heads {
        let (qh, kh, vh) = (
            cols(&q, h * dh, dh),
            cols(&k, h * dh, dh),
            cols(&v, h * dh, dh),
        );
        let scores: Vec<f64> = matmul_t(&qh, &kh, dh)
            .into_iter()
            .map(|s| s * scale)
            .collect();
        all_scores.extend_from_slice(&scores);
        let probs = fp_softmax(&FpTensor::new(vec![t, t], scores).unwrap());
        let ctx = matmul_t(probs.data(), &transpose(&vh, t, dh), t);
        heads.push(ctx);
    }
    trace(
        &site("scores"),
        &FpTensor::new(vec![cfg.heads, t, t], all_scores).unwrap(),
    );
    let mut ctx = Vec::with_capacity(t * cfg.d_model);
    for r in 0..t {
        for hd in &heads {
            ctx.extend_from_slice(&hd[r * dh..(r + 1) * dh]);
        }
    }
    let ctx = FpTensor::new(vec![t, cfg.d_model], ctx).unwrap();
    trace(&site("ctx"), &ctx);
    let o = linear(&ctx, &b.o);
    trace(&site("attn_out"), &o);
    let x1 = add(&o, x);
    trace(&site("x1"), &x1);

    let ln2 = fp_layernorm(&x1, b.ln2.gamma.data(), b.ln2.beta.data()).unwrap();
    trace(&site("ln2"), &ln2);
    let h1 = linear(&ln2, &b.fc1);
    trace(&site("fc1"), &h1);
    let g = match gelu {
        GeluForm::Erf => fp_gelu_erf(&h1),
        GeluForm::Sigmoid => fp_gelu_sigmoid(&h1),
    };
    trace(&site("gelu"), &g);
    let h2 = linear(&g, &b.fc2);
    trace(&site("fc2"), &h2);
    let x2 = add(&h2, &x1);
    trace(&site("x2"), &x2);
    x2
}

/// Reference forward pass of one `(C, H, W)` image, reporting every
/// intermediate activation to `trace`. Returns the logits.
pub fn fp_forward_traced(
    model: &FpViT,
    img: &FpTensor,
    gelu: GeluForm,
    trace: Trace,
) -> Result<FpTensor> {
    let cfg = &model.config;
    if img.dims() != cfg.image_dims().as_slice() {
        return Err(Error::Shape(format!(
            "image {:?}, model expects {:?}",
            img.dims(),
            cfg.image_dims()
        )));
    }
    trace("input", img);
    let patches = FpTensor::new(
        vec![cfg.num_patches(), cfg.patch_features()],
        unfold_patches(img.data(), cfg),
    )?;
    let emb = linear(&patches, &model.patch);
    trace("embed", &emb);
    let mut tokens = model.cls.data().to_vec();
    tokens.extend_from_slice(emb.data());
    let mut x = add(
        &FpTensor::new(vec![cfg.tokens(), cfg.d_model], tokens)?,
        &model.pos,
    );
    trace("x0", &x);
    for (i, b) in model.blocks.iter().enumerate() {
        x = block_forward(&x, b, i, model, gelu, trace);
    }
    let ln = fp_layernorm(&x, model.ln_f.gamma.data(), model.ln_f.beta.data())?;
    trace("ln_f", &ln);
    let cls = FpTensor::new(vec![1, cfg.d_model], ln.data()[..cfg.d_model].to_vec())?;
    let logits = linear(&cls, &model.head);
    FpTensor::new(vec![cfg.num_classes], logits.into_data())
}

pub fn fp_forward(model: &FpViT, img: &FpTensor, gelu: GeluForm) -> Result<FpTensor> {
    fp_forward_traced(model, img, gelu, &mut |_, _| {})
}

/// Reference logits for a `(B, C, H, W)` batch as a `(B, classes)` tensor.
pub fn fp_forward_batch(model: &FpViT, imgs: &FpTensor, gelu: GeluForm) -> Result<FpTensor> {
    use rayon::prelude::*;
    let cfg = &model.config;
    let per = cfg.image_dims().iter().product::<usize>();
    if imgs.dims().len() != 4 || imgs.dims()[1..] != cfg.image_dims()[..] {
        return Err(Error::Shape(format!(
            "batch {:?}, model expects (B, {:?})",
            imgs.dims(),
            cfg.image_dims()
        )));
    }
    let rows = imgs
        .data()
        .par_chunks_exact(per)
        .map(|img| fp_forward(model, &FpTensor::new(cfg.image_dims(), img.to_vec())?, gelu))
        .collect::<Result<Vec<_>>>()?;
    let b = rows.len();
    FpTensor::new(
        vec![b, cfg.num_classes],
        rows.into_iter().flat_map(|r| r.into_data()).collect(),
    )
}
