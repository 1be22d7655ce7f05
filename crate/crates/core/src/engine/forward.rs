use rayon::prelude::*;

use crate::audit::IntegerOnly;
use crate::engine::{unfold_patches, QViTModel};
use crate::error::{Error, Result};
use crate::kernels::{
    i_layernorm, int_dense, int_dense_acc, int_matmul_with, residual_add_with, shift_gelu_raw,
    shiftmax_with,
};
use crate::quant::{qmax_clamp, quantize, rescale, DyadicScale, QuantParams};
use crate::tensor::{FpTensor, QTensor};

/// Observer of intermediate integer activations, keyed by site name.
pub type QTrace<'a> = &'a mut dyn FnMut(&str, &QTensor);

impl QViTModel {
    /// Scale the input image must be quantized at.
    pub fn input_scale(&self) -> f64 {
        self.scales["input"]
    }

    /// Scale of the 32-bit logits.
    pub fn logit_scale(&self) -> f64 {
        self.head.acc_scale
    }

    /// Quantizes a real image (or a `(B, C, H, W)` batch) onto the input scale.
    pub fn quantize_input(&self, img: &FpTensor) -> Result<QTensor> {
        let k = self.config.k_activation;
        let scale = self.input_scale();
        let m = scale * ((1u64 << k) - 1) as f64 / 2.0;
        quantize(img, &QuantParams { m, k, scale })
    }

    fn check_image(&self, img: &QTensor) -> Result<()> {
        let want = self.config.image_dims();
        if img.dims() != want.as_slice() {
            return Err(Error::Shape(format!(
                "image {:?}, expected {want:?}",
                img.dims()
            )));
        }
        if img.bits() != self.config.k_activation || img.scale() != self.input_scale() {
            return Err(Error::Argument(format!(
                "image must be {}-bit at scale {}, got {}-bit at {}",
                self.config.k_activation,
                self.input_scale(),
                img.bits(),
                img.scale()
            )));
        }
        Ok(())
    }

    /// Patch projection plus class token and positional table, `(tokens, d_model)`.
    pub fn patch_embed(&self, img: &QTensor) -> Result<QTensor> {
        self.patch_embed_traced(img, &mut |_, _| {})
    }

    fn patch_embed_traced(&self, img: &QTensor, trace: QTrace) -> Result<QTensor> {
        self.check_image(img)?;
        let cfg = &self.config;
        let patches = QTensor::new(
            vec![cfg.num_patches(), cfg.patch_features()],
            unfold_patches(img.data(), cfg),
            img.scale(),
            img.bits(),
        )?;
        let emb = int_dense(&patches, &self.patch)?;
        trace("embed", &emb);
        let plan = &self.embed_add;
        let d = cfg.d_model;
        let mut clamped = 0;
        let mut data = Vec::with_capacity(cfg.tokens() * d);
        let rows = std::iter::once((self.cls.data(), DyadicScale::ONE))
            .chain(emb.rows().map(|r| (r, plan.a)));
        for ((row, a), pos) in rows.zip(self.pos.rows()) {
            for (&e, &p) in row.iter().zip(pos) {
                let sum = rescale(e, a, plan.rounding) + rescale(p, plan.b, plan.rounding);
                data.push(qmax_clamp(sum, plan.k_out, &mut clamped));
            }
        }
        self.embed_sat.add(clamped);
        QTensor::new(vec![cfg.tokens(), d], data, plan.s_out, plan.k_out)
    }

    /// Multi-head self-attention on an already normalized input.
    pub fn msa_forward(&self, block: usize, x: &QTensor) -> Result<QTensor> {
        self.msa_traced(block, x, &mut |_, _| {})
    }

    fn msa_traced(&self, block: usize, x: &QTensor, trace: QTrace) -> Result<QTensor> {
        let b = self.block(block)?;
        let cfg = &self.settings.intmath;
        let site = |s: &str| format!("block{block}.{s}");
        let q = int_dense(x, &b.q)?;
        let k = int_dense(x, &b.k)?;
        let v = int_dense(x, &b.v)?;
        trace(&site("q"), &q);
        trace(&site("k"), &k);
        trace(&site("v"), &v);
        let dh = self.config.head_dim();
        let mut scores_all = Vec::new();
        let mut heads = Vec::with_capacity(self.config.heads);
        for h in 0..self.config.heads {
            let qh = q.slice_cols(h * dh, dh)?;
            let kh = k.slice_cols(h * dh, dh)?;
            let vt = v.slice_cols(h * dh, dh)?.transpose()?;
            let scores = int_matmul_with(&qh, &kh, &b.scores, &b.sat.scores)?;
            let probs = shiftmax_with(&scores, &b.softmax, cfg)?;
            heads.push(int_matmul_with(&probs, &vt, &b.ctx, &b.sat.ctx)?);
            scores_all.push(scores);
        }
        let s0 = &scores_all[0];
        let t = s0.matrix_dims().0;
        let (s_scale, s_bits) = (s0.scale(), s0.bits());
        let data = scores_all
            .into_iter()
            .flat_map(QTensor::into_data)
            .collect();
        trace(
            &site("scores"),
            &QTensor::new(vec![self.config.heads, t, t], data, s_scale, s_bits)?,
        );
        let ctx = QTensor::concat_cols(&heads)?;
        trace(&site("ctx"), &ctx);
        int_dense(&ctx, &b.o)
    }

    /// Two-layer perceptron with the shift GELU on an already normalized input.
    pub fn mlp_forward(&self, block: usize, x: &QTensor) -> Result<QTensor> {
        self.mlp_traced(block, x, &mut |_, _| {})
    }

    fn mlp_traced(&self, block: usize, x: &QTensor, trace: QTrace) -> Result<QTensor> {
        let b = self.block(block)?;
        let site = |s: &str| format!("block{block}.{s}");
        let h = int_dense(x, &b.fc1)?;
        trace(&site("fc1"), &h);
        let g = shift_gelu_raw(&h, &b.gelu, &self.settings.intmath)?;
        let g = b.gelu_out.apply(&g, &b.sat.gelu)?;
        trace(&site("gelu"), &g);
        int_dense(&g, &b.fc2)
    }

    pub fn block_forward(&self, block: usize, x: &QTensor) -> Result<QTensor> {
        self.block_traced(block, x, &mut |_, _| {})
    }

    fn block_traced(&self, block: usize, x: &QTensor, trace: QTrace) -> Result<QTensor> {
        let b = self.block(block)?;
        let cfg = &self.settings.intmath;
        let site = |s: &str| format!("block{block}.{s}");
        let ln1 = i_layernorm(x, &b.ln1, cfg)?;
        trace(&site("ln1"), &ln1);
        let a = self.msa_traced(block, &ln1, trace)?;
        trace(&site("attn_out"), &a);
        let x1 = residual_add_with(&a, x, &b.res1, &b.sat.res1)?;
        trace(&site("x1"), &x1);
        let ln2 = i_layernorm(&x1, &b.ln2, cfg)?;
        trace(&site("ln2"), &ln2);
        let m = self.mlp_traced(block, &ln2, trace)?;
        trace(&site("fc2"), &m);
        let x2 = residual_add_with(&m, &x1, &b.res2, &b.sat.res2)?;
        trace(&site("x2"), &x2);
        Ok(x2)
    }

    fn block(&self, i: usize) -> Result<&crate::engine::QBlock> {
        self.blocks.get(i).ok_or_else(|| {
            Error::Argument(format!(
                "block {i} out of range for depth {}",
                self.blocks.len()
            ))
        })
    }

    /// Integer logits `[num_classes]`, 32-bit at [`Self::logit_scale`].
    pub fn forward(&self, img: &QTensor) -> Result<QTensor> {
        self.forward_traced(img, &mut |_, _| {})
    }

    /// [`Self::forward`] reporting every intermediate activation to `trace`,
    /// under the same site names as the floating-point reference.
    pub fn forward_traced(&self, img: &QTensor, trace: QTrace) -> Result<QTensor> {
        trace("input", img);
        let mut x = self.patch_embed_traced(img, trace)?;
        trace("x0", &x);
        for i in 0..self.blocks.len() {
            x = self.block_traced(i, &x, trace)?;
        }
        let ln = i_layernorm(&x, &self.ln_f, &self.settings.intmath)?;
        trace("ln_f", &ln);
        int_dense_acc(&ln.slice_rows(0, 1)?, &self.head)?.reshape(vec![self.config.num_classes])
    }

    /// [`Self::forward`] under the integer-only audit.
    pub fn forward_audited(&self, img: &QTensor) -> Result<QTensor> {
        let guard = IntegerOnly::begin();
        let out = self.forward(img);
        guard.finish()?;
        out
    }

    /// Batched forward over `(B, C, H, W)`, returning `(B, num_classes)` logits.
    pub fn forward_batch(&self, imgs: &QTensor, audited: bool) -> Result<QTensor> {
        let per = self.config.image_dims();
        if imgs.dims().len() != 4 || imgs.dims()[1..] != per[..] {
            return Err(Error::Shape(format!(
                "batch {:?}, expected (B, {per:?})",
                imgs.dims()
            )));
        }
        let n: usize = per.iter().product();
        let rows = imgs
            .data()
            .par_chunks(n.max(1))
            .map(|chunk| {
                let img = QTensor::new(per.clone(), chunk.to_vec(), imgs.scale(), imgs.bits())?;
                let out = if audited {
                    self.forward_audited(&img)
                } else {
                    self.forward(&img)
                };
                out.map(QTensor::into_data)
            })
            .collect::<Result<Vec<_>>>()?;
        let b = imgs.dims()[0];
        QTensor::new(
            vec![b, self.config.num_classes],
            rows.concat(),
            self.logit_scale(),
            32,
        )
    }
}
