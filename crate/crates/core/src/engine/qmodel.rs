use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::engine::{Calibration, FpLayerNorm, FpLinear, FpViT, ModelConfig};
use crate::error::{Error, Result};
use crate::intmath::{unit_integer, IntMathConfig};
use crate::kernels::{
    DenseWeights, GeluPlan, LayerNormParams, Requant, ResidualPlan, ShiftmaxPlan,
};
use crate::quant::{calibrate_minmax, quantize, QuantParams, Rounding, SatCounter};
use crate::tensor::QTensor;

/// Bit-width of every weight matrix and of the LayerNorm γ.
pub const WEIGHT_BITS: u8 = 8;

/// Integer-math knobs fixed into a model at build time.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelSettings {
    pub intmath: IntMathConfig,
    pub rounding: Rounding,
}

/// One precomputed integer constant set, as stored in a model manifest.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Plan {
    Requant(Requant),
    Residual(ResidualPlan),
    Shiftmax(ShiftmaxPlan),
    Gelu(GeluPlan),
}

#[derive(Debug, Default)]
pub struct BlockCounters {
    pub scores: SatCounter,
    pub ctx: SatCounter,
    pub gelu: SatCounter,
    pub res1: SatCounter,
    pub res2: SatCounter,
}

#[derive(Debug)]
pub struct QBlock {
    pub ln1: LayerNormParams,
    pub q: DenseWeights,
    pub k: DenseWeights,
    pub v: DenseWeights,
    /// `Q·Kᵀ` accumulator onto the score scale, `1/√d` folded in.
    pub scores: Requant,
    pub softmax: ShiftmaxPlan,
    /// `P·V` accumulator onto the context scale.
    pub ctx: Requant,
    pub o: DenseWeights,
    pub res1: ResidualPlan,
    pub ln2: LayerNormParams,
    pub fc1: DenseWeights,
    pub gelu: GeluPlan,
    pub gelu_out: Requant,
    pub fc2: DenseWeights,
    pub res2: ResidualPlan,
    pub sat: BlockCounters,
}

/// Integer-only ViT with every scale folded into dyadic constants.
#[derive(Debug)]
pub struct QViTModel {
    pub config: ModelConfig,
    pub settings: KernelSettings,
    /// Activation scale per site.
    pub scales: BTreeMap<String, f64>,
    pub patch: DenseWeights,
    /// Class token and positional table, both at the `x0` scale.
    pub cls: QTensor,
    pub pos: QTensor,
    /// Patch embeddings onto `x0`; the class row needs no alignment.
    pub embed_add: ResidualPlan,
    pub blocks: Vec<QBlock>,
    pub ln_f: LayerNormParams,
    /// Left at the accumulator scale; logits stay 32-bit.
    pub head: DenseWeights,
    pub embed_sat: SatCounter,
}

fn scale_of(scales: &BTreeMap<String, f64>, site: &str) -> Result<f64> {
    scales
        .get(site)
        .copied()
        .ok_or_else(|| Error::Build(format!("no scale for site {site}")))
}

/// Largest `I_0` for which a row of `tokens` exponentials sums below 2^31.
fn softmax_i0_limit(tokens: usize, n: u32) -> i64 {
    (((1i64 << 31) - 1) >> n) / tokens as i64
}

fn quant_dense(
    l: &FpLinear,
    s_in: f64,
    s_out: f64,
    k_out: u8,
    rounding: Rounding,
) -> Result<DenseWeights> {
    let w = quantize(&l.w, &calibrate_minmax(&l.w, WEIGHT_BITS)?)?;
    let acc = s_in * w.scale();
    let limit = ((1i64 << 31) - 1) as f64;
    let bias =
        l.b.data()
            .iter()
            .map(|&b| (b / acc).round().clamp(-limit, limit) as i64)
            .collect();
    DenseWeights::new(w, bias, s_in, s_out, k_out, rounding)
}

fn quant_ln(
    ln: &FpLayerNorm,
    p: u32,
    s_out: f64,
    k_out: u8,
    rounding: Rounding,
) -> Result<LayerNormParams> {
    LayerNormParams::from_real(&ln.gamma, &ln.beta, WEIGHT_BITS, p, s_out, k_out, rounding)
}

/// Quantizes `fp` using activation ranges from `calib`.
pub fn build_qmodel(
    fp: &FpViT,
    calib: &Calibration,
    settings: &KernelSettings,
) -> Result<QViTModel> {
    let cfg = &fp.config;
    cfg.validate()?;
    settings.intmath.validate()?;
    let ka = cfg.k_activation;
    let rounding = settings.rounding;

    let mut scales = BTreeMap::new();
    for site in crate::engine::activation_sites(cfg) {
        let k = if site.ends_with(".scores") {
            cfg.k_attention
        } else {
            ka
        };
        let mut s = QuantParams::new(calib.clip(&site)?, k)?.scale;
        if site.ends_with(".scores") {
            let limit = softmax_i0_limit(cfg.tokens(), settings.intmath.n);
            if unit_integer(s).map_or(true, |i0| i0 > limit) {
                s = 1.0 / limit as f64;
            }
        }
        scales.insert(site, s);
    }
    let s = |site: &str| scale_of(&scales, site);

    let patch = quant_dense(&fp.patch, s("input")?, s("embed")?, ka, rounding)?;
    let x0 = QuantParams::new(calib.clip("x0")?, ka)?;
    let cls = quantize(&fp.cls, &x0)?;
    let pos = quantize(&fp.pos, &x0)?;
    let embed_add = ResidualPlan::new(s("embed")?, x0.scale, x0.scale, ka, rounding)?;

    let p = cfg.ln_precision;
    let inv_sqrt_d = 1.0 / (cfg.head_dim() as f64).sqrt();
    let mut blocks = Vec::with_capacity(cfg.depth);
    let mut s_x = s("x0")?;
    for (i, b) in fp.blocks.iter().enumerate() {
        let site = |name: &str| s(&format!("block{i}.{name}"));
        let ln1 = quant_ln(&b.ln1, p, site("ln1")?, ka, rounding)?;
        let q = quant_dense(&b.q, site("ln1")?, site("q")?, ka, rounding)?;
        let k = quant_dense(&b.k, site("ln1")?, site("k")?, ka, rounding)?;
        let v = quant_dense(&b.v, site("ln1")?, site("v")?, ka, rounding)?;
        let scores = Requant::from_scales(
            site("q")? * site("k")? * inv_sqrt_d,
            site("scores")?,
            cfg.k_attention,
            rounding,
        )?;
        let softmax = ShiftmaxPlan::new(site("scores")?, cfg.k_softmax)?;
        let ctx = Requant::from_scales(softmax.s_out * site("v")?, site("ctx")?, ka, rounding)?;
        let o = quant_dense(&b.o, site("ctx")?, site("attn_out")?, ka, rounding)?;
        let res1 = ResidualPlan::new(site("attn_out")?, s_x, site("x1")?, ka, rounding)?;
        let ln2 = quant_ln(&b.ln2, p, site("ln2")?, ka, rounding)?;
        let fc1 = quant_dense(&b.fc1, site("ln2")?, site("fc1")?, ka, rounding)?;
        let gelu = GeluPlan::new(site("fc1")?, cfg.k_gelu)?;
        if gelu.i0 >= 1 << (30 - settings.intmath.n) {
            return Err(Error::Build(format!(
                "block{i}.fc1 scale too fine for the sigmoid sums"
            )));
        }
        let gelu_out = Requant::from_scales(gelu.s_out, site("gelu")?, ka, rounding)?;
        let fc2 = quant_dense(&b.fc2, site("gelu")?, site("fc2")?, ka, rounding)?;
        let res2 = ResidualPlan::new(site("fc2")?, site("x1")?, site("x2")?, ka, rounding)?;
        s_x = site("x2")?;
        blocks.push(QBlock {
            ln1,
            q,
            k,
            v,
            scores,
            softmax,
            ctx,
            o,
            res1,
            ln2,
            fc1,
            gelu,
            gelu_out,
            fc2,
            res2,
            sat: BlockCounters::default(),
        });
    }
    let ln_f = quant_ln(&fp.ln_f, p, s("ln_f")?, ka, rounding)?;
    let head = {
        let w = quantize(&fp.head.w, &calibrate_minmax(&fp.head.w, WEIGHT_BITS)?)?;
        let acc = s("ln_f")? * w.scale();
        quant_dense(&fp.head, s("ln_f")?, acc, 32, rounding)?
    };
    let model = QViTModel {
        config: cfg.clone(),
        settings: *settings,
        scales,
        patch,
        cls,
        pos,
        embed_add,
        blocks,
        ln_f,
        head,
        embed_sat: SatCounter::default(),
    };
    model.verify_scales()?;
    Ok(model)
}

fn named_dense(out: &mut BTreeMap<String, QTensor>, role: &str, d: &DenseWeights) -> Result<()> {
    out.insert(format!("{role}.weight"), d.w.clone());
    out.insert(
        format!("{role}.bias"),
        QTensor::new(vec![d.bias.len()], d.bias.clone(), d.acc_scale, 32)?,
    );
    Ok(())
}

fn named_ln(out: &mut BTreeMap<String, QTensor>, role: &str, ln: &LayerNormParams) -> Result<()> {
    out.insert(format!("{role}.gamma"), ln.gamma.clone());
    out.insert(
        format!("{role}.beta"),
        QTensor::new(vec![ln.beta.len()], ln.beta.clone(), ln.acc_scale(), 32)?,
    );
    Ok(())
}

struct Parts {
    tensors: BTreeMap<String, QTensor>,
    plans: BTreeMap<String, Plan>,
}

impl Parts {
    fn tensor(&mut self, role: &str) -> Result<QTensor> {
        self.tensors
            .remove(role)
            .ok_or_else(|| Error::Build(format!("missing tensor {role}")))
    }

    fn plan(&mut self, role: &str) -> Result<Plan> {
        self.plans
            .remove(role)
            .ok_or_else(|| Error::Build(format!("missing plan {role}")))
    }

    fn requant(&mut self, role: &str) -> Result<Requant> {
        match self.plan(role)? {
            Plan::Requant(r) => Ok(r),
            other => Err(Error::Build(format!(
                "plan {role} is {other:?}, expected a requantizer"
            ))),
        }
    }

    fn residual(&mut self, role: &str) -> Result<ResidualPlan> {
        match self.plan(role)? {
            Plan::Residual(r) => Ok(r),
            other => Err(Error::Build(format!(
                "plan {role} is {other:?}, expected a residual plan"
            ))),
        }
    }

    fn dense(&mut self, role: &str) -> Result<DenseWeights> {
        let w = self.tensor(&format!("{role}.weight"))?;
        let bias = self.tensor(&format!("{role}.bias"))?;
        let requant = self.requant(role)?;
        if w.dims().len() != 2 || bias.dims() != [w.dims()[0]] {
            return Err(Error::Build(format!(
                "{role} weight {:?} and bias {:?} disagree",
                w.dims(),
                bias.dims()
            )));
        }
        let acc_scale = bias.scale();
        Ok(DenseWeights {
            w,
            bias: bias.into_data(),
            acc_scale,
            requant,
            saturation: SatCounter::default(),
        })
    }

    fn layernorm(&mut self, role: &str, p: u32) -> Result<LayerNormParams> {
        let gamma = self.tensor(&format!("{role}.gamma"))?;
        let beta = self.tensor(&format!("{role}.beta"))?;
        let requant = self.requant(role)?;
        if gamma.dims().len() != 1 || beta.dims() != gamma.dims() {
            return Err(Error::Build(format!(
                "{role} gamma {:?} and beta {:?} disagree",
                gamma.dims(),
                beta.dims()
            )));
        }
        Ok(LayerNormParams {
            gamma,
            beta: beta.into_data(),
            p,
            requant,
            saturation: SatCounter::default(),
        })
    }
}

impl QViTModel {
    /// Every stored integer tensor keyed by role.
    pub fn named_tensors(&self) -> Result<BTreeMap<String, QTensor>> {
        let mut out = BTreeMap::new();
        named_dense(&mut out, "patch", &self.patch)?;
        out.insert("cls".into(), self.cls.clone());
        out.insert("pos".into(), self.pos.clone());
        for (i, b) in self.blocks.iter().enumerate() {
            named_ln(&mut out, &format!("block{i}.ln1"), &b.ln1)?;
            named_ln(&mut out, &format!("block{i}.ln2"), &b.ln2)?;
            for (name, d) in [
                ("q", &b.q),
                ("k", &b.k),
                ("v", &b.v),
                ("o", &b.o),
                ("fc1", &b.fc1),
                ("fc2", &b.fc2),
            ] {
                named_dense(&mut out, &format!("block{i}.{name}"), d)?;
            }
        }
        named_ln(&mut out, "ln_f", &self.ln_f)?;
        named_dense(&mut out, "head", &self.head)?;
        Ok(out)
    }

    /// Every precomputed constant set keyed by role.
    pub fn plans(&self) -> BTreeMap<String, Plan> {
        let mut out = BTreeMap::new();
        out.insert("patch".into(), Plan::Requant(self.patch.requant));
        out.insert("embed_add".into(), Plan::Residual(self.embed_add));
        for (i, b) in self.blocks.iter().enumerate() {
            let r = |name: &str| format!("block{i}.{name}");
            out.insert(r("ln1"), Plan::Requant(b.ln1.requant));
            out.insert(r("q"), Plan::Requant(b.q.requant));
            out.insert(r("k"), Plan::Requant(b.k.requant));
            out.insert(r("v"), Plan::Requant(b.v.requant));
            out.insert(r("scores"), Plan::Requant(b.scores));
            out.insert(r("softmax"), Plan::Shiftmax(b.softmax));
            out.insert(r("ctx"), Plan::Requant(b.ctx));
            out.insert(r("o"), Plan::Requant(b.o.requant));
            out.insert(r("res1"), Plan::Residual(b.res1));
            out.insert(r("ln2"), Plan::Requant(b.ln2.requant));
            out.insert(r("fc1"), Plan::Requant(b.fc1.requant));
            out.insert(r("gelu"), Plan::Gelu(b.gelu));
            out.insert(r("gelu_out"), Plan::Requant(b.gelu_out));
            out.insert(r("fc2"), Plan::Requant(b.fc2.requant));
            out.insert(r("res2"), Plan::Residual(b.res2));
        }
        out.insert("ln_f".into(), Plan::Requant(self.ln_f.requant));
        out.insert("head".into(), Plan::Requant(self.head.requant));
        out
    }

    /// Reassembles a model from stored parts and checks its scale graph.
    pub fn from_parts(
        config: ModelConfig,
        settings: KernelSettings,
        scales: BTreeMap<String, f64>,
        tensors: BTreeMap<String, QTensor>,
        plans: BTreeMap<String, Plan>,
    ) -> Result<Self> {
        config.validate()?;
        settings.intmath.validate()?;
        let mut parts = Parts { tensors, plans };
        let p = config.ln_precision;
        let patch = parts.dense("patch")?;
        let cls = parts.tensor("cls")?;
        let pos = parts.tensor("pos")?;
        let embed_add = parts.residual("embed_add")?;
        let mut blocks = Vec::with_capacity(config.depth);
        for i in 0..config.depth {
            let r = |name: &str| format!("block{i}.{name}");
            let softmax = match parts.plan(&r("softmax"))? {
                Plan::Shiftmax(s) => s,
                other => return Err(Error::Build(format!("plan {} is {other:?}", r("softmax")))),
            };
            let gelu = match parts.plan(&r("gelu"))? {
                Plan::Gelu(g) => g,
                other => return Err(Error::Build(format!("plan {} is {other:?}", r("gelu")))),
            };
            blocks.push(QBlock {
                ln1: parts.layernorm(&r("ln1"), p)?,
                q: parts.dense(&r("q"))?,
                k: parts.dense(&r("k"))?,
                v: parts.dense(&r("v"))?,
                scores: parts.requant(&r("scores"))?,
                softmax,
                ctx: parts.requant(&r("ctx"))?,
                o: parts.dense(&r("o"))?,
                res1: parts.residual(&r("res1"))?,
                ln2: parts.layernorm(&r("ln2"), p)?,
                fc1: parts.dense(&r("fc1"))?,
                gelu,
                gelu_out: parts.requant(&r("gelu_out"))?,
                fc2: parts.dense(&r("fc2"))?,
                res2: parts.residual(&r("res2"))?,
                sat: BlockCounters::default(),
            });
        }
        let ln_f = parts.layernorm("ln_f", p)?;
        let head = parts.dense("head")?;
        if let Some(extra) = parts.tensors.keys().next().or(parts.plans.keys().next()) {
            return Err(Error::Build(format!("unexpected entry {extra}")));
        }
        let model = Self {
            config,
            settings,
            scales,
            patch,
            cls,
            pos,
            embed_add,
            blocks,
            ln_f,
            head,
            embed_sat: SatCounter::default(),
        };
        model.check_shapes()?;
        model.verify_scales()?;
        Ok(model)
    }

    fn check_shapes(&self) -> Result<()> {
        let c = &self.config;
        let d = c.d_model;
        let dense = [
            ("patch", &self.patch, c.patch_features(), d),
            ("head", &self.head, d, c.num_classes),
        ];
        let mut all: Vec<(String, &DenseWeights, usize, usize)> = dense
            .into_iter()
            .map(|(n, w, i, o)| (n.to_string(), w, i, o))
            .collect();
        for (i, b) in self.blocks.iter().enumerate() {
            for (name, w, fi, fo) in [
                ("q", &b.q, d, d),
                ("k", &b.k, d, d),
                ("v", &b.v, d, d),
                ("o", &b.o, d, d),
                ("fc1", &b.fc1, d, c.hidden()),
                ("fc2", &b.fc2, c.hidden(), d),
            ] {
                all.push((format!("block{i}.{name}"), w, fi, fo));
            }
        }
        for (name, w, fi, fo) in all {
            if w.in_features() != fi || w.out_features() != fo {
                return Err(Error::Build(format!(
                    "{name} weight is {:?}, expected [{fo}, {fi}]",
                    w.w.dims()
                )));
            }
        }
        let mut lns = vec![("ln_f".to_string(), &self.ln_f)];
        for (i, b) in self.blocks.iter().enumerate() {
            lns.push((format!("block{i}.ln1"), &b.ln1));
            lns.push((format!("block{i}.ln2"), &b.ln2));
        }
        for (name, ln) in lns {
            if ln.gamma.len() != d {
                return Err(Error::Build(format!(
                    "{name} has {} affine factors, expected {d}",
                    ln.gamma.len()
                )));
            }
        }
        if self.cls.dims() != [1, d] || self.pos.dims() != [c.tokens(), d] {
            return Err(Error::Build(format!(
                "class token {:?} / positional table {:?} do not match {} tokens of width {d}",
                self.cls.dims(),
                self.pos.dims(),
                c.tokens()
            )));
        }
        Ok(())
    }

    /// Recomputes every constant set from the stored scales; errors on the
    /// first role whose stored value differs.
    pub fn verify_scales(&self) -> Result<()> {
        let expected = self.expected_plans()?;
        let stored = self.plans();
        for (role, want) in &expected {
            match stored.get(role) {
                Some(got) if got == want => {}
                Some(got) => {
                    return Err(Error::Build(format!(
                        "{role}: stored {got:?} but scales give {want:?}"
                    )));
                }
                None => return Err(Error::Build(format!("{role}: no stored plan"))),
            }
        }
        let check_bias = |role: &str, w: &DenseWeights, s_in: f64| {
            if w.acc_scale != s_in * w.w.scale() {
                Err(Error::Build(format!(
                    "{role}: bias scale is not input scale times weight scale"
                )))
            } else {
                Ok(())
            }
        };
        let s = |site: &str| scale_of(&self.scales, site);
        check_bias("patch", &self.patch, s("input")?)?;
        check_bias("head", &self.head, s("ln_f")?)?;
        for (i, b) in self.blocks.iter().enumerate() {
            let site = |name: &str| s(&format!("block{i}.{name}"));
            for (name, w, s_in) in [
                ("q", &b.q, site("ln1")?),
                ("k", &b.k, site("ln1")?),
                ("v", &b.v, site("ln1")?),
                ("o", &b.o, site("ctx")?),
                ("fc1", &b.fc1, site("ln2")?),
                ("fc2", &b.fc2, site("gelu")?),
            ] {
                check_bias(&format!("block{i}.{name}"), w, s_in)?;
            }
        }
        if self.cls.scale() != s("x0")? || self.pos.scale() != s("x0")? {
            return Err(Error::Build(
                "class/positional embeddings are not at the x0 scale".into(),
            ));
        }
        Ok(())
    }

    fn expected_plans(&self) -> Result<BTreeMap<String, Plan>> {
        let cfg = &self.config;
        let ka = cfg.k_activation;
        let rounding = self.settings.rounding;
        let s = |site: &str| scale_of(&self.scales, site);
        let dense = |w: &DenseWeights, s_in: f64, s_out: f64, k: u8| {
            Requant::from_scales(s_in * w.w.scale(), s_out, k, rounding).map(Plan::Requant)
        };
        let ln = |l: &LayerNormParams, s_out: f64| {
            Requant::from_scales(l.gamma.scale() / (1u64 << l.p) as f64, s_out, ka, rounding)
                .map(Plan::Requant)
        };
        let mut out = BTreeMap::new();
        out.insert(
            "patch".into(),
            dense(&self.patch, s("input")?, s("embed")?, ka)?,
        );
        out.insert(
            "embed_add".into(),
            Plan::Residual(ResidualPlan::new(
                s("embed")?,
                s("x0")?,
                s("x0")?,
                ka,
                rounding,
            )?),
        );
        let inv_sqrt_d = 1.0 / (cfg.head_dim() as f64).sqrt();
        let mut s_x = s("x0")?;
        for (i, b) in self.blocks.iter().enumerate() {
            let r = |name: &str| format!("block{i}.{name}");
            let site = |name: &str| s(&r(name));
            let softmax = ShiftmaxPlan::new(site("scores")?, cfg.k_softmax)?;
            let gelu = GeluPlan::new(site("fc1")?, cfg.k_gelu)?;
            let entries = [
                ("ln1", ln(&b.ln1, site("ln1")?)?),
                ("q", dense(&b.q, site("ln1")?, site("q")?, ka)?),
                ("k", dense(&b.k, site("ln1")?, site("k")?, ka)?),
                ("v", dense(&b.v, site("ln1")?, site("v")?, ka)?),
                (
                    "scores",
                    Plan::Requant(Requant::from_scales(
                        site("q")? * site("k")? * inv_sqrt_d,
                        site("scores")?,
                        cfg.k_attention,
                        rounding,
                    )?),
                ),
                ("softmax", Plan::Shiftmax(softmax)),
                (
                    "ctx",
                    Plan::Requant(Requant::from_scales(
                        softmax.s_out * site("v")?,
                        site("ctx")?,
                        ka,
                        rounding,
                    )?),
                ),
                ("o", dense(&b.o, site("ctx")?, site("attn_out")?, ka)?),
                (
                    "res1",
                    Plan::Residual(ResidualPlan::new(
                        site("attn_out")?,
                        s_x,
                        site("x1")?,
                        ka,
                        rounding,
                    )?),
                ),
                ("ln2", ln(&b.ln2, site("ln2")?)?),
                ("fc1", dense(&b.fc1, site("ln2")?, site("fc1")?, ka)?),
                ("gelu", Plan::Gelu(gelu)),
                (
                    "gelu_out",
                    Plan::Requant(Requant::from_scales(
                        gelu.s_out,
                        site("gelu")?,
                        ka,
                        rounding,
                    )?),
                ),
                ("fc2", dense(&b.fc2, site("gelu")?, site("fc2")?, ka)?),
                (
                    "res2",
                    Plan::Residual(ResidualPlan::new(
                        site("fc2")?,
                        site("x1")?,
                        site("x2")?,
                        ka,
                        rounding,
                    )?),
                ),
            ];
            for (name, plan) in entries {
                out.insert(r(name), plan);
            }
            s_x = site("x2")?;
        }
        out.insert("ln_f".into(), ln(&self.ln_f, s("ln_f")?)?);
        let head_acc = s("ln_f")? * self.head.w.scale();
        out.insert("head".into(), dense(&self.head, s("ln_f")?, head_acc, 32)?);
        Ok(out)
    }

    /// Saturation counts per site since build or the last reset.
    pub fn saturation(&self) -> BTreeMap<String, u64> {
        let mut out = BTreeMap::new();
        out.insert("embed".into(), self.patch.saturation.get());
        out.insert("x0".into(), self.embed_sat.get());
        for (i, b) in self.blocks.iter().enumerate() {
            let r = |name: &str| format!("block{i}.{name}");
            for (name, c) in [
                ("ln1", &b.ln1.saturation),
                ("q", &b.q.saturation),
                ("k", &b.k.saturation),
                ("v", &b.v.saturation),
                ("scores", &b.sat.scores),
                ("ctx", &b.sat.ctx),
                ("attn_out", &b.o.saturation),
                ("x1", &b.sat.res1),
                ("ln2", &b.ln2.saturation),
                ("fc1", &b.fc1.saturation),
                ("gelu", &b.sat.gelu),
                ("fc2", &b.fc2.saturation),
                ("x2", &b.sat.res2),
            ] {
                out.insert(r(name), c.get());
            }
        }
        out.insert("ln_f".into(), self.ln_f.saturation.get());
        out
    }

    pub fn reset_saturation(&self) {
        self.patch.saturation.reset();
        self.embed_sat.reset();
        for b in &self.blocks {
            for c in [
                &b.ln1.saturation,
                &b.q.saturation,
                &b.k.saturation,
                &b.v.saturation,
                &b.sat.scores,
                &b.sat.ctx,
                &b.o.saturation,
                &b.sat.res1,
                &b.ln2.saturation,
                &b.fc1.saturation,
                &b.sat.gelu,
                &b.fc2.saturation,
                &b.sat.res2,
            ] {
                c.reset();
            }
        }
        self.ln_f.saturation.reset();
    }
}
