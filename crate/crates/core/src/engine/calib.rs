use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::engine::{FpViT, ModelConfig};
use crate::error::{Error, Result};
use crate::oracle::{fp_forward_traced, GeluForm};
use crate::tensor::FpTensor;

/// Activation sites whose ranges the quantized model needs, in forward order.
pub fn activation_sites(cfg: &ModelConfig) -> Vec<String> {
    let mut v: Vec<String> = ["input", "embed", "x0"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    for i in 0..cfg.depth {
        for s in [
            "ln1", "q", "k", "v", "scores", "ctx", "attn_out", "x1", "ln2", "fc1", "gelu", "fc2",
            "x2",
        ] {
            v.push(format!("block{i}.{s}"));
        }
    }
    v.push("ln_f".into());
    v
}

/// Min-max clipping values per activation site, gathered by running the
/// floating-point reference on calibration inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub samples: usize,
    pub clip: BTreeMap<String, f64>,
}

impl Calibration {
    /// `images` is a `(B, C, H, W)` batch.
    pub fn collect(model: &FpViT, images: &FpTensor, gelu: GeluForm) -> Result<Self> {
        let cfg = &model.config;
        let per: usize = cfg.image_dims().iter().product();
        if images.dims().len() != 4 || images.dims()[1..] != cfg.image_dims()[..] {
            return Err(Error::Shape(format!(
                "calibration batch {:?}, expected (B, {:?})",
                images.dims(),
                cfg.image_dims()
            )));
        }
        let mut max_abs: BTreeMap<String, f64> = BTreeMap::new();
        for img in images.data().chunks_exact(per) {
            let img = FpTensor::new(cfg.image_dims(), img.to_vec())?;
            fp_forward_traced(model, &img, gelu, &mut |site, t| {
                let m = t.data().iter().fold(0.0f64, |a, v| a.max(v.abs()));
                let e = max_abs.entry(site.to_string()).or_insert(0.0);
                *e = e.max(m);
            })?;
        }
        // all-zero sites fall back to m = 1
        let clip = max_abs
            .into_iter()
            .map(|(k, m)| (k, if m == 0.0 { 1.0 } else { m }))
            .collect();
        Ok(Self {
            samples: images.dims()[0],
            clip,
        })
    }

    pub fn clip(&self, site: &str) -> Result<f64> {
        self.clip
            .get(site)
            .copied()
            .ok_or_else(|| Error::Build(format!("missing calibration for site {site}")))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let c: Self = serde_json::from_str(s)?;
        if let Some((k, v)) = c.clip.iter().find(|(_, v)| !(**v > 0.0 && v.is_finite())) {
            return Err(Error::Format(format!(
                "clip value {v} for {k} is not positive"
            )));
        }
        Ok(c)
    }
}
