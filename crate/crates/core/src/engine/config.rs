use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Shape and precision of a plain ViT.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub image_size: usize,
    pub patch_size: usize,
    pub channels: usize,
    pub d_model: usize,
    pub heads: usize,
    pub mlp_ratio: usize,
    pub depth: usize,
    pub num_classes: usize,
    /// Width of activations between layers.
    pub k_activation: u8,
    /// Width of the attention scores fed to the softmax (8 or 16).
    pub k_attention: u8,
    /// Width of the softmax probabilities.
    pub k_softmax: u8,
    /// Width of the sigmoid estimate inside GELU.
    pub k_gelu: u8,
    /// Precision exponent of the normalized LayerNorm value.
    pub ln_precision: u32,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            image_size: 16,
            patch_size: 4,
            channels: 3,
            d_model: 64,
            heads: 4,
            mlp_ratio: 4,
            depth: 2,
            num_classes: 100,
            k_activation: 8,
            k_attention: 8,
            k_softmax: 8,
            k_gelu: 8,
            ln_precision: 15,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, why: String| Err(Error::Argument(format!("{field}: {why}")));
        for (field, v) in [
            ("image_size", self.image_size),
            ("patch_size", self.patch_size),
            ("channels", self.channels),
            ("d_model", self.d_model),
            ("heads", self.heads),
            ("mlp_ratio", self.mlp_ratio),
            ("num_classes", self.num_classes),
        ] {
            if v == 0 {
                return bad(field, "must be positive".into());
            }
        }
        if !self.d_model.is_multiple_of(self.heads) {
            return bad(
                "heads",
                format!(
                    "d_model {} is not divisible by {} heads",
                    self.d_model, self.heads
                ),
            );
        }
        if !self.image_size.is_multiple_of(self.patch_size) {
            return bad(
                "patch_size",
                format!(
                    "image_size {} is not divisible by {}",
                    self.image_size, self.patch_size
                ),
            );
        }
        if self.d_model < 2 {
            return bad("d_model", "layernorm needs at least 2 features".into());
        }
        if !(2..=8).contains(&self.k_activation) {
            return bad(
                "k_activation",
                format!("{} outside [2, 8]", self.k_activation),
            );
        }
        if !matches!(self.k_attention, 8 | 16) {
            return bad(
                "k_attention",
                format!("{} is neither 8 nor 16", self.k_attention),
            );
        }
        if !(2..=16).contains(&self.k_softmax) {
            return bad("k_softmax", format!("{} outside [2, 16]", self.k_softmax));
        }
        if !(2..=16).contains(&self.k_gelu) {
            return bad("k_gelu", format!("{} outside [2, 16]", self.k_gelu));
        }
        if !(1..=24).contains(&self.ln_precision) {
            return bad(
                "ln_precision",
                format!("{} outside [1, 24]", self.ln_precision),
            );
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.heads
    }

    pub fn grid(&self) -> usize {
        self.image_size / self.patch_size
    }

    pub fn num_patches(&self) -> usize {
        self.grid() * self.grid()
    }

    /// Patches plus the class token.
    pub fn tokens(&self) -> usize {
        self.num_patches() + 1
    }

    pub fn patch_features(&self) -> usize {
        self.channels * self.patch_size * self.patch_size
    }

    pub fn hidden(&self) -> usize {
        self.d_model * self.mlp_ratio
    }

    pub fn image_dims(&self) -> Vec<usize> {
        vec![self.channels, self.image_size, self.image_size]
    }
}

/// Rearranges a `(C, H, W)` image into `(patches, C·P·P)` rows. Patches are
/// taken row-major over the grid; features are ordered channel, row, column.
pub fn unfold_patches<T: Copy>(img: &[T], cfg: &ModelConfig) -> Vec<T> {
    let (p, g, s) = (cfg.patch_size, cfg.grid(), cfg.image_size);
    let mut out = Vec::with_capacity(img.len());
    for gy in 0..g {
        for gx in 0..g {
            for c in 0..cfg.channels {
                for i in 0..p {
                    let row = c * s * s + (gy * p + i) * s + gx * p;
                    out.extend_from_slice(&img[row..row + p]);
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_is_desk_scale() {
        let c = ModelConfig::default();
        c.validate().unwrap();
        assert_eq!(c.tokens(), 17);
        assert_eq!(c.head_dim(), 16);
        assert_eq!(c.patch_features(), 48);
    }

    #[test]
    fn invalid_fields_are_named() {
        let c = ModelConfig {
            heads: 5,
            ..Default::default()
        };
        assert!(c.validate().unwrap_err().to_string().contains("heads"));
        let c = ModelConfig {
            patch_size: 5,
            ..Default::default()
        };
        assert!(c.validate().unwrap_err().to_string().contains("patch_size"));
    }

    #[test]
    fn unfold_small_image() {
        let cfg = ModelConfig {
            image_size: 4,
            patch_size: 2,
            channels: 1,
            ..Default::default()
        };
        let img: Vec<i32> = (0..16).collect();
        let t = unfold_patches(&img, &cfg);
        assert_eq!(&t[..4], &[0, 1, 4, 5]);
        assert_eq!(&t[4..8], &[2, 3, 6, 7]);
        assert_eq!(&t[12..16], &[10, 11, 14, 15]);
    }
}
