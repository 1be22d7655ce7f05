use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use clap::Args;
use intvit::engine::{KernelSettings, ModelConfig};
use intvit::intmath::IntMathConfig;
use intvit::quant::Rounding;
use intvit::{Error, Result};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::Common;

/// Model-configuration overrides. Unset flags fall back to the config file,
/// then to the built-in desk model.
#[derive(Args, Clone, Default)]
pub struct ModelFlags {
    #[arg(long)]
    image_size: Option<usize>,
    #[arg(long)]
    patch_size: Option<usize>,
    #[arg(long)]
    channels: Option<usize>,
    #[arg(long)]
    d_model: Option<usize>,
    #[arg(long)]
    heads: Option<usize>,
    #[arg(long)]
    mlp_ratio: Option<usize>,
    #[arg(long)]
    depth: Option<usize>,
    #[arg(long)]
    num_classes: Option<usize>,
    #[arg(long)]
    k_activation: Option<u8>,
    /// Score width inside attention (8 or 16).
    #[arg(long)]
    k_attention: Option<u8>,
    /// Output width of Shiftmax.
    #[arg(long)]
    k_softmax: Option<u8>,
    /// Width of the ShiftGELU sigmoid estimate.
    #[arg(long)]
    k_gelu: Option<u8>,
    /// Fractional bits of the normalized LayerNorm value.
    #[arg(long)]
    ln_precision: Option<u32>,
}

impl ModelFlags {
    fn entries(&self) -> Vec<(&'static str, Option<Value>)> {
        vec![
            ("image_size", self.image_size.map(Value::from)),
            ("patch_size", self.patch_size.map(Value::from)),
            ("channels", self.channels.map(Value::from)),
            ("d_model", self.d_model.map(Value::from)),
            ("heads", self.heads.map(Value::from)),
            ("mlp_ratio", self.mlp_ratio.map(Value::from)),
            ("depth", self.depth.map(Value::from)),
            ("num_classes", self.num_classes.map(Value::from)),
            ("k_activation", self.k_activation.map(Value::from)),
            ("k_attention", self.k_attention.map(Value::from)),
            ("k_softmax", self.k_softmax.map(Value::from)),
            ("k_gelu", self.k_gelu.map(Value::from)),
            ("ln_precision", self.ln_precision.map(Value::from)),
        ]
    }
}

/// Integer-math overrides.
#[derive(Args, Clone, Default)]
pub struct KernelFlags {
    /// Exponent headroom N of the shift exponential.
    #[arg(long = "n")]
    n: Option<u32>,
    /// Reciprocal precision M of the integer division.
    #[arg(long = "m")]
    m: Option<u32>,
    /// Newton iterations of the integer square root.
    #[arg(long)]
    iters: Option<u32>,
    /// nearest or floor.
    #[arg(long)]
    requant_rounding: Option<Rounding>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct KernelFile {
    n: Option<u32>,
    m: Option<u32>,
    iters: Option<u32>,
    requant_rounding: Option<Rounding>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    seed: Option<u64>,
    model: Option<Map<String, Value>>,
    kernel: Option<KernelFile>,
}

const ARCHITECTURE: [&str; 8] = [
    "image_size",
    "patch_size",
    "channels",
    "d_model",
    "heads",
    "mlp_ratio",
    "depth",
    "num_classes",
];

/// Fully resolved parameters of one invocation, embedded in every report.
#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub command: String,
    pub seed: u64,
    pub model: ModelConfig,
    pub kernel: KernelSettings,
    pub paths: BTreeMap<String, String>,
    pub options: BTreeMap<String, Value>,
}

impl RunConfig {
    pub fn resolve(
        command: &str,
        common: &Common,
        flags: &ModelFlags,
        kernel: Option<&KernelFlags>,
    ) -> Result<Self> {
        Self::resolve_from(
            command,
            common,
            flags,
            kernel,
            &ModelConfig::default(),
            false,
        )
    }

    /// Like [`Self::resolve`] but starting from an existing model's
    /// configuration, whose architecture may not change.
    pub fn resolve_for_model(
        command: &str,
        common: &Common,
        flags: &ModelFlags,
        kernel: Option<&KernelFlags>,
        base: &ModelConfig,
    ) -> Result<Self> {
        Self::resolve_from(command, common, flags, kernel, base, true)
    }

    fn resolve_from(
        command: &str,
        common: &Common,
        flags: &ModelFlags,
        kernel: Option<&KernelFlags>,
        base: &ModelConfig,
        fixed_architecture: bool,
    ) -> Result<Self> {
        let file: ConfigFile = match &common.config {
            Some(p) => serde_json::from_str(&fs::read_to_string(p)?)?,
            None => ConfigFile::default(),
        };
        let Value::Object(mut merged) = serde_json::to_value(base)? else {
            unreachable!("model config serializes to an object")
        };
        let base_map = merged.clone();
        if let Some(m) = &file.model {
            merged.extend(m.clone());
        }
        for (k, v) in flags.entries() {
            if let Some(v) = v {
                merged.insert(k.to_string(), v);
            }
        }
        if fixed_architecture {
            for k in ARCHITECTURE {
                if merged.get(k) != base_map.get(k) {
                    return Err(Error::Argument(format!(
                        "{k} is fixed by the model and cannot be overridden"
                    )));
                }
            }
        }
        let model: ModelConfig = serde_json::from_value(Value::Object(merged))
            .map_err(|e| Error::Argument(format!("model configuration: {e}")))?;
        model.validate()?;

        let kf = file.kernel.unwrap_or_default();
        let kflags = kernel.cloned().unwrap_or_default();
        let d = IntMathConfig::default();
        let intmath = IntMathConfig {
            n: kflags.n.or(kf.n).unwrap_or(d.n),
            m: kflags.m.or(kf.m).unwrap_or(d.m),
            iters: kflags.iters.or(kf.iters).unwrap_or(d.iters),
        };
        intmath.validate()?;
        let rounding = kflags
            .requant_rounding
            .or(kf.requant_rounding)
            .unwrap_or_default();

        let mut paths = BTreeMap::new();
        if let Some(p) = &common.config {
            paths.insert("config".into(), p.display().to_string());
        }
        Ok(Self {
            command: command.into(),
            seed: common.seed.or(file.seed).unwrap_or(0),
            model,
            kernel: KernelSettings { intmath, rounding },
            paths,
            options: BTreeMap::new(),
        })
    }

    pub fn path(mut self, name: &str, p: &Path) -> Self {
        self.paths.insert(name.into(), p.display().to_string());
        self
    }

    pub fn option(mut self, name: &str, v: impl Serialize) -> Self {
        self.options
            .insert(name.into(), serde_json::to_value(v).unwrap_or(Value::Null));
        self
    }

    pub fn with_kernel(mut self, k: KernelSettings) -> Self {
        self.kernel = k;
        self
    }

    pub fn to_value(&self) -> Result<Value> {
        Ok(serde_json::to_value(self)?)
    }
}
