//! On-disk model layout: `manifest.json` plus `blobs/<sha256>.itns`.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::engine::{FpViT, KernelSettings, ModelConfig, Plan, QViTModel};
use crate::error::{Error, Result};
use crate::itns::{self, Tensor};
use crate::tensor::{FpTensor, QTensor};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const BLOB_DIR: &str = "blobs";
const FORMAT: &str = "intvit-model";
const VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Fp,
    Quantized,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TensorEntry {
    pub role: String,
    /// Hex SHA-256 of the ITNS encoding.
    pub blob: String,
    pub dims: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bits: Option<u8>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scale: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub format: String,
    pub version: u32,
    pub kind: ModelKind,
    pub config: ModelConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub settings: Option<KernelSettings>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub scales: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub plans: BTreeMap<String, Plan>,
    pub tensors: Vec<TensorEntry>,
}

impl Manifest {
    pub fn read(dir: impl AsRef<Path>) -> Result<Self> {
        let path = dir.as_ref().join(MANIFEST_FILE);
        let m: Self = serde_json::from_str(&fs::read_to_string(&path)?)?;
        if m.format != FORMAT || m.version != VERSION {
            return Err(Error::Format(format!(
                "{} is {} v{}, expected {FORMAT} v{VERSION}",
                path.display(),
                m.format,
                m.version
            )));
        }
        Ok(m)
    }
}

#[allow(clippy::large_enum_variant)]
pub enum LoadedModel {
    Fp(FpViT),
    Quantized(QViTModel),
}

fn write_blob(dir: &Path, role: &str, t: Tensor) -> Result<TensorEntry> {
    let bytes = itns::encode(&t)?;
    let blob = hex::encode(Sha256::digest(&bytes));
    let path = dir.join(BLOB_DIR).join(format!("{blob}.itns"));
    if !path.exists() {
        fs::write(&path, &bytes)?;
    }
    let (bits, scale) = match &t {
        Tensor::Fp(_) => (None, None),
        Tensor::Q(q) => (Some(q.bits()), Some(q.scale())),
    };
    Ok(TensorEntry {
        role: role.to_string(),
        blob,
        dims: t.dims().to_vec(),
        bits,
        scale,
    })
}

fn read_blob(dir: &Path, e: &TensorEntry) -> Result<Tensor> {
    let path = dir.join(BLOB_DIR).join(format!("{}.itns", e.blob));
    let bytes = fs::read(&path)?;
    let actual = hex::encode(Sha256::digest(&bytes));
    if actual != e.blob {
        return Err(Error::Corruption(format!(
            "{}: content hash {actual} does not match",
            path.display()
        )));
    }
    let t = itns::decode(&bytes)?;
    let meta = match &t {
        Tensor::Fp(_) => (None, None),
        Tensor::Q(q) => (Some(q.bits()), Some(q.scale())),
    };
    if t.dims() != e.dims.as_slice() || meta != (e.bits, e.scale) {
        return Err(Error::Corruption(format!(
            "{}: blob header disagrees with manifest",
            e.role
        )));
    }
    Ok(t)
}

fn write_manifest(dir: &Path, m: &Manifest) -> Result<()> {
    fs::write(
        dir.join(MANIFEST_FILE),
        serde_json::to_string_pretty(m)? + "\n",
    )?;
    Ok(())
}

fn prepare(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir.join(BLOB_DIR))?;
    Ok(())
}

pub fn save_fp(dir: impl AsRef<Path>, model: &FpViT) -> Result<()> {
    let dir = dir.as_ref();
    prepare(dir)?;
    let tensors = model
        .named_tensors()
        .into_iter()
        .map(|(role, t)| write_blob(dir, &role, Tensor::Fp(t)))
        .collect::<Result<Vec<_>>>()?;
    write_manifest(
        dir,
        &Manifest {
            format: FORMAT.into(),
            version: VERSION,
            kind: ModelKind::Fp,
            config: model.config.clone(),
            settings: None,
            scales: BTreeMap::new(),
            plans: BTreeMap::new(),
            tensors,
        },
    )
}

pub fn save_qmodel(dir: impl AsRef<Path>, model: &QViTModel) -> Result<()> {
    let dir = dir.as_ref();
    prepare(dir)?;
    let tensors = model
        .named_tensors()?
        .into_iter()
        .map(|(role, t)| write_blob(dir, &role, Tensor::Q(t)))
        .collect::<Result<Vec<_>>>()?;
    write_manifest(
        dir,
        &Manifest {
            format: FORMAT.into(),
            version: VERSION,
            kind: ModelKind::Quantized,
            config: model.config.clone(),
            settings: Some(model.settings),
            scales: model.scales.clone(),
            plans: model.plans(),
            tensors,
        },
    )
}

fn load_fp_from(dir: &Path, m: Manifest) -> Result<FpViT> {
    let mut named: BTreeMap<String, FpTensor> = BTreeMap::new();
    for e in &m.tensors {
        named.insert(e.role.clone(), read_blob(dir, e)?.into_fp()?);
    }
    FpViT::from_named(&m.config, named)
}

fn load_q_from(dir: &Path, m: Manifest) -> Result<QViTModel> {
    let settings = m
        .settings
        .ok_or_else(|| Error::Format("quantized manifest lacks kernel settings".into()))?;
    let mut named: BTreeMap<String, QTensor> = BTreeMap::new();
    for e in &m.tensors {
        named.insert(e.role.clone(), read_blob(dir, e)?.into_q()?);
    }
    QViTModel::from_parts(m.config, settings, m.scales, named, m.plans)
}

pub fn load_model(dir: impl AsRef<Path>) -> Result<LoadedModel> {
    let dir = dir.as_ref();
    let m = Manifest::read(dir)?;
    match m.kind {
        ModelKind::Fp => load_fp_from(dir, m).map(LoadedModel::Fp),
        ModelKind::Quantized => load_q_from(dir, m).map(LoadedModel::Quantized),
    }
}

pub fn load_fp(dir: impl AsRef<Path>) -> Result<FpViT> {
    match load_model(dir)? {
        LoadedModel::Fp(m) => Ok(m),
        LoadedModel::Quantized(_) => Err(Error::Argument(
            "expected a floating-point model, found a quantized one".into(),
        )),
    }
}

pub fn load_qmodel(dir: impl AsRef<Path>) -> Result<QViTModel> {
    match load_model(dir)? {
        LoadedModel::Quantized(m) => Ok(m),
        LoadedModel::Fp(_) => Err(Error::Argument(
            "expected a quantized model, found a floating-point one".into(),
        )),
    }
}
