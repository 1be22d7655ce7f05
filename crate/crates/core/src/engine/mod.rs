//! ViT assembly: configuration, floating-point weights, calibration, the
//! quantized model and its integer forward pass.

mod calib;
mod config;
mod forward;
pub use forward::QTrace;
mod fp;
mod qmodel;
mod store;

pub use calib::{activation_sites, Calibration};
pub use config::{unfold_patches, ModelConfig};
pub use fp::{FpBlock, FpLayerNorm, FpLinear, FpViT, INIT_STD};
pub use qmodel::{
    build_qmodel, BlockCounters, KernelSettings, Plan, QBlock, QViTModel, WEIGHT_BITS,
};
pub use store::{
    load_fp, load_model, load_qmodel, save_fp, save_qmodel, LoadedModel, Manifest, ModelKind,
    TensorEntry, BLOB_DIR, MANIFEST_FILE,
};
