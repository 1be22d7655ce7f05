use std::fs;

use intvit::engine::{
    build_qmodel, load_fp, load_model, load_qmodel, save_fp, save_qmodel, Calibration, FpViT,
    KernelSettings, LoadedModel, ModelConfig, BLOB_DIR, MANIFEST_FILE,
};
use intvit::oracle::GeluForm;
use intvit::rng::{gen_gaussian, Rng};
use intvit::{Error, FpTensor};

fn cfg() -> ModelConfig {
    ModelConfig {
        image_size: 8,
        patch_size: 4,
        channels: 2,
        d_model: 16,
        heads: 2,
        depth: 1,
        num_classes: 5,
        ..ModelConfig::default()
    }
}

fn batch(cfg: &ModelConfig, n: usize, seed: u64) -> FpTensor {
    let mut dims = vec![n];
    dims.extend(cfg.image_dims());
    gen_gaussian(&mut Rng::new(seed), &dims, 0.0, 1.0).unwrap()
}

fn quantized(seed: u64) -> (FpViT, intvit::engine::QViTModel) {
    let fp = FpViT::random(&cfg(), seed).unwrap();
    let calib = Calibration::collect(&fp, &batch(&fp.config, 8, 1), GeluForm::Erf).unwrap();
    let q = build_qmodel(&fp, &calib, &KernelSettings::default()).unwrap();
    (fp, q)
}

fn dir_bytes(dir: &std::path::Path) -> Vec<(String, Vec<u8>)> {
    let mut out = vec![(
        MANIFEST_FILE.to_string(),
        fs::read(dir.join(MANIFEST_FILE)).unwrap(),
    )];
    let mut blobs: Vec<_> = fs::read_dir(dir.join(BLOB_DIR))
        .unwrap()
        .map(|e| e.unwrap().path())
        .collect();
    blobs.sort();
    for p in blobs {
        out.push((
            p.file_name().unwrap().to_string_lossy().into_owned(),
            fs::read(&p).unwrap(),
        ));
    }
    out
}

#[test]
fn fp_model_round_trips_exactly() {
    let fp = FpViT::random(&cfg(), 3).unwrap();
    let dir = tempfile::tempdir().unwrap();
    save_fp(dir.path(), &fp).unwrap();
    assert_eq!(load_fp(dir.path()).unwrap(), fp);
}

#[test]
fn quantized_model_round_trips_with_identical_logits() {
    let (_, q) = quantized(4);
    let dir = tempfile::tempdir().unwrap();
    save_qmodel(dir.path(), &q).unwrap();
    let back = load_qmodel(dir.path()).unwrap();
    assert_eq!(back.plans(), q.plans());
    assert_eq!(back.scales, q.scales);
    assert_eq!(back.named_tensors().unwrap(), q.named_tensors().unwrap());
    let imgs = q.quantize_input(&batch(&q.config, 6, 5)).unwrap();
    assert_eq!(
        back.forward_batch(&imgs, true).unwrap(),
        q.forward_batch(&imgs, true).unwrap()
    );
}

#[test]
fn rebuilding_writes_identical_bytes() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    save_qmodel(a.path(), &quantized(6).1).unwrap();
    save_qmodel(b.path(), &quantized(6).1).unwrap();
    assert_eq!(dir_bytes(a.path()), dir_bytes(b.path()));
}

#[test]
fn corrupted_blob_is_detected() {
    let (_, q) = quantized(7);
    let dir = tempfile::tempdir().unwrap();
    save_qmodel(dir.path(), &q).unwrap();
    let blob = fs::read_dir(dir.path().join(BLOB_DIR))
        .unwrap()
        .next()
        .unwrap()
        .unwrap()
        .path();
    let mut bytes = fs::read(&blob).unwrap();
    let last = bytes.len() - 1;
    bytes[last] ^= 1;
    fs::write(&blob, bytes).unwrap();
    assert!(matches!(load_model(dir.path()), Err(Error::Corruption(_))));
}

#[test]
fn kind_mismatch_is_an_argument_error() {
    let (fp, q) = quantized(8);
    let (fd, qd) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    save_fp(fd.path(), &fp).unwrap();
    save_qmodel(qd.path(), &q).unwrap();
    assert!(matches!(load_fp(qd.path()), Err(Error::Argument(_))));
    assert!(matches!(load_qmodel(fd.path()), Err(Error::Argument(_))));
    assert!(matches!(load_model(fd.path()), Ok(LoadedModel::Fp(_))));
}

#[test]
fn foreign_manifest_is_rejected() {
    let fp = FpViT::random(&cfg(), 9).unwrap();
    let dir = tempfile::tempdir().unwrap();
    save_fp(dir.path(), &fp).unwrap();
    let path = dir.path().join(MANIFEST_FILE);
    let text = fs::read_to_string(&path)
        .unwrap()
        .replace("\"intvit-model\"", "\"other\"");
    fs::write(&path, text).unwrap();
    assert!(matches!(load_model(dir.path()), Err(Error::Format(_))));
}
