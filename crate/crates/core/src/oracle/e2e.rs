use std::collections::BTreeMap;

use crate::engine::{FpViT, QViTModel};
use crate::error::{Error, Result};
use crate::oracle::tolerances::{E2E_MIN_ARGMAX, E2E_MIN_COSINE, E2E_MIN_ROW_COSINE};
use crate::oracle::{
    compare, compare_values, fp_forward_batch, fp_forward_traced, ErrorReport, GeluForm, SiteRecord,
};
use crate::quant::dequantize;
use crate::tensor::FpTensor;

/// Compares the integer model with its floating-point source on a
/// `(B, C, H, W)` batch.
///
/// Logits are compared on every image under the integer-only audit and
/// checked against the pinned end-to-end thresholds. Intermediate sites are
/// compared on the first `trace_samples` images and carry the saturation
/// counts of the full batch.
pub fn model_report(
    fp: &FpViT,
    q: &QViTModel,
    imgs: &FpTensor,
    gelu: GeluForm,
    trace_samples: usize,
    seed: u64,
    config: serde_json::Value,
) -> Result<ErrorReport> {
    if fp.config != q.config {
        return Err(Error::Argument(
            "floating-point and quantized models have different configurations".into(),
        ));
    }
    let per = q.config.image_dims();
    let n: usize = per.iter().product();
    let qimgs = q.quantize_input(imgs)?;
    q.reset_saturation();
    let int_logits = q.forward_batch(&qimgs, true)?;
    let saturation = q.saturation();
    let fp_logits = fp_forward_batch(fp, imgs, gelu)?;
    let logits = compare(&int_logits, &fp_logits)?;

    // got and want values per site over the traced images
    let mut sites: BTreeMap<String, (Vec<f64>, Vec<f64>, usize)> = BTreeMap::new();
    let batch = imgs.dims()[0];
    for b in 0..trace_samples.min(batch) {
        let img = FpTensor::new(per.clone(), imgs.data()[b * n..(b + 1) * n].to_vec())?;
        let qimg = crate::tensor::QTensor::new(
            per.clone(),
            qimgs.data()[b * n..(b + 1) * n].to_vec(),
            qimgs.scale(),
            qimgs.bits(),
        )?;
        let mut want: BTreeMap<String, FpTensor> = BTreeMap::new();
        fp_forward_traced(fp, &img, gelu, &mut |s, t| {
            want.insert(s.to_string(), t.clone());
        })?;
        let mut got = BTreeMap::new();
        q.forward_traced(&qimg, &mut |s, t| {
            got.insert(s.to_string(), dequantize(t));
        })?;
        for (site, g) in got {
            let Some(w) = want.get(&site) else { continue };
            if g.dims() != w.dims() {
                return Err(Error::Shape(format!(
                    "site {site}: integer {:?} vs real {:?}",
                    g.dims(),
                    w.dims()
                )));
            }
            let e = sites
                .entry(site)
                .or_insert_with(|| (Vec::new(), Vec::new(), w.row_len()));
            e.0.extend_from_slice(g.data());
            e.1.extend_from_slice(w.data());
        }
    }

    let mut report = ErrorReport::new(seed, config);
    for site in crate::engine::activation_sites(&q.config) {
        if let Some((g, w, row)) = sites.get(&site) {
            let m = compare_values(g, w, *row, None)?;
            report.add_site(SiteRecord::from_metrics(
                &site,
                &m,
                saturation.get(&site).copied().unwrap_or(0),
            ));
        }
    }
    report.add_site(SiteRecord::from_metrics("logits", &logits, 0));
    report.check_min("logits_mean_cosine", logits.cosine, E2E_MIN_COSINE);
    report.check_min("logits_min_cosine", logits.min_cosine, E2E_MIN_ROW_COSINE);
    report.check_min(
        "logits_argmax_agreement",
        logits.argmax_agreement,
        E2E_MIN_ARGMAX,
    );
    Ok(report)
}
