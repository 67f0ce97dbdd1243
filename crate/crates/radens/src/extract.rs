//! Reference CDF estimation and per-view feature extraction.

use std::path::Path;

use anyhow::{bail, Context, Result};
use log::{info, warn};
use radens_core::features::{extract_view_features, ExtractionParams, FeatureVector};
use radens_core::image::{prepare_reference_image, preprocess_view, ReferenceCdf, ReferenceHistogram};
use radens_core::segmentation::build_roiset;
use rayon::prelude::*;

use crate::io::{exceptions_path, load_image, write_exceptions, write_feature_cache, write_png8, CachedView, ViewException};
use crate::manifest::{ExamRecord, Manifest};

/// Pool every manifest image (normalized, resampled) into a reference CDF.
pub fn build_reference(manifest: &Manifest, bin_count: usize) -> Result<ReferenceCdf> {
    let empty = ReferenceHistogram::new(bin_count)?;
    let hist = manifest
        .records
        .par_iter()
        .map(|r| -> Result<ReferenceHistogram> {
            let path = manifest.image_path(r);
            let img = load_image(&path, r.pixel_spacing_mm)?;
            let mut h = empty.clone();
            h.add(&prepare_reference_image(&img)?);
            Ok(h)
        })
        .try_reduce(|| empty.clone(), |a, b| Ok(a.merge(&b)))?;
    Ok(hist.finish()?)
}

pub struct ViewFeatures {
    pub features: FeatureVector,
    /// Label map (0 background, 1 periphery, 2 non-dense, 3 dense) and its size.
    pub label_map: (usize, usize, Vec<u8>),
}

pub fn extract_one(manifest: &Manifest, r: &ExamRecord, reference: &ReferenceCdf, params: &ExtractionParams) -> Result<ViewFeatures> {
    let img = load_image(&manifest.image_path(r), r.pixel_spacing_mm)?;
    let meta = r.meta();
    let pre = preprocess_view(&img, &meta, reference)?;
    if pre.degenerate {
        bail!("constant image");
    }
    let rois = build_roiset(&pre.image).context("segmentation")?;
    let features = extract_view_features(&pre.image, &rois, &meta, params);
    Ok(ViewFeatures {
        features,
        label_map: (pre.image.width(), pre.image.height(), rois.label_map()),
    })
}

#[derive(Debug, Clone)]
pub struct ExtractSummary {
    pub cached: usize,
    pub exceptions: usize,
    pub imputed: usize,
}

/// Extract every manifest view and write the cache plus its exceptions
/// sidecar. Rows are written sorted by (patient, laterality, view).
pub fn run_extract(
    manifest: &Manifest,
    reference: &ReferenceCdf,
    params: &ExtractionParams,
    cache_path: &Path,
    label_maps: Option<&Path>,
    max_failure_fraction: f64,
) -> Result<ExtractSummary> {
    if let Some(dir) = label_maps {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let mut records: Vec<&ExamRecord> = manifest.records.iter().collect();
    records.sort_by(|a, b| a.view_key().cmp(&b.view_key()));
    let results: Vec<Result<ViewFeatures>> = records
        .par_iter()
        .map(|r| {
            let out = extract_one(manifest, r, reference, params)?;
            if let Some(dir) = label_maps {
                let (w, h, map) = &out.label_map;
                let name = format!("{}_{}_{}.png", r.patient_id, r.laterality.code(), r.view_kind.code());
                write_png8(&dir.join(name), *w, *h, map)?;
            }
            Ok(out)
        })
        .collect();

    let mut cache = Vec::new();
    let mut exceptions = Vec::new();
    let mut imputed = 0;
    for (r, res) in records.iter().zip(results) {
        match res {
            Ok(v) => {
                if v.features.imputed {
                    imputed += 1;
                    warn!("{}: some statistics undefined, imputed as 0", r.view_key());
                }
                cache.push(CachedView {
                    key: r.view_key(),
                    year: r.year,
                    label: r.label,
                    features: v.features.values,
                });
            }
            Err(e) => {
                warn!("{}: {e:#}", r.view_key());
                exceptions.push(ViewException {
                    key: r.view_key(),
                    year: r.year,
                    reason: format!("{e:#}").replace(['\n', '\r'], " "),
                });
            }
        }
    }
    let sidecar = exceptions_path(cache_path);
    write_exceptions(&sidecar, &exceptions)?;
    let total = records.len().max(1);
    if exceptions.len() as f64 > max_failure_fraction * total as f64 {
        bail!(
            "{} of {} views failed (limit {:.0}%); see {}",
            exceptions.len(),
            records.len(),
            max_failure_fraction * 100.0,
            sidecar.display()
        );
    }
    write_feature_cache(cache_path, &cache)?;
    info!(
        "extracted {} views, {} exceptions, {} with imputed statistics",
        cache.len(),
        exceptions.len(),
        imputed
    );
    Ok(ExtractSummary {
        cached: cache.len(),
        exceptions: exceptions.len(),
        imputed,
    })
}
