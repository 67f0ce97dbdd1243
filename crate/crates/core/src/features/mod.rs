//! Radiomics feature extraction for the dense and non-dense regions of a
//! preprocessed view.

pub mod first_order;
pub mod glcm;
pub mod morphology;
pub mod wavelet;

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::Result;
use crate::image::{Image, ViewKind, ViewMeta};
use crate::segmentation::{Mask, RoiSet};

pub use first_order::{first_order_features, FirstOrder};
pub use glcm::{glcm, glcm_features, GlcmMatrix, Haralick};
pub use morphology::{morphology_features, Morphology};
pub use wavelet::{wavelet_decompose, wavelet_features, WaveletSubbands};

/// Bumped whenever names or order of the feature columns change.
pub const SCHEMA_VERSION: u32 = 1;

pub const ROIS: [&str; 2] = ["dense", "nondense"];

const PER_ROI: usize = morphology::STATS.len()
    + first_order::STATS.len()
    + glcm::STATS.len()
    + wavelet::SUBBANDS.len() * first_order::STATS.len();

/// Number of columns in a [`FeatureVector`].
pub const FEATURE_COUNT: usize = ROIS.len() * PER_ROI + 2;

/// Canonical column names, `{roi}_{transform}_{family}_{stat}` followed by
/// the metadata columns.
pub fn feature_names() -> Vec<String> {
    let mut names = Vec::with_capacity(FEATURE_COUNT);
    for roi in ROIS {
        for stat in morphology::STATS {
            names.push(format!("{roi}_orig_morph_{stat}"));
        }
        for stat in first_order::STATS {
            names.push(format!("{roi}_orig_fo_{stat}"));
        }
        for stat in glcm::STATS {
            names.push(format!("{roi}_orig_glcm_{stat}"));
        }
        for band in wavelet::SUBBANDS {
            for stat in first_order::STATS {
                names.push(format!("{roi}_{band}_fo_{stat}"));
            }
        }
    }
    names.push("meta_age".into());
    names.push("meta_view_cc".into());
    names
}

/// Feature values for one view in schema order.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub values: Vec<f64>,
    /// Some statistic was undefined on this view and was set to zero.
    pub imputed: bool,
}

impl FeatureVector {
    pub fn names(&self) -> Vec<String> {
        feature_names()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ExtractionParams {
    pub glcm_levels: usize,
}

impl Default for ExtractionParams {
    fn default() -> Self {
        ExtractionParams {
            glcm_levels: glcm::DEFAULT_LEVELS,
        }
    }
}

fn push_or_impute<const N: usize>(out: &mut Vec<f64>, imputed: &mut bool, stats: Result<[f64; N]>) {
    match stats {
        Ok(v) => out.extend_from_slice(&v),
        Err(_) => {
            *imputed = true;
            out.extend_from_slice(&[0.0; N]);
        }
    }
}

fn roi_features(
    img: &Image,
    roi: &Mask,
    subbands: &WaveletSubbands,
    params: &ExtractionParams,
    out: &mut Vec<f64>,
    imputed: &mut bool,
) {
    push_or_impute(out, imputed, morphology_features(roi, img.spacing_mm()).map(|m| m.to_array()));
    push_or_impute(out, imputed, first_order_features(img.pixels(), roi).map(|f| f.to_array()));
    push_or_impute(
        out,
        imputed,
        glcm(img, roi, params.glcm_levels).map(|g| glcm_features(&g).to_array()),
    );
    match wavelet_features(subbands, roi) {
        Ok(bands) => bands.iter().for_each(|b| out.extend_from_slice(&b.to_array())),
        Err(_) => {
            *imputed = true;
            out.extend_from_slice(&[0.0; 4 * first_order::STATS.len()]);
        }
    }
}

/// Assemble the full feature vector of a segmented view.
pub fn extract_view_features(
    img: &Image,
    rois: &RoiSet,
    meta: &ViewMeta,
    params: &ExtractionParams,
) -> FeatureVector {
    let subbands = wavelet_decompose(img);
    let mut values = Vec::with_capacity(FEATURE_COUNT);
    let mut imputed = false;
    for roi in [&rois.dense, &rois.nondense] {
        roi_features(img, roi, &subbands, params, &mut values, &mut imputed);
    }
    values.push(meta.age_years);
    values.push(if meta.view_kind == ViewKind::Cc { 1.0 } else { 0.0 });
    debug_assert_eq!(values.len(), FEATURE_COUNT);
    FeatureVector { values, imputed }
}
