//! Grayscale image model and the view preprocessing chain:
//! min-max normalization, bilinear resampling to a physical pixel size,
//! left-view mirroring and reference-CDF histogram matching.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Pixel size every view is resampled to before segmentation.
pub const TARGET_SPACING_MM: f64 = 0.1;

/// Default number of intensity bins for CDF estimation and matching.
pub const DEFAULT_BIN_COUNT: usize = 1024;

/// Row-major grayscale image with isotropic pixel spacing.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    spacing_mm: f64,
    pixels: Vec<f64>,
}

impl Image {
    pub fn new(width: usize, height: usize, spacing_mm: f64, pixels: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::invalid("image dimensions must be positive"));
        }
        if !(spacing_mm > 0.0 && spacing_mm.is_finite()) {
            return Err(Error::invalid("pixel spacing must be positive"));
        }
        if pixels.len() != width * height {
            return Err(Error::DimensionMismatch {
                expected: width * height,
                found: pixels.len(),
            });
        }
        Ok(Image {
            width,
            height,
            spacing_mm,
            pixels,
        })
    }

    /// Build from nested rows; all rows must share one length.
    pub fn from_rows(rows: &[&[f64]], spacing_mm: f64) -> Result<Self> {
        let height = rows.len();
        let width = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != width) {
            return Err(Error::invalid("ragged rows"));
        }
        Image::new(width, height, spacing_mm, rows.concat())
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        spacing_mm: f64,
        mut f: impl FnMut(usize, usize) -> f64,
    ) -> Result<Self> {
        let mut pixels = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                pixels.push(f(x, y));
            }
        }
        Image::new(width, height, spacing_mm, pixels)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn spacing_mm(&self) -> f64 {
        self.spacing_mm
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn into_pixels(self) -> Vec<f64> {
        self.pixels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.pixels[y * self.width + x]
    }

    pub fn row(&self, y: usize) -> &[f64] {
        &self.pixels[y * self.width..(y + 1) * self.width]
    }

    fn with_pixels(&self, pixels: Vec<f64>) -> Image {
        Image {
            width: self.width,
            height: self.height,
            spacing_mm: self.spacing_mm,
            pixels,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Laterality {
    #[serde(rename = "L")]
    Left,
    #[serde(rename = "R")]
    Right,
}

impl Laterality {
    pub fn code(self) -> &'static str {
        match self {
            Laterality::Left => "L",
            Laterality::Right => "R",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "L" => Some(Laterality::Left),
            "R" => Some(Laterality::Right),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ViewKind {
    #[serde(rename = "CC")]
    Cc,
    #[serde(rename = "MLO")]
    Mlo,
}

impl ViewKind {
    pub fn code(self) -> &'static str {
        match self {
            ViewKind::Cc => "CC",
            ViewKind::Mlo => "MLO",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "CC" => Some(ViewKind::Cc),
            "MLO" => Some(ViewKind::Mlo),
            _ => None,
        }
    }
}

/// Acquisition metadata that travels with a view.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ViewMeta {
    pub laterality: Laterality,
    pub view_kind: ViewKind,
    pub age_years: f64,
    pub year: i32,
}

/// Normalization result; `degenerate` marks a constant input image.
#[derive(Debug, Clone, PartialEq)]
pub struct Normalized {
    pub image: Image,
    pub degenerate: bool,
}

/// Min-max scale intensities onto `[0, 1]`.
///
/// A constant image maps to all zeros and is flagged degenerate instead of
/// failing, so a blank view does not abort a batch.
pub fn normalize_intensities(img: &Image) -> Normalized {
    let (lo, hi) = img
        .pixels
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if hi <= lo {
        return Normalized {
            image: img.with_pixels(vec![0.0; img.pixels.len()]),
            degenerate: true,
        };
    }
    let range = hi - lo;
    let pixels = img
        .pixels
        .iter()
        .map(|&v| ((v - lo) / range).clamp(0.0, 1.0))
        .collect();
    Normalized {
        image: img.with_pixels(pixels),
        degenerate: false,
    }
}

/// Resample to `target_spacing_mm` with bilinear interpolation.
///
/// Output dimensions are `round(dim * spacing / target)` (at least 1). The
/// first and last pixel centers of each axis map onto the first and last
/// input pixel centers; samples outside the grid clamp to the edge.
pub fn resample_to_spacing(img: &Image, target_spacing_mm: f64) -> Result<Image> {
    if !(target_spacing_mm > 0.0 && target_spacing_mm.is_finite()) {
        return Err(Error::invalid("target spacing must be positive"));
    }
    if target_spacing_mm == img.spacing_mm {
        return Ok(img.clone());
    }
    let scale = img.spacing_mm / target_spacing_mm;
    let out_w = (libm::round(img.width as f64 * scale) as usize).max(1);
    let out_h = (libm::round(img.height as f64 * scale) as usize).max(1);
    let xs = axis_samples(img.width, out_w);
    let ys = axis_samples(img.height, out_h);

    let mut pixels = Vec::with_capacity(out_w * out_h);
    for &(y0, y1, fy) in &ys {
        let r0 = img.row(y0);
        let r1 = img.row(y1);
        for &(x0, x1, fx) in &xs {
            let top = r0[x0] + (r0[x1] - r0[x0]) * fx;
            let bottom = r1[x0] + (r1[x1] - r1[x0]) * fx;
            pixels.push(top + (bottom - top) * fy);
        }
    }
    Image::new(out_w, out_h, target_spacing_mm, pixels)
}

/// Source index pair and fractional weight for each output coordinate.
fn axis_samples(in_len: usize, out_len: usize) -> Vec<(usize, usize, f64)> {
    (0..out_len)
        .map(|j| {
            let pos = if out_len == 1 {
                (in_len - 1) as f64 / 2.0
            } else {
                (j * (in_len - 1)) as f64 / (out_len - 1) as f64
            };
            let pos = pos.clamp(0.0, (in_len - 1) as f64);
            let i0 = libm::floor(pos) as usize;
            let i1 = (i0 + 1).min(in_len - 1);
            (i0, i1, pos - i0 as f64)
        })
        .collect()
}

/// Reverse every row of a left view; right views pass through.
pub fn mirror_if_left(img: &Image, meta: &ViewMeta) -> Image {
    match meta.laterality {
        Laterality::Right => img.clone(),
        Laterality::Left => {
            let mut pixels = img.pixels.clone();
            for row in pixels.chunks_exact_mut(img.width) {
                row.reverse();
            }
            img.with_pixels(pixels)
        }
    }
}

/// Cumulative intensity distribution over equal-width bins on `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceCdf {
    cdf: Vec<f64>,
}

impl ReferenceCdf {
    /// Validate a CDF table: at least two bins, monotone, ending at 1.
    pub fn from_cdf(cdf: Vec<f64>) -> Result<Self> {
        if cdf.len() < 2 {
            return Err(Error::invalid("reference CDF needs at least two bins"));
        }
        if cdf.iter().any(|c| !(0.0..=1.0).contains(c)) {
            return Err(Error::invalid("reference CDF values must lie in [0, 1]"));
        }
        if cdf.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::invalid("reference CDF must be non-decreasing"));
        }
        if cdf[cdf.len() - 1] != 1.0 {
            return Err(Error::invalid("reference CDF must end at 1.0"));
        }
        Ok(ReferenceCdf { cdf })
    }

    pub fn bin_count(&self) -> usize {
        self.cdf.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.cdf
    }

    pub fn bin_center(&self, bin: usize) -> f64 {
        bin_center(bin, self.cdf.len())
    }
}

#[inline]
pub(crate) fn bin_index(v: f64, bins: usize) -> usize {
    let b = libm::floor(v * bins as f64);
    if b <= 0.0 {
        0
    } else {
        (b as usize).min(bins - 1)
    }
}

#[inline]
fn bin_center(bin: usize, bins: usize) -> f64 {
    (bin as f64 + 0.5) / bins as f64
}

/// Normalized cumulative histogram from per-bin counts.
fn cumulative(counts: &[u64]) -> Option<Vec<f64>> {
    let total: u64 = counts.iter().sum();
    if total == 0 {
        return None;
    }
    let mut acc = 0u64;
    Some(
        counts
            .iter()
            .map(|&c| {
                acc += c;
                acc as f64 / total as f64
            })
            .collect(),
    )
}

fn tissue_histogram<'a>(pixels: impl Iterator<Item = &'a f64>, bins: usize) -> Vec<u64> {
    let mut counts = vec![0u64; bins];
    for &v in pixels.filter(|&&v| v > 0.0) {
        counts[bin_index(v, bins)] += 1;
    }
    counts
}

/// Pool the non-background pixels of `images` into a reference CDF.
pub fn estimate_reference_cdf(images: &[Image], bin_count: usize) -> Result<ReferenceCdf> {
    if images.is_empty() {
        return Err(Error::Empty("reference image list"));
    }
    let mut acc = ReferenceHistogram::new(bin_count)?;
    images.iter().for_each(|im| acc.add(im));
    acc.finish()
}

/// Streaming form of [`estimate_reference_cdf`] for cohorts that do not
/// fit in memory; partial histograms merge in any order.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceHistogram {
    counts: Vec<u64>,
}

impl ReferenceHistogram {
    pub fn new(bin_count: usize) -> Result<Self> {
        if bin_count < 2 {
            return Err(Error::invalid("bin_count must be at least 2"));
        }
        Ok(ReferenceHistogram {
            counts: vec![0; bin_count],
        })
    }

    pub fn add(&mut self, img: &Image) {
        let h = tissue_histogram(img.pixels.iter(), self.counts.len());
        self.counts.iter_mut().zip(h).for_each(|(c, v)| *c += v);
    }

    pub fn merge(mut self, other: &ReferenceHistogram) -> Self {
        self.counts.iter_mut().zip(&other.counts).for_each(|(c, v)| *c += v);
        self
    }

    pub fn finish(&self) -> Result<ReferenceCdf> {
        let cdf = cumulative(&self.counts).ok_or(Error::Empty("non-background reference pixels"))?;
        ReferenceCdf::from_cdf(cdf)
    }
}

/// Map each tissue pixel onto the reference distribution.
///
/// Exact zeros are background and stay zero. A tissue pixel in source bin
/// `i` becomes the center of the first reference bin whose CDF reaches the
/// source CDF at `i`.
pub fn histogram_match(img: &Image, reference: &ReferenceCdf) -> Image {
    let bins = reference.bin_count();
    let Some(source) = cumulative(&tissue_histogram(img.pixels.iter(), bins)) else {
        return img.clone();
    };
    let mut lut = Vec::with_capacity(bins);
    let mut j = 0;
    for &target in &source {
        // source is non-decreasing, so the search resumes where it stopped
        while j + 1 < bins && reference.cdf[j] < target {
            j += 1;
        }
        lut.push(reference.bin_center(j));
    }
    let pixels = img
        .pixels
        .iter()
        .map(|&v| if v > 0.0 { lut[bin_index(v, bins)] } else { 0.0 })
        .collect();
    img.with_pixels(pixels)
}

/// Output of [`preprocess_view`].
#[derive(Debug, Clone, PartialEq)]
pub struct Preprocessed {
    pub image: Image,
    pub degenerate: bool,
}

/// Normalize, resample to 0.1 mm, mirror left views, then histogram-match.
pub fn preprocess_view(img: &Image, meta: &ViewMeta, reference: &ReferenceCdf) -> Result<Preprocessed> {
    let Normalized { image, degenerate } = normalize_intensities(img);
    let image = resample_to_spacing(&image, TARGET_SPACING_MM)?;
    let image = mirror_if_left(&image, meta);
    Ok(Preprocessed {
        image: histogram_match(&image, reference),
        degenerate,
    })
}

/// Normalize and resample only; the state in which reference images are pooled.
pub fn prepare_reference_image(img: &Image) -> Result<Image> {
    resample_to_spacing(&normalize_intensities(img).image, TARGET_SPACING_MM)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use proptest::prelude::*;

    fn meta(laterality: Laterality) -> ViewMeta {
        ViewMeta {
            laterality,
            view_kind: ViewKind::Cc,
            age_years: 50.0,
            year: 2016,
        }
    }

    #[test]
    fn normalize_examples() {
        let img = Image::new(3, 1, 0.1, vec![2.0, 4.0, 6.0]).unwrap();
        let n = normalize_intensities(&img);
        assert_eq!(n.image.pixels(), &[0.0, 0.5, 1.0]);
        assert!(!n.degenerate);

        let flat = Image::new(2, 2, 0.1, vec![7.0; 4]).unwrap();
        let n = normalize_intensities(&flat);
        assert_eq!(n.image.pixels(), &[0.0; 4]);
        assert!(n.degenerate);

        let img = Image::new(2, 1, 0.1, vec![0.0, 255.0]).unwrap();
        assert_eq!(normalize_intensities(&img).image.pixels(), &[0.0, 1.0]);
    }

    #[test]
    fn rejects_bad_geometry() {
        assert!(Image::new(0, 1, 0.1, vec![]).is_err());
        assert!(Image::new(1, 1, 0.0, vec![1.0]).is_err());
        assert!(Image::new(2, 1, 0.1, vec![1.0]).is_err());
    }

    /// Independent bilinear sampler: maps output pixel centers through the
    /// corner-aligned affine map and interpolates the four neighbours.
    fn bilinear_oracle(img: &Image, out_w: usize, out_h: usize, x: usize, y: usize) -> f64 {
        let map = |j: usize, n_in: usize, n_out: usize| -> f64 {
            if n_out == 1 {
                (n_in as f64 - 1.0) * 0.5
            } else {
                j as f64 * (n_in as f64 - 1.0) / (n_out as f64 - 1.0)
            }
        };
        let sx = map(x, img.width(), out_w);
        let sy = map(y, img.height(), out_h);
        let at = |xi: f64, yi: f64| {
            let xi = (xi.max(0.0) as usize).min(img.width() - 1);
            let yi = (yi.max(0.0) as usize).min(img.height() - 1);
            img.get(xi, yi)
        };
        let (x0, y0) = (libm::floor(sx), libm::floor(sy));
        let (fx, fy) = (sx - x0, sy - y0);
        at(x0, y0) * (1.0 - fx) * (1.0 - fy)
            + at(x0 + 1.0, y0) * fx * (1.0 - fy)
            + at(x0, y0 + 1.0) * (1.0 - fx) * fy
            + at(x0 + 1.0, y0 + 1.0) * fx * fy
    }

    #[test]
    fn resample_upsamples_ramp() {
        let img = Image::from_rows(&[&[0.0, 1.0], &[0.0, 1.0]], 0.2).unwrap();
        let out = resample_to_spacing(&img, 0.1).unwrap();
        assert_eq!((out.width(), out.height()), (4, 4));
        assert_eq!(out.spacing_mm(), 0.1);
        for y in 0..4 {
            for x in 0..4 {
                let expect = bilinear_oracle(&img, 4, 4, x, y);
                assert!((out.get(x, y) - expect).abs() < 1e-12);
            }
            let expected = [0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0];
            for (a, b) in out.row(y).iter().zip(expected) {
                assert!((a - b).abs() < 1e-12, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn resample_constant_and_identity() {
        let img = Image::new(4, 4, 0.1, vec![0.5; 16]).unwrap();
        let out = resample_to_spacing(&img, 0.2).unwrap();
        assert_eq!((out.width(), out.height()), (2, 2));
        assert!(out.pixels().iter().all(|&v| (v - 0.5).abs() < 1e-15));

        assert!(resample_to_spacing(&img, 0.0).is_err());
        assert!(resample_to_spacing(&img, -1.0).is_err());
    }

    #[test]
    fn resample_matches_oracle_on_odd_ratio() {
        let img = Image::from_fn(7, 5, 0.13, |x, y| ((x * 31 + y * 17) % 11) as f64 / 10.0).unwrap();
        let out = resample_to_spacing(&img, 0.1).unwrap();
        assert_eq!((out.width(), out.height()), (9, 7));
        for y in 0..out.height() {
            for x in 0..out.width() {
                let e = bilinear_oracle(&img, out.width(), out.height(), x, y);
                assert!((out.get(x, y) - e).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn mirror_examples() {
        let img = Image::from_rows(&[&[1.0, 2.0], &[3.0, 4.0]], 0.1).unwrap();
        let l = mirror_if_left(&img, &meta(Laterality::Left));
        assert_eq!(l.pixels(), &[2.0, 1.0, 4.0, 3.0]);
        assert_eq!(mirror_if_left(&img, &meta(Laterality::Right)), img);
        assert_eq!(mirror_if_left(&l, &meta(Laterality::Left)), img);
    }

    #[test]
    fn reference_cdf_examples() {
        let img = Image::new(2, 2, 0.1, vec![0.5; 4]).unwrap();
        let r = estimate_reference_cdf(&[img], 4).unwrap();
        assert_eq!(r.values(), &[0.0, 0.0, 1.0, 1.0]);

        let img = Image::new(4, 1, 0.1, vec![0.1, 0.3, 0.6, 0.9]).unwrap();
        let r = estimate_reference_cdf(&[img], 4).unwrap();
        assert_eq!(r.values(), &[0.25, 0.5, 0.75, 1.0]);

        let a = Image::new(3, 1, 0.1, vec![0.2; 3]).unwrap();
        let b = Image::new(3, 1, 0.1, vec![0.9; 3]).unwrap();
        let r = estimate_reference_cdf(&[a, b], 10).unwrap();
        // direct accumulation: 0.2 -> bin 2, 0.9 -> bin 9, half the mass each
        let mut expect = [0.0; 10];
        for (i, e) in expect.iter_mut().enumerate() {
            *e = if i >= 9 { 1.0 } else if i >= 2 { 0.5 } else { 0.0 };
        }
        assert_eq!(r.values(), &expect);
    }

    #[test]
    fn reference_cdf_errors() {
        assert!(estimate_reference_cdf(&[], 4).is_err());
        let zero = Image::new(2, 2, 0.1, vec![0.0; 4]).unwrap();
        assert!(estimate_reference_cdf(&[zero.clone()], 4).is_err());
        let img = Image::new(1, 1, 0.1, vec![0.3]).unwrap();
        assert!(estimate_reference_cdf(&[img], 1).is_err());
        assert!(ReferenceCdf::from_cdf(vec![0.5, 0.4, 1.0]).is_err());
        assert!(ReferenceCdf::from_cdf(vec![0.5, 0.9]).is_err());
    }

    #[test]
    fn match_against_self_is_quantization_only() {
        let img = Image::from_fn(16, 16, 0.1, |x, y| {
            if x == 0 || y == 0 {
                0.0
            } else {
                ((x * 7 + y * 13) % 97) as f64 / 97.0 + 0.001
            }
        })
        .unwrap();
        let r = estimate_reference_cdf(&[img.clone()], DEFAULT_BIN_COUNT).unwrap();
        let out = histogram_match(&img, &r);
        for (&a, &b) in img.pixels().iter().zip(out.pixels()) {
            if a == 0.0 {
                assert_eq!(b, 0.0);
            } else {
                assert!((a - b).abs() <= 1.0 / DEFAULT_BIN_COUNT as f64);
            }
        }
    }

    #[test]
    fn match_to_uniform_equalizes_ranks() {
        // 64 tissue pixels in 64 distinct, clustered bins of a 256-bin grid.
        // Against a uniform reference the pixel of rank r must land within
        // one bin of the r/64 quantile.
        let bins = 256;
        let img = Image::from_fn(8, 8, 0.1, |x, y| {
            let k = ((y * 8 + x) * 37) % 64;
            bin_center(40 + k, bins)
        })
        .unwrap();
        let mut distinct: Vec<usize> = img.pixels().iter().map(|&v| bin_index(v, bins)).collect();
        distinct.sort_unstable();
        distinct.dedup();
        assert_eq!(distinct.len(), 64);

        let uniform: Vec<f64> = (1..=bins).map(|i| i as f64 / bins as f64).collect();
        let r = ReferenceCdf::from_cdf(uniform).unwrap();
        let out = histogram_match(&img, &r);
        let mut pairs: Vec<(f64, f64)> = img.pixels().iter().copied().zip(out.pixels().iter().copied()).collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        for (rank, &(_, matched)) in pairs.iter().enumerate() {
            let quantile = (rank + 1) as f64 / 64.0;
            assert!((matched - quantile).abs() <= 1.0 / bins as f64, "rank {rank}: {matched}");
        }
        let hist = tissue_histogram(out.pixels().iter(), bins);
        for chunk in hist.chunks(4) {
            assert_eq!(chunk.iter().sum::<u64>(), 1);
        }
    }

    #[test]
    fn match_keeps_zero_border() {
        let img = Image::from_fn(10, 10, 0.1, |x, y| {
            if x == 0 || y == 0 || x == 9 || y == 9 {
                0.0
            } else {
                0.3 + 0.05 * ((x + y) % 4) as f64
            }
        })
        .unwrap();
        let r = ReferenceCdf::from_cdf((1..=16).map(|i| i as f64 / 16.0).collect()).unwrap();
        let out = histogram_match(&img, &r);
        for y in 0..10 {
            for x in 0..10 {
                if img.get(x, y) == 0.0 {
                    assert_eq!(out.get(x, y), 0.0);
                } else {
                    assert!(out.get(x, y) > 0.0);
                }
            }
        }
    }

    #[test]
    fn preprocess_examples() {
        let r = ReferenceCdf::from_cdf((1..=8).map(|i| i as f64 / 8.0).collect()).unwrap();
        let flat = Image::new(6, 4, 0.2, vec![3.0; 24]).unwrap();
        let p = preprocess_view(&flat, &meta(Laterality::Right), &r).unwrap();
        assert!(p.degenerate);
        assert!(p.image.pixels().iter().all(|&v| v == 0.0));
        assert_eq!(p.image.spacing_mm(), TARGET_SPACING_MM);

        let img = Image::from_fn(9, 7, 0.15, |x, y| (x * x + 3 * y) as f64).unwrap();
        let left = preprocess_view(&img, &meta(Laterality::Left), &r).unwrap();
        let mirrored = mirror_if_left(&img, &meta(Laterality::Left));
        let right = preprocess_view(&mirrored, &meta(Laterality::Right), &r).unwrap();
        assert_eq!(left.image.spacing_mm(), 0.1);
        assert_eq!(left, right);
    }

    fn arb_image() -> impl Strategy<Value = Image> {
        (1usize..12, 1usize..12).prop_flat_map(|(w, h)| {
            proptest::collection::vec(0.0f64..1.0, w * h)
                .prop_map(move |px| Image::new(w, h, 0.1, px).unwrap())
        })
    }

    proptest! {
        #[test]
        fn normalize_idempotent(img in arb_image()) {
            let once = normalize_intensities(&img);
            prop_assume!(!once.degenerate);
            let twice = normalize_intensities(&once.image);
            for (a, b) in once.image.pixels().iter().zip(twice.image.pixels()) {
                prop_assert!((a - b).abs() <= 1e-12);
            }
        }

        #[test]
        fn resample_to_own_spacing_is_identity(img in arb_image()) {
            let out = resample_to_spacing(&img, img.spacing_mm()).unwrap();
            prop_assert_eq!(out, img);
        }

        #[test]
        fn resample_stays_in_unit_range(img in arb_image(), target in 0.03f64..0.5) {
            let out = resample_to_spacing(&img, target).unwrap();
            prop_assert!(out.pixels().iter().all(|v| (0.0..=1.0).contains(v)));
        }

        #[test]
        fn matching_bounded_and_background_preserving(
            img in arb_image(),
            raw_ref in proptest::collection::vec(0u32..5, 2..40),
        ) {
            let total: u32 = raw_ref.iter().sum::<u32>() + 1;
            let mut acc = 0;
            let mut cdf: Vec<f64> = raw_ref.iter().map(|c| { acc += c; acc as f64 / total as f64 }).collect();
            *cdf.last_mut().unwrap() = 1.0;
            let r = ReferenceCdf::from_cdf(cdf).unwrap();
            let mut px = img.pixels().to_vec();
            for (i, p) in px.iter_mut().enumerate() { if i % 3 == 0 { *p = 0.0; } }
            let img = Image::new(img.width(), img.height(), 0.1, px).unwrap();
            let out = histogram_match(&img, &r);
            for (a, b) in img.pixels().iter().zip(out.pixels()) {
                prop_assert!((0.0..=1.0).contains(b));
                if *a == 0.0 { prop_assert_eq!(*b, 0.0); }
            }
        }

        /// Images built from distinct bin centers: any strictly increasing
        /// relabeling of those bins leaves the matched multiset unchanged.
        #[test]
        fn matching_depends_only_on_ranks(
            bins_used in proptest::collection::btree_set(1usize..32, 2..10),
            picks in proptest::collection::vec(0usize..100, 16),
            shift in 0usize..16,
        ) {
            let bins = 64;
            let levels: Vec<usize> = bins_used.into_iter().collect();
            let relabeled: Vec<usize> = levels.iter().enumerate().map(|(i, &b)| b * 2 - 1 + shift.min(2 * i)).collect();
            prop_assume!(relabeled.windows(2).all(|w| w[0] < w[1]) && *relabeled.last().unwrap() < bins);
            let idx: Vec<usize> = picks.iter().map(|p| p % levels.len()).collect();
            let a = Image::new(4, 4, 0.1, idx.iter().map(|&i| bin_center(levels[i], bins)).collect()).unwrap();
            let b = Image::new(4, 4, 0.1, idx.iter().map(|&i| bin_center(relabeled[i], bins)).collect()).unwrap();
            let r = ReferenceCdf::from_cdf((1..=bins).map(|i| libm::pow(i as f64 / bins as f64, 2.0)).collect()).unwrap();
            let mut oa = histogram_match(&a, &r).into_pixels();
            let mut ob = histogram_match(&b, &r).into_pixels();
            oa.sort_by(f64::total_cmp);
            ob.sort_by(f64::total_cmp);
            prop_assert_eq!(oa, ob);
        }
    }
}
