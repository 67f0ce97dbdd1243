use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::image::Image;
use crate::segmentation::Mask;

/// Default quantization depth.
pub const DEFAULT_LEVELS: usize = 32;

pub const STATS: [&str; 5] = ["contrast", "correlation", "energy", "homogeneity", "entropy"];

/// Neighbour offsets `(dx, dy)` at distance 1 for 0, 45, 90 and 135 degrees.
pub const OFFSETS: [(isize, isize); 4] = [(1, 0), (1, -1), (0, -1), (-1, -1)];

/// Symmetric co-occurrence matrix pooled over [`OFFSETS`].
#[derive(Debug, Clone, PartialEq)]
pub struct GlcmMatrix {
    levels: usize,
    counts: Vec<u64>,
    total: u64,
}

impl GlcmMatrix {
    pub fn levels(&self) -> usize {
        self.levels
    }

    /// Raw pair counts, both orders included.
    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    /// Joint frequency of the level pair `(i, j)`.
    pub fn p(&self, i: usize, j: usize) -> f64 {
        self.counts[i * self.levels + j] as f64 / self.total as f64
    }

    pub fn probabilities(&self) -> Vec<f64> {
        let t = self.total as f64;
        self.counts.iter().map(|&c| c as f64 / t).collect()
    }
}

/// Quantize ROI pixels into `levels` equal-width bins over the ROI range.
/// Pixels outside the ROI get `None`.
pub fn quantize(img: &Image, roi: &Mask, levels: usize) -> Vec<Option<usize>> {
    let px = img.pixels();
    let (lo, hi) = roi
        .bits()
        .iter()
        .zip(px)
        .filter(|(&b, _)| b)
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (_, &v)| (lo.min(v), hi.max(v)));
    let range = hi - lo;
    roi.bits()
        .iter()
        .zip(px)
        .map(|(&b, &v)| {
            b.then(|| {
                if range > 0.0 {
                    (libm::floor((v - lo) / range * levels as f64) as usize).min(levels - 1)
                } else {
                    0
                }
            })
        })
        .collect()
}

pub fn glcm(img: &Image, roi: &Mask, levels: usize) -> Result<GlcmMatrix> {
    if levels < 2 {
        return Err(Error::invalid("GLCM needs at least two gray levels"));
    }
    if roi.is_empty() {
        return Err(Error::Degenerate);
    }
    let q = quantize(img, roi, levels);
    let (w, h) = (img.width() as isize, img.height() as isize);
    let mut counts = vec![0u64; levels * levels];
    let mut total = 0u64;
    for y in 0..h {
        for x in 0..w {
            let Some(a) = q[(y * w + x) as usize] else {
                continue;
            };
            for &(dx, dy) in &OFFSETS {
                let (nx, ny) = (x + dx, y + dy);
                if nx < 0 || ny < 0 || nx >= w || ny >= h {
                    continue;
                }
                if let Some(b) = q[(ny * w + nx) as usize] {
                    counts[a * levels + b] += 1;
                    counts[b * levels + a] += 1;
                    total += 2;
                }
            }
        }
    }
    if total == 0 {
        return Err(Error::Degenerate);
    }
    Ok(GlcmMatrix {
        levels,
        counts,
        total,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Haralick {
    pub contrast: f64,
    pub correlation: f64,
    pub energy: f64,
    pub homogeneity: f64,
    pub entropy: f64,
}

impl Haralick {
    pub fn to_array(&self) -> [f64; 5] {
        [
            self.contrast,
            self.correlation,
            self.energy,
            self.homogeneity,
            self.entropy,
        ]
    }
}

/// Contrast, correlation, energy, homogeneity and entropy (bits).
/// Correlation is 0 when the marginal variance vanishes.
pub fn glcm_features(g: &GlcmMatrix) -> Haralick {
    let n = g.levels;
    let p = g.probabilities();
    let mut mu = 0.0;
    for i in 0..n {
        for j in 0..n {
            mu += i as f64 * p[i * n + j];
        }
    }
    let mut var = 0.0;
    let mut out = Haralick::default();
    for i in 0..n {
        for j in 0..n {
            let pij = p[i * n + j];
            if pij == 0.0 {
                continue;
            }
            let (fi, fj) = (i as f64, j as f64);
            let d = fi - fj;
            var += (fi - mu) * (fi - mu) * pij;
            out.contrast += pij * d * d;
            out.correlation += pij * (fi - mu) * (fj - mu);
            out.energy += pij * pij;
            out.homogeneity += pij / (1.0 + d.abs());
            out.entropy -= pij * libm::log2(pij);
        }
    }
    out.correlation = if var > 1e-15 { out.correlation / var } else { 0.0 };
    out
}
