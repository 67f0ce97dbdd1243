use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::segmentation::Mask;

/// Histogram resolution for first-order entropy.
pub const ENTROPY_BINS: usize = 64;

pub const STATS: [&str; 7] = ["mean", "stdev", "skewness", "kurtosis", "entropy", "p10", "p90"];

/// Intensity statistics of one region.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FirstOrder {
    pub mean: f64,
    pub stdev: f64,
    pub skewness: f64,
    /// Excess kurtosis.
    pub kurtosis: f64,
    /// Shannon entropy in bits.
    pub entropy: f64,
    pub p10: f64,
    pub p90: f64,
}

impl FirstOrder {
    pub fn to_array(&self) -> [f64; 7] {
        [
            self.mean,
            self.stdev,
            self.skewness,
            self.kurtosis,
            self.entropy,
            self.p10,
            self.p90,
        ]
    }
}

/// Statistics of the pixels of `pixels` selected by `roi` (same raster).
pub fn first_order_features(pixels: &[f64], roi: &Mask) -> Result<FirstOrder> {
    let values: Vec<f64> = roi
        .bits()
        .iter()
        .zip(pixels)
        .filter_map(|(&b, &v)| b.then_some(v))
        .collect();
    first_order_from_values(values)
}

pub fn first_order_from_values(mut values: Vec<f64>) -> Result<FirstOrder> {
    if values.is_empty() {
        return Err(Error::Degenerate);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let (lo, hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    values.sort_unstable_by(f64::total_cmp);
    let p10 = percentile(&values, 0.10);
    let p90 = percentile(&values, 0.90);
    if hi <= lo {
        return Ok(FirstOrder {
            mean,
            p10,
            p90,
            ..FirstOrder::default()
        });
    }

    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for &v in &values {
        let d = v - mean;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    m2 /= n;
    m3 /= n;
    m4 /= n;
    let (skewness, kurtosis) = if m2 > 0.0 {
        (m3 / libm::pow(m2, 1.5), m4 / (m2 * m2) - 3.0)
    } else {
        (0.0, 0.0)
    };

    let mut hist = [0u64; ENTROPY_BINS];
    let range = hi - lo;
    for &v in &values {
        let b = libm::floor((v - lo) / range * ENTROPY_BINS as f64) as usize;
        hist[b.min(ENTROPY_BINS - 1)] += 1;
    }
    let entropy = -hist
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            p * libm::log2(p)
        })
        .sum::<f64>();

    Ok(FirstOrder {
        mean,
        stdev: libm::sqrt(m2),
        skewness,
        kurtosis,
        entropy,
        p10,
        p90,
    })
}

/// Linear interpolation between closest ranks, `q` in [0, 1].
fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let i = libm::floor(pos) as usize;
    let frac = pos - i as f64;
    match sorted.get(i + 1) {
        Some(&next) if frac > 0.0 => sorted[i] + (next - sorted[i]) * frac,
        _ => sorted[i],
    }
}
