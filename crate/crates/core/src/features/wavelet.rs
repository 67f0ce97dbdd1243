//! Single-level orthonormal 2-D Haar transform.
//!
//! For a 2x2 block `[a b; c d]` the four coefficients are
//! `(a+b+c+d)/2`, `(a-b+c-d)/2`, `(a+b-c-d)/2` and `(a-b-c+d)/2`: the
//! approximation, the horizontal-direction detail (responds to vertical
//! edges), the vertical-direction detail and the diagonal detail. Odd
//! dimensions are extended by repeating the last row or column.

use alloc::vec::Vec;

use crate::error::Result;
use crate::features::first_order::{first_order_features, FirstOrder};
use crate::image::Image;
use crate::segmentation::Mask;

pub const SUBBANDS: [&str; 4] = ["wavA", "wavH", "wavV", "wavD"];

#[derive(Debug, Clone, PartialEq)]
pub struct WaveletSubbands {
    pub width: usize,
    pub height: usize,
    pub approx: Vec<f64>,
    pub horiz: Vec<f64>,
    pub vert: Vec<f64>,
    pub diag: Vec<f64>,
}

impl WaveletSubbands {
    pub fn bands(&self) -> [&[f64]; 4] {
        [&self.approx, &self.horiz, &self.vert, &self.diag]
    }

    pub fn energy(&self) -> f64 {
        self.bands().iter().flat_map(|b| b.iter()).map(|v| v * v).sum()
    }
}

pub fn wavelet_decompose(img: &Image) -> WaveletSubbands {
    let (w, h) = (img.width(), img.height());
    let (cw, ch) = (w.div_ceil(2), h.div_ceil(2));
    let n = cw * ch;
    let mut out = WaveletSubbands {
        width: cw,
        height: ch,
        approx: Vec::with_capacity(n),
        horiz: Vec::with_capacity(n),
        vert: Vec::with_capacity(n),
        diag: Vec::with_capacity(n),
    };
    for cy in 0..ch {
        let (y0, y1) = (2 * cy, (2 * cy + 1).min(h - 1));
        for cx in 0..cw {
            let (x0, x1) = (2 * cx, (2 * cx + 1).min(w - 1));
            let (a, b) = (img.get(x0, y0), img.get(x1, y0));
            let (c, d) = (img.get(x0, y1), img.get(x1, y1));
            out.approx.push((a + b + c + d) * 0.5);
            out.horiz.push((a - b + c - d) * 0.5);
            out.vert.push((a + b - c - d) * 0.5);
            out.diag.push((a - b - c + d) * 0.5);
        }
    }
    out
}

/// Coarse mask: a coarse pixel belongs to the ROI if any of its 2x2 fine
/// pixels does.
pub fn downsample_mask(roi: &Mask) -> Mask {
    let (w, h) = (roi.width(), roi.height());
    Mask::from_fn(w.div_ceil(2), h.div_ceil(2), |cx, cy| {
        let (x1, y1) = ((2 * cx + 1).min(w - 1), (2 * cy + 1).min(h - 1));
        roi.get(2 * cx, 2 * cy) || roi.get(x1, 2 * cy) || roi.get(2 * cx, y1) || roi.get(x1, y1)
    })
}

/// First-order statistics of each subband inside the downsampled ROI, in
/// approx / horiz / vert / diag order.
pub fn wavelet_features(sub: &WaveletSubbands, roi: &Mask) -> Result<[FirstOrder; 4]> {
    let coarse = downsample_mask(roi);
    let [a, h, v, d] = sub.bands();
    Ok([
        first_order_features(a, &coarse)?,
        first_order_features(h, &coarse)?,
        first_order_features(v, &coarse)?,
        first_order_features(d, &coarse)?,
    ])
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use alloc::vec::Vec;
    use proptest::prelude::*;

    fn inverse(sub: &WaveletSubbands, w: usize, h: usize) -> Vec<f64> {
        let mut out = vec![0.0; w * h];
        for cy in 0..sub.height {
            for cx in 0..sub.width {
                let k = cy * sub.width + cx;
                let (s, hh, vv, dd) = (sub.approx[k], sub.horiz[k], sub.vert[k], sub.diag[k]);
                let block = [
                    (0, 0, (s + hh + vv + dd) * 0.5),
                    (1, 0, (s - hh + vv - dd) * 0.5),
                    (0, 1, (s + hh - vv - dd) * 0.5),
                    (1, 1, (s - hh - vv + dd) * 0.5),
                ];
                for (dx, dy, val) in block {
                    let (x, y) = (2 * cx + dx, 2 * cy + dy);
                    if x < w && y < h {
                        out[y * w + x] = val;
                    }
                }
            }
        }
        out
    }

    #[test]
    fn constant_image() {
        let img = Image::new(6, 4, 0.1, vec![0.25; 24]).unwrap();
        let s = wavelet_decompose(&img);
        assert!(s.approx.iter().all(|&v| v == 0.5));
        assert!(s.horiz.iter().chain(&s.vert).chain(&s.diag).all(|&v| v == 0.0));
    }

    #[test]
    fn vertical_edge_goes_to_horizontal_detail() {
        // filter-bank oracle on a 4x4 step at column 1: row pairs (0,1) give
        // a high-pass of -1/sqrt2 per row, summed over two rows / sqrt2
        let img = Image::from_fn(4, 4, 0.1, |x, _| if x >= 1 { 1.0 } else { 0.0 }).unwrap();
        let s = wavelet_decompose(&img);
        assert_eq!(s.horiz, vec![-1.0, 0.0, -1.0, 0.0]);
        assert!(s.vert.iter().all(|&v| v == 0.0));
        assert!(s.diag.iter().all(|&v| v == 0.0));
        let e_h: f64 = s.horiz.iter().map(|v| v * v).sum();
        let e_v: f64 = s.vert.iter().map(|v| v * v).sum();
        assert!(e_h > 0.0 && e_v == 0.0);
    }

    #[test]
    fn any_rule_downsampling() {
        let roi = Mask::from_fn(7, 5, |x, y| x == 3 && y == 2);
        let c = downsample_mask(&roi);
        assert_eq!((c.width(), c.height()), (4, 3));
        assert_eq!(c.count(), 1);
        assert!(c.get(1, 1));
    }

    #[test]
    fn constant_image_detail_stats_are_degenerate() {
        let img = Image::new(8, 8, 0.1, vec![0.4; 64]).unwrap();
        let s = wavelet_decompose(&img);
        let f = wavelet_features(&s, &Mask::full(8, 8)).unwrap();
        for band in &f[1..] {
            assert_eq!(band.to_array(), [0.0; 7]);
        }
        assert!((f[0].mean - 0.8).abs() < 1e-15);
    }

    #[test]
    fn approx_mean_is_twice_input_mean() {
        let px: Vec<f64> = (0..64).map(|i| libm::sin(i as f64 * 1.7) * 0.5 + 0.5).collect();
        let img = Image::new(8, 8, 0.1, px.clone()).unwrap();
        let f = wavelet_features(&wavelet_decompose(&img), &Mask::full(8, 8)).unwrap();
        let mean = px.iter().sum::<f64>() / 64.0;
        assert!((f[0].mean - 2.0 * mean).abs() < 1e-9);
    }

    proptest! {
        #[test]
        fn energy_and_inverse(w in 1usize..=24, h in 1usize..=24, seed in proptest::collection::vec(-1.0f64..1.0, 576)) {
            let img = Image::new(w, h, 0.1, seed[..w * h].to_vec()).unwrap();
            let s = wavelet_decompose(&img);
            prop_assert_eq!((s.width, s.height), (w.div_ceil(2), h.div_ceil(2)));
            let rec = inverse(&s, w, h);
            let norm: f64 = img.pixels().iter().map(|v| v * v).sum();
            let err: f64 = rec.iter().zip(img.pixels()).map(|(a, b)| (a - b) * (a - b)).sum();
            prop_assert!(err <= 1e-18 * norm.max(1e-300) + 1e-30);
            if w % 2 == 0 && h % 2 == 0 {
                prop_assert!((s.energy() - norm).abs() <= 1e-9 * norm);
            }
        }
    }
}
