//! Region-of-interest construction: background, breast, periphery band and
//! the dense / non-dense split of the remaining tissue.

use alloc::collections::VecDeque;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::image::Image;

/// Breast tissue closer than this to the background forms the periphery.
pub const PERIPHERY_MM: f64 = 2.0;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl Mask {
    pub fn new(width: usize, height: usize, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != width * height {
            return Err(Error::DimensionMismatch {
                expected: width * height,
                found: bits.len(),
            });
        }
        Ok(Mask { width, height, bits })
    }

    pub fn empty(width: usize, height: usize) -> Self {
        Mask {
            width,
            height,
            bits: vec![false; width * height],
        }
    }

    pub fn full(width: usize, height: usize) -> Self {
        Mask {
            width,
            height,
            bits: vec![true; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut bits = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                bits.push(f(x, y));
            }
        }
        Mask { width, height, bits }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|&b| b)
    }

    /// Pixels set here and clear in `other`.
    pub fn difference(&self, other: &Mask) -> Mask {
        let bits = self.bits.iter().zip(&other.bits).map(|(&a, &b)| a && !b).collect();
        Mask {
            width: self.width,
            height: self.height,
            bits,
        }
    }

    pub fn intersects(&self, other: &Mask) -> bool {
        self.bits.iter().zip(&other.bits).any(|(&a, &b)| a && b)
    }

    /// Coordinates of set pixels in raster order.
    pub fn coords(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let w = self.width;
        self.bits
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(move |(i, _)| (i % w, i / w))
    }
}

/// Exact squared Euclidean distance (in pixels) from every pixel to the
/// nearest pixel outside a mask; zero outside the mask.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMap {
    width: usize,
    height: usize,
    spacing_mm: f64,
    sq_px: Vec<f64>,
}

impl DistanceMap {
    pub fn squared_px(&self, x: usize, y: usize) -> f64 {
        self.sq_px[y * self.width + x]
    }

    pub fn mm(&self, x: usize, y: usize) -> f64 {
        libm::sqrt(self.squared_px(x, y)) * self.spacing_mm
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }
}

pub fn background_mask(img: &Image) -> Mask {
    Mask {
        width: img.width(),
        height: img.height(),
        bits: img.pixels().iter().map(|&v| v == 0.0).collect(),
    }
}

/// Largest 4-connected component of non-zero pixels. Equal-sized components
/// resolve to the one reached first in raster order.
pub fn breast_mask(img: &Image) -> Mask {
    let (w, h) = (img.width(), img.height());
    let px = img.pixels();
    let mut label = vec![0u32; w * h];
    let mut best = (0usize, 0u32);
    let mut next = 0u32;
    let mut queue = VecDeque::new();
    for start in 0..w * h {
        if px[start] == 0.0 || label[start] != 0 {
            continue;
        }
        next += 1;
        label[start] = next;
        queue.push_back(start);
        let mut size = 0usize;
        while let Some(i) = queue.pop_front() {
            size += 1;
            let (x, y) = (i % w, i / w);
            let mut visit = |j: usize| {
                if px[j] != 0.0 && label[j] == 0 {
                    label[j] = next;
                    queue.push_back(j);
                }
            };
            if x > 0 {
                visit(i - 1);
            }
            if x + 1 < w {
                visit(i + 1);
            }
            if y > 0 {
                visit(i - w);
            }
            if y + 1 < h {
                visit(i + w);
            }
        }
        if size > best.0 {
            best = (size, next);
        }
    }
    Mask {
        width: w,
        height: h,
        bits: label.iter().map(|&l| best.1 != 0 && l == best.1).collect(),
    }
}

/// Lower envelope of parabolas over the finite sites of `f`, evaluated at
/// every index (one-dimensional squared-distance transform).
fn edt_1d(f: &[f64], out: &mut [f64], sites: &mut Vec<usize>, bounds: &mut Vec<f64>) {
    sites.clear();
    bounds.clear();
    let n = f.len();
    for q in 0..n {
        if !f[q].is_finite() {
            continue;
        }
        let qf = q as f64;
        loop {
            match sites.last() {
                None => {
                    sites.push(q);
                    bounds.push(f64::NEG_INFINITY);
                    break;
                }
                Some(&v) => {
                    let vf = v as f64;
                    let s = ((f[q] + qf * qf) - (f[v] + vf * vf)) / (2.0 * qf - 2.0 * vf);
                    if s <= bounds[bounds.len() - 1] {
                        sites.pop();
                        bounds.pop();
                    } else {
                        sites.push(q);
                        bounds.push(s);
                        break;
                    }
                }
            }
        }
    }
    if sites.is_empty() {
        out.iter_mut().for_each(|o| *o = f64::INFINITY);
        return;
    }
    let mut k = 0;
    for (q, o) in out.iter_mut().enumerate() {
        let qf = q as f64;
        while k + 1 < sites.len() && bounds[k + 1] < qf {
            k += 1;
        }
        let d = qf - sites[k] as f64;
        *o = d * d + f[sites[k]];
    }
}

/// Exact Euclidean distance transform of `breast`, treating everything
/// outside the image as background.
pub fn distance_to_background(breast: &Mask, spacing_mm: f64) -> Result<DistanceMap> {
    if !(spacing_mm > 0.0) {
        return Err(Error::invalid("pixel spacing must be positive"));
    }
    let (w, h) = (breast.width, breast.height);
    // one-pixel background frame realizes the border-as-background rule
    let (pw, ph) = (w + 2, h + 2);
    let mut grid = vec![0.0f64; pw * ph];
    for y in 0..h {
        for x in 0..w {
            if breast.get(x, y) {
                grid[(y + 1) * pw + x + 1] = f64::INFINITY;
            }
        }
    }
    let mut sites = Vec::new();
    let mut bounds = Vec::new();
    let mut column = vec![0.0; ph];
    let mut result = vec![0.0; ph];
    for x in 0..pw {
        for y in 0..ph {
            column[y] = grid[y * pw + x];
        }
        edt_1d(&column, &mut result, &mut sites, &mut bounds);
        for y in 0..ph {
            grid[y * pw + x] = result[y];
        }
    }
    let mut row_out = vec![0.0; pw];
    for y in 0..ph {
        let row = &mut grid[y * pw..(y + 1) * pw];
        edt_1d(row, &mut row_out, &mut sites, &mut bounds);
        row.copy_from_slice(&row_out);
    }
    let mut sq_px = Vec::with_capacity(w * h);
    for y in 0..h {
        sq_px.extend_from_slice(&grid[(y + 1) * pw + 1..(y + 1) * pw + 1 + w]);
    }
    Ok(DistanceMap {
        width: w,
        height: h,
        spacing_mm,
        sq_px,
    })
}

/// Breast pixels no farther than [`PERIPHERY_MM`] from the background.
pub fn periphery_band(breast: &Mask, dist: &DistanceMap) -> Mask {
    let limit = PERIPHERY_MM * PERIPHERY_MM + 1e-9;
    let s2 = dist.spacing_mm * dist.spacing_mm;
    Mask {
        width: breast.width,
        height: breast.height,
        bits: breast
            .bits
            .iter()
            .zip(&dist.sq_px)
            .map(|(&b, &d)| b && d * s2 <= limit)
            .collect(),
    }
}

/// Lower median: the `(n - 1) / 2`-th order statistic.
pub(crate) fn lower_median(values: &mut [f64]) -> f64 {
    let mid = (values.len() - 1) / 2;
    let (_, m, _) = values.select_nth_unstable_by(mid, f64::total_cmp);
    *m
}

/// Split the interior at its lower median: strictly brighter pixels are
/// dense, the rest non-dense.
pub fn dense_nondense_split(img: &Image, interior: &Mask) -> Result<(Mask, Mask)> {
    let px = img.pixels();
    let mut values: Vec<f64> = interior
        .bits
        .iter()
        .zip(px)
        .filter_map(|(&b, &v)| b.then_some(v))
        .collect();
    if values.is_empty() {
        return Err(Error::EmptyInterior);
    }
    let m = lower_median(&mut values);
    let pick = |dense: bool| Mask {
        width: interior.width,
        height: interior.height,
        bits: interior
            .bits
            .iter()
            .zip(px)
            .map(|(&b, &v)| b && ((v > m) == dense))
            .collect(),
    };
    Ok((pick(true), pick(false)))
}

/// The five masks describing one view.
#[derive(Debug, Clone, PartialEq)]
pub struct RoiSet {
    pub background: Mask,
    pub breast: Mask,
    pub periphery: Mask,
    pub dense: Mask,
    pub nondense: Mask,
}

impl RoiSet {
    /// Label map: 0 background or discarded, 1 periphery, 2 non-dense, 3 dense.
    pub fn label_map(&self) -> Vec<u8> {
        (0..self.breast.bits.len())
            .map(|i| {
                if self.dense.bits[i] {
                    3
                } else if self.nondense.bits[i] {
                    2
                } else if self.periphery.bits[i] {
                    1
                } else {
                    0
                }
            })
            .collect()
    }
}

pub fn build_roiset(img: &Image) -> Result<RoiSet> {
    let background = background_mask(img);
    let breast = breast_mask(img);
    let dist = distance_to_background(&breast, img.spacing_mm())?;
    let periphery = periphery_band(&breast, &dist);
    let interior = breast.difference(&periphery);
    let (dense, nondense) = dense_nondense_split(img, &interior)?;
    Ok(RoiSet {
        background,
        breast,
        periphery,
        dense,
        nondense,
    })
}
