use core::f64::consts::PI;

use crate::error::{Error, Result};
use crate::segmentation::Mask;

pub const STATS: [&str; 5] = ["area", "perimeter", "compactness", "elongation", "extent"];

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Morphology {
    pub area_mm2: f64,
    pub perimeter_mm: f64,
    pub compactness: f64,
    pub elongation: f64,
    pub extent: f64,
}

impl Morphology {
    pub fn to_array(&self) -> [f64; 5] {
        [
            self.area_mm2,
            self.perimeter_mm,
            self.compactness,
            self.elongation,
            self.extent,
        ]
    }
}

/// Shape and size descriptors of a region.
///
/// Perimeter counts pixel edges shared with non-region pixels (the image
/// border included). Elongation uses second moments of the region treated
/// as unit squares, so each axis variance carries an extra 1/12 and a
/// one-pixel-wide line stays finite.
pub fn morphology_features(roi: &Mask, spacing_mm: f64) -> Result<Morphology> {
    let (w, h) = (roi.width(), roi.height());
    let mut n = 0u64;
    let mut edges = 0u64;
    let (mut sx, mut sy) = (0.0, 0.0);
    let (mut min_x, mut max_x, mut min_y, mut max_y) = (usize::MAX, 0, usize::MAX, 0);
    for (x, y) in roi.coords() {
        n += 1;
        sx += x as f64;
        sy += y as f64;
        min_x = min_x.min(x);
        max_x = max_x.max(x);
        min_y = min_y.min(y);
        max_y = max_y.max(y);
        edges += u64::from(x == 0 || !roi.get(x - 1, y));
        edges += u64::from(x + 1 == w || !roi.get(x + 1, y));
        edges += u64::from(y == 0 || !roi.get(x, y - 1));
        edges += u64::from(y + 1 == h || !roi.get(x, y + 1));
    }
    if n == 0 {
        return Err(Error::Degenerate);
    }
    let nf = n as f64;
    let (mx, my) = (sx / nf, sy / nf);
    let (mut cxx, mut cyy, mut cxy) = (0.0, 0.0, 0.0);
    for (x, y) in roi.coords() {
        let (dx, dy) = (x as f64 - mx, y as f64 - my);
        cxx += dx * dx;
        cyy += dy * dy;
        cxy += dx * dy;
    }
    cxx = cxx / nf + 1.0 / 12.0;
    cyy = cyy / nf + 1.0 / 12.0;
    cxy /= nf;
    let half_trace = (cxx + cyy) / 2.0;
    let root = libm::sqrt(((cxx - cyy) / 2.0) * ((cxx - cyy) / 2.0) + cxy * cxy);
    let (l1, l2) = (half_trace + root, half_trace - root);

    let area = nf * spacing_mm * spacing_mm;
    let perimeter = edges as f64 * spacing_mm;
    let bbox = ((max_x - min_x + 1) * (max_y - min_y + 1)) as f64;
    Ok(Morphology {
        area_mm2: area,
        perimeter_mm: perimeter,
        compactness: 4.0 * PI * area / (perimeter * perimeter),
        elongation: libm::sqrt(l1 / l2),
        extent: nf / bbox,
    })
}
