//! Synthetic mammography cohort: images, manifest and DL scores.

use std::path::{Path, PathBuf};

use anyhow::{ensure, Context, Result};
use rand::seq::SliceRandom;
use rand::RngExt;
use radens_core::image::{Laterality, ViewKind};
use radens_core::learners::logistic::sigmoid;
use radens_core::rng::{standard_normal, stream_rng, Stream};
use rayon::prelude::*;

use crate::io::{write_dl_scores, write_pgm16};
use crate::manifest::{manifest_line, ExamRecord, HEADER};

#[derive(Debug, Clone, PartialEq)]
pub struct PhantomSpec {
    pub count: usize,
    pub positive_fraction: f64,
    pub years: Vec<i32>,
    /// Lesion peak as a fraction of the tissue intensity scale.
    pub lesion_contrast: f64,
    /// Texture amplitude as a fraction of the tissue intensity scale.
    pub texture_sigma: f64,
    pub width: usize,
    pub height: usize,
    pub pixel_spacing_mm: f64,
    /// Mean of the per-view DL logit for views that contain a lesion; other
    /// views draw from N(0, 1).
    pub dl_separation: f64,
    pub seed: u64,
}

impl Default for PhantomSpec {
    fn default() -> Self {
        PhantomSpec {
            count: 600,
            positive_fraction: 0.1,
            years: vec![2017, 2018, 2019],
            lesion_contrast: 0.5,
            texture_sigma: 0.25,
            width: 160,
            height: 128,
            pixel_spacing_mm: 0.2,
            dl_separation: 1.15,
            seed: 7,
        }
    }
}

pub const VIEWS: [(Laterality, ViewKind); 4] = [
    (Laterality::Left, ViewKind::Cc),
    (Laterality::Left, ViewKind::Mlo),
    (Laterality::Right, ViewKind::Cc),
    (Laterality::Right, ViewKind::Mlo),
];

const TISSUE_BASE: f64 = 18000.0;
const TISSUE_SCALE: f64 = 16000.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Lesion {
    /// Center in units of the breast semi-axes (chest wall at u = 0).
    pub u: f64,
    pub v: f64,
    pub radius_px: f64,
    pub aspect: f64,
    pub angle: f64,
}

/// Everything random about one view, drawn up front.
#[derive(Debug, Clone, PartialEq)]
pub struct ViewPlan {
    pub semi_x: f64,
    pub semi_y: f64,
    pub noise: Vec<f64>,
    pub marker: bool,
    pub lesion: Option<Lesion>,
    pub mirror: bool,
}

fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let r = (3.0 * sigma).ceil() as isize;
    let k: Vec<f64> = (-r..=r).map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp()).collect();
    let s: f64 = k.iter().sum();
    k.into_iter().map(|v| v / s).collect()
}

/// Separable blur with edge clamping, rescaled to unit variance.
fn smooth_field(noise: &[f64], w: usize, h: usize, sigma: f64) -> Vec<f64> {
    let k = gaussian_kernel(sigma);
    let r = (k.len() / 2) as isize;
    let clamp = |v: isize, n: usize| v.clamp(0, n as isize - 1) as usize;
    let mut tmp = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            tmp[y * w + x] = k
                .iter()
                .enumerate()
                .map(|(i, kv)| kv * noise[y * w + clamp(x as isize + i as isize - r, w)])
                .sum();
        }
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            out[y * w + x] = k
                .iter()
                .enumerate()
                .map(|(i, kv)| kv * tmp[clamp(y as isize + i as isize - r, h) * w + x])
                .sum();
        }
    }
    let n = out.len() as f64;
    let mean = out.iter().sum::<f64>() / n;
    let sd = (out.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n).sqrt().max(1e-12);
    out.into_iter().map(|v| (v - mean) / sd).collect()
}

pub fn plan_view(spec: &PhantomSpec, rng: &mut impl rand::Rng, kind: ViewKind, laterality: Laterality, lesion: bool) -> ViewPlan {
    let (w, h) = (spec.width, spec.height);
    let stretch = if kind == ViewKind::Mlo { 1.06 } else { 1.0 };
    let semi_x = w as f64 * rng.random_range(0.78..0.92);
    let semi_y = h as f64 * rng.random_range(0.38..0.44) * stretch;
    let noise: Vec<f64> = (0..w * h).map(|_| standard_normal(rng)).collect();
    let marker = rng.random_bool(0.1);
    let lesion = lesion.then(|| Lesion {
        u: rng.random_range(0.15..0.55),
        v: rng.random_range(-0.45..0.45),
        radius_px: rng.random_range(12.0..20.0),
        aspect: rng.random_range(0.6..1.0),
        angle: rng.random_range(0.0..std::f64::consts::PI),
    });
    ViewPlan {
        semi_x,
        semi_y,
        noise,
        marker,
        lesion,
        mirror: laterality == Laterality::Left,
    }
}

/// Raw 16-bit intensities: background exactly 0, tissue at least 1.
pub fn render_view(spec: &PhantomSpec, plan: &ViewPlan) -> Vec<u16> {
    let (w, h) = (spec.width, spec.height);
    let texture = smooth_field(&plan.noise, w, h, 2.5);
    let cy = h as f64 / 2.0;
    let inside = |x: f64, y: f64| {
        let (u, v) = (x / plan.semi_x, (y - cy) / plan.semi_y);
        u * u + v * v <= 1.0
    };
    let mut out = vec![0u16; w * h];
    for y in 0..h {
        for x in 0..w {
            // 4x4 supersampled coverage of the half ellipse
            let mut hits = 0;
            for sy in 0..4 {
                for sx in 0..4 {
                    if inside(x as f64 + (sx as f64 + 0.5) / 4.0, y as f64 + (sy as f64 + 0.5) / 4.0) {
                        hits += 1;
                    }
                }
            }
            if hits == 0 {
                continue;
            }
            let (cx_, cy_) = (x as f64 + 0.5, y as f64 + 0.5);
            let (u, v) = (cx_ / plan.semi_x, (cy_ - cy) / plan.semi_y);
            let r2 = (u * u + v * v).min(1.0);
            let mut value = TISSUE_BASE
                + TISSUE_SCALE * (0.45 * (1.0 - r2).sqrt() + spec.texture_sigma * texture[y * w + x]);
            if let Some(l) = plan.lesion {
                let (lx, ly) = (l.u * plan.semi_x, cy + l.v * plan.semi_y);
                let (dx, dy) = (cx_ - lx, cy_ - ly);
                let (c, s) = (l.angle.cos(), l.angle.sin());
                let a = (c * dx + s * dy) / l.radius_px;
                let b = (-s * dx + c * dy) / (l.radius_px * l.aspect);
                let d2 = a * a + b * b;
                if d2 < 1.0 {
                    value += TISSUE_SCALE * spec.lesion_contrast * (1.0 - d2) * (1.0 - d2).sqrt();
                }
            }
            let value = value.max(1.0) * hits as f64 / 16.0;
            out[y * w + x] = value.round().clamp(1.0, 65535.0) as u16;
        }
    }
    if plan.marker {
        let (mx, my) = (w as f64 - 6.0, 5.0);
        for y in 0..h.min(12) {
            for x in w.saturating_sub(12)..w {
                let (dx, dy) = (x as f64 + 0.5 - mx, y as f64 + 0.5 - my);
                if dx * dx + dy * dy <= 4.0 && out[y * w + x] == 0 {
                    out[y * w + x] = 60000;
                }
            }
        }
    }
    if plan.mirror {
        for row in out.chunks_exact_mut(w) {
            row.reverse();
        }
    }
    out
}

#[derive(Debug, Clone)]
pub struct PhantomPatient {
    pub patient_id: String,
    pub year: i32,
    pub label: bool,
    pub age_years: f64,
    /// Per view in [`VIEWS`] order.
    pub lesion_views: [bool; 4],
    pub dl_scores: [f64; 4],
}

/// Labels, years and ages for the cohort; images are planned per patient.
pub fn plan_cohort(spec: &PhantomSpec) -> Result<Vec<PhantomPatient>> {
    ensure!(spec.count >= 1, "phantom count must be at least 1");
    ensure!((0.0..=1.0).contains(&spec.positive_fraction), "positive_fraction must be in [0, 1]");
    ensure!(!spec.years.is_empty(), "at least one year required");
    ensure!(spec.width >= 16 && spec.height >= 16, "image size must be at least 16x16");
    let positives = (spec.count as f64 * spec.positive_fraction).round() as usize;
    let mut order: Vec<usize> = (0..spec.count).collect();
    order.shuffle(&mut stream_rng(spec.seed, Stream::Phantom, u64::MAX));
    let mut label = vec![false; spec.count];
    let mut year = vec![0; spec.count];
    let (mut np, mut nn) = (0, 0);
    for (rank, &i) in order.iter().enumerate() {
        label[i] = rank < positives;
        let slot = if label[i] { &mut np } else { &mut nn };
        year[i] = spec.years[*slot % spec.years.len()];
        *slot += 1;
    }
    Ok((0..spec.count)
        .map(|i| {
            let mut rng = stream_rng(spec.seed, Stream::Phantom, i as u64);
            let age_years = (rng.random_range(40.0..75.0f64) * 10.0).round() / 10.0;
            let mut lesion_views = [false; 4];
            if label[i] {
                let k = rng.random_range(1..=4);
                let mut idx = [0, 1, 2, 3];
                idx.shuffle(&mut rng);
                for &v in &idx[..k] {
                    lesion_views[v] = true;
                }
            }
            let mut dl_scores = [0.0; 4];
            for v in 0..4 {
                let mu = if lesion_views[v] { spec.dl_separation } else { 0.0 };
                dl_scores[v] = sigmoid(mu + standard_normal(&mut rng));
            }
            PhantomPatient {
                patient_id: format!("PH{i:04}"),
                year: year[i],
                label: label[i],
                age_years,
                lesion_views,
                dl_scores,
            }
        })
        .collect())
}

/// Per-view image plans for one patient, seeded independently of others.
pub fn plan_patient_views(spec: &PhantomSpec, index: usize, p: &PhantomPatient) -> Vec<ViewPlan> {
    let mut rng = stream_rng(spec.seed, Stream::Phantom, (1 << 32) + index as u64);
    VIEWS
        .iter()
        .zip(p.lesion_views)
        .map(|(&(lat, kind), lesion)| plan_view(spec, &mut rng, kind, lat, lesion))
        .collect()
}

pub fn image_name(p: &PhantomPatient, lat: Laterality, kind: ViewKind) -> String {
    format!("{}_{}_{}.pgm", p.patient_id, lat.code(), kind.code())
}

#[derive(Debug, Clone)]
pub struct PhantomOutput {
    pub manifest: PathBuf,
    pub dl_scores: PathBuf,
    pub patients: Vec<PhantomPatient>,
}

pub fn generate_phantoms(spec: &PhantomSpec, out_dir: &Path) -> Result<PhantomOutput> {
    let patients = plan_cohort(spec)?;
    let image_dir = out_dir.join("images");
    std::fs::create_dir_all(&image_dir).with_context(|| format!("creating {}", image_dir.display()))?;
    patients
        .par_iter()
        .enumerate()
        .try_for_each(|(i, p)| -> Result<()> {
            for (plan, &(lat, kind)) in plan_patient_views(spec, i, p).iter().zip(&VIEWS) {
                let pixels = render_view(spec, plan);
                write_pgm16(&image_dir.join(image_name(p, lat, kind)), spec.width, spec.height, &pixels)?;
            }
            Ok(())
        })?;

    let manifest = out_dir.join("manifest.csv");
    let mut text = HEADER.join(",") + "\n";
    let mut dl = Vec::new();
    for p in &patients {
        for (v, &(lat, kind)) in VIEWS.iter().enumerate() {
            let rec = ExamRecord {
                patient_id: p.patient_id.clone(),
                year: p.year,
                laterality: lat,
                view_kind: kind,
                age_years: p.age_years,
                label: p.label,
                pixel_spacing_mm: spec.pixel_spacing_mm,
                image_path: PathBuf::from("images").join(image_name(p, lat, kind)),
            };
            text.push_str(&manifest_line(&rec));
            text.push('\n');
            dl.push((rec.view_key(), p.year, p.dl_scores[v]));
        }
    }
    std::fs::write(&manifest, text).with_context(|| format!("writing {}", manifest.display()))?;
    let dl_path = out_dir.join("dl_scores.csv");
    write_dl_scores(&dl_path, &dl)?;
    Ok(PhantomOutput {
        manifest,
        dl_scores: dl_path,
        patients,
    })
}
