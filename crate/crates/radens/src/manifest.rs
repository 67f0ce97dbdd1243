//! Exam manifest: one row per view image.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use radens_core::image::{Laterality, ViewKind, ViewMeta};

pub const HEADER: [&str; 8] = [
    "patient_id",
    "year",
    "laterality",
    "view",
    "age",
    "label",
    "pixel_spacing_mm",
    "image_path",
];

#[derive(Debug, Clone, PartialEq)]
pub struct ExamRecord {
    pub patient_id: String,
    pub year: i32,
    pub laterality: Laterality,
    pub view_kind: ViewKind,
    pub age_years: f64,
    pub label: bool,
    pub pixel_spacing_mm: f64,
    /// As written in the manifest; relative paths resolve against the
    /// manifest's directory.
    pub image_path: PathBuf,
}

impl ExamRecord {
    pub fn meta(&self) -> ViewMeta {
        ViewMeta {
            laterality: self.laterality,
            view_kind: self.view_kind,
            age_years: self.age_years,
            year: self.year,
        }
    }

    /// `(patient_id, laterality, view)` identifies a view across files.
    pub fn view_key(&self) -> ViewKey {
        ViewKey {
            patient_id: self.patient_id.clone(),
            laterality: self.laterality.code(),
            view: self.view_kind.code(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ViewKey {
    pub patient_id: String,
    pub laterality: &'static str,
    pub view: &'static str,
}

impl std::fmt::Display for ViewKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}/{}/{}", self.patient_id, self.laterality, self.view)
    }
}

pub fn parse_laterality(s: &str) -> Result<Laterality> {
    Laterality::parse(s).with_context(|| format!("laterality must be L or R, got `{s}`"))
}

pub fn parse_view(s: &str) -> Result<ViewKind> {
    ViewKind::parse(s).with_context(|| format!("view must be CC or MLO, got `{s}`"))
}

pub fn parse_label(s: &str) -> Result<bool> {
    match s {
        "0" => Ok(false),
        "1" => Ok(true),
        _ => bail!("label must be 0 or 1, got `{s}`"),
    }
}

#[derive(Debug, Clone)]
pub struct Manifest {
    pub base_dir: PathBuf,
    pub records: Vec<ExamRecord>,
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading manifest {}", path.display()))?;
        let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let records = parse_manifest(&text).with_context(|| format!("manifest {}", path.display()))?;
        Ok(Manifest { base_dir, records })
    }

    pub fn image_path(&self, r: &ExamRecord) -> PathBuf {
        if r.image_path.is_absolute() {
            r.image_path.clone()
        } else {
            self.base_dir.join(&r.image_path)
        }
    }
}

/// Row numbers in errors count the header as row 1.
pub fn parse_manifest(text: &str) -> Result<Vec<ExamRecord>> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let header = reader.headers().context("reading header")?.clone();
    if header.iter().collect::<Vec<_>>() != HEADER {
        bail!("header must be `{}`, got `{}`", HEADER.join(","), header.iter().collect::<Vec<_>>().join(","));
    }
    let mut records = Vec::new();
    let mut seen: HashMap<ViewKey, usize> = HashMap::new();
    let mut patients: HashMap<String, (usize, bool, i32)> = HashMap::new();
    for (i, row) in reader.records().enumerate() {
        let line = i + 2;
        let row = row.with_context(|| format!("row {line}"))?;
        let field = |k: usize| row.get(k).unwrap_or("").trim();
        let rec = (|| -> Result<ExamRecord> {
            let patient_id = field(0).to_string();
            if patient_id.is_empty() {
                bail!("empty patient_id");
            }
            let age_years: f64 = field(4).parse().with_context(|| format!("bad age `{}`", field(4)))?;
            let pixel_spacing_mm: f64 = field(6)
                .parse()
                .with_context(|| format!("bad pixel_spacing_mm `{}`", field(6)))?;
            if !(pixel_spacing_mm > 0.0 && pixel_spacing_mm.is_finite()) {
                bail!("pixel_spacing_mm must be positive");
            }
            if !age_years.is_finite() {
                bail!("age must be finite");
            }
            if field(7).is_empty() {
                bail!("empty image_path");
            }
            Ok(ExamRecord {
                patient_id,
                year: field(1).parse().with_context(|| format!("bad year `{}`", field(1)))?,
                laterality: parse_laterality(field(2))?,
                view_kind: parse_view(field(3))?,
                age_years,
                label: parse_label(field(5))?,
                pixel_spacing_mm,
                image_path: PathBuf::from(field(7)),
            })
        })()
        .with_context(|| format!("row {line}"))?;

        if let Some(first) = seen.insert(rec.view_key(), line) {
            bail!("rows {first} and {line}: duplicate view {}", rec.view_key());
        }
        match patients.get(&rec.patient_id) {
            Some(&(first, label, _)) if label != rec.label => {
                bail!("rows {first} and {line}: patient {} has inconsistent labels", rec.patient_id)
            }
            Some(&(first, _, year)) if year != rec.year => {
                bail!("rows {first} and {line}: patient {} has inconsistent years", rec.patient_id)
            }
            Some(_) => {}
            None => {
                patients.insert(rec.patient_id.clone(), (line, rec.label, rec.year));
            }
        }
        records.push(rec);
    }
    Ok(records)
}

pub fn manifest_line(r: &ExamRecord) -> String {
    format!(
        "{},{},{},{},{},{},{},{}",
        r.patient_id,
        r.year,
        r.laterality.code(),
        r.view_kind.code(),
        r.age_years,
        r.label as u8,
        r.pixel_spacing_mm,
        r.image_path.display()
    )
}
