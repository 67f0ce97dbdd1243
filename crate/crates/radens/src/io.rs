//! File formats: images, reference CDF, feature cache, DL scores.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use image::ImageReader;
use radens_core::features::{feature_names, FEATURE_COUNT};
use radens_core::image::{Image, ReferenceCdf};

use crate::manifest::{parse_label, parse_laterality, parse_view, ViewKey};

/// Read a PGM (8/16-bit) or PNG as raw gray levels.
pub fn load_image(path: &Path, spacing_mm: f64) -> Result<Image> {
    let img = ImageReader::open(path)
        .with_context(|| format!("opening {}", path.display()))?
        .with_guessed_format()?
        .decode()
        .with_context(|| format!("decoding {}", path.display()))?;
    let gray = img.into_luma16();
    let (w, h) = gray.dimensions();
    let pixels = gray.into_raw().into_iter().map(f64::from).collect();
    Ok(Image::new(w as usize, h as usize, spacing_mm, pixels)?)
}

/// Binary 16-bit PGM (the `image` encoder only writes 8-bit graymaps).
pub fn write_pgm16(path: &Path, width: usize, height: usize, pixels: &[u16]) -> Result<()> {
    ensure!(pixels.len() == width * height, "pixel count mismatch");
    let mut out = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    write!(out, "P5\n{width} {height}\n65535\n")?;
    for v in pixels {
        out.write_all(&v.to_be_bytes())?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_png8(path: &Path, width: usize, height: usize, pixels: &[u8]) -> Result<()> {
    let buf = image::GrayImage::from_raw(width as u32, height as u32, pixels.to_vec()).context("label map size")?;
    buf.save_with_format(path, image::ImageFormat::Png)
        .with_context(|| format!("writing {}", path.display()))
}

fn check_header(reader: &mut csv::Reader<File>, want: &[&str], what: &str) -> Result<()> {
    let got: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    if got != want {
        bail!("{what}: header must be `{}`, got `{}`", want.join(","), got.join(","));
    }
    Ok(())
}

fn open_csv(path: &Path) -> Result<csv::Reader<File>> {
    csv::ReaderBuilder::new()
        .from_path(path)
        .with_context(|| format!("opening {}", path.display()))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    Ok(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

fn num<T: std::str::FromStr>(s: &str, what: &str, line: usize) -> Result<T> {
    s.trim()
        .parse()
        .map_err(|_| anyhow::anyhow!("row {line}: cannot parse {what} `{s}`"))
}

pub const REFCDF_HEADER: [&str; 3] = ["bin_index", "bin_center", "cdf"];

pub fn write_reference_cdf(path: &Path, cdf: &ReferenceCdf) -> Result<()> {
    let mut out = create(path)?;
    writeln!(out, "{}", REFCDF_HEADER.join(","))?;
    for (i, c) in cdf.values().iter().enumerate() {
        writeln!(out, "{},{},{}", i, cdf.bin_center(i), c)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_reference_cdf(path: &Path) -> Result<ReferenceCdf> {
    let mut r = open_csv(path)?;
    check_header(&mut r, &REFCDF_HEADER, "reference CDF")?;
    let mut cdf = Vec::new();
    for (i, row) in r.records().enumerate() {
        let row = row?;
        let line = i + 2;
        let idx: usize = num(&row[0], "bin_index", line)?;
        ensure!(idx == i, "row {line}: bin_index {idx} out of order");
        cdf.push(num::<f64>(&row[2], "cdf", line)?);
    }
    ReferenceCdf::from_cdf(cdf).with_context(|| format!("reference CDF {}", path.display()))
}

pub const CACHE_KEY_COLUMNS: [&str; 5] = ["patient_id", "year", "laterality", "view", "label"];

/// One cached view: identifying columns plus its feature values.
#[derive(Debug, Clone, PartialEq)]
pub struct CachedView {
    pub key: ViewKey,
    pub year: i32,
    pub label: bool,
    pub features: Vec<f64>,
}

pub fn cache_header() -> Vec<String> {
    CACHE_KEY_COLUMNS
        .iter()
        .map(|s| s.to_string())
        .chain(feature_names())
        .collect()
}

pub fn write_feature_cache(path: &Path, rows: &[CachedView]) -> Result<()> {
    let mut out = create(path)?;
    writeln!(out, "{}", cache_header().join(","))?;
    for r in rows {
        write!(
            out,
            "{},{},{},{},{}",
            r.key.patient_id, r.year, r.key.laterality, r.key.view, r.label as u8
        )?;
        for v in &r.features {
            write!(out, ",{v}")?;
        }
        writeln!(out)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_feature_cache(path: &Path) -> Result<Vec<CachedView>> {
    let mut r = open_csv(path)?;
    let header = cache_header();
    let want: Vec<&str> = header.iter().map(String::as_str).collect();
    check_header(&mut r, &want, "feature cache")?;
    let mut rows = Vec::new();
    for (i, row) in r.records().enumerate() {
        let row = row?;
        let line = i + 2;
        let features = (5..5 + FEATURE_COUNT)
            .map(|k| num::<f64>(&row[k], "feature", line))
            .collect::<Result<Vec<_>>>()?;
        rows.push(CachedView {
            key: ViewKey {
                patient_id: row[0].to_string(),
                laterality: parse_laterality(&row[2])?.code(),
                view: parse_view(&row[3])?.code(),
            },
            year: num(&row[1], "year", line)?,
            label: parse_label(&row[4]).with_context(|| format!("row {line}"))?,
            features,
        });
    }
    Ok(rows)
}

pub const EXCEPTIONS_HEADER: [&str; 5] = ["patient_id", "year", "laterality", "view", "reason"];

#[derive(Debug, Clone, PartialEq)]
pub struct ViewException {
    pub key: ViewKey,
    pub year: i32,
    pub reason: String,
}

/// `features.csv` keeps its failures in `features.exceptions.csv`.
pub fn exceptions_path(cache: &Path) -> PathBuf {
    let stem = cache.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    cache.with_file_name(format!("{stem}.exceptions.csv"))
}

pub fn write_exceptions(path: &Path, rows: &[ViewException]) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(EXCEPTIONS_HEADER)?;
    for e in rows {
        w.write_record([
            e.key.patient_id.as_str(),
            &e.year.to_string(),
            e.key.laterality,
            e.key.view,
            &e.reason,
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_exceptions(path: &Path) -> Result<Vec<ViewException>> {
    let mut r = open_csv(path)?;
    check_header(&mut r, &EXCEPTIONS_HEADER, "exceptions sidecar")?;
    let mut rows = Vec::new();
    for (i, row) in r.records().enumerate() {
        let row = row?;
        rows.push(ViewException {
            key: ViewKey {
                patient_id: row[0].to_string(),
                laterality: parse_laterality(&row[2])?.code(),
                view: parse_view(&row[3])?.code(),
            },
            year: num(&row[1], "year", i + 2)?,
            reason: row[4].to_string(),
        });
    }
    Ok(rows)
}

pub const DL_HEADER: [&str; 5] = ["patient_id", "year", "laterality", "view", "dl_score"];

pub fn read_dl_scores(path: &Path) -> Result<BTreeMap<ViewKey, f64>> {
    let mut r = open_csv(path)?;
    check_header(&mut r, &DL_HEADER, "DL scores")?;
    let mut scores = BTreeMap::new();
    for (i, row) in r.records().enumerate() {
        let row = row?;
        let line = i + 2;
        let key = ViewKey {
            patient_id: row[0].to_string(),
            laterality: parse_laterality(&row[2])?.code(),
            view: parse_view(&row[3])?.code(),
        };
        let s: f64 = num(&row[4], "dl_score", line)?;
        ensure!((0.0..=1.0).contains(&s), "row {line}: dl_score {s} outside [0, 1]");
        ensure!(scores.insert(key.clone(), s).is_none(), "row {line}: duplicate DL score for {key}");
    }
    Ok(scores)
}

pub fn write_dl_scores(path: &Path, rows: &[(ViewKey, i32, f64)]) -> Result<()> {
    let mut out = create(path)?;
    writeln!(out, "{}", DL_HEADER.join(","))?;
    for (k, year, s) in rows {
        writeln!(out, "{},{},{},{},{}", k.patient_id, year, k.laterality, k.view, s)?;
    }
    out.flush()?;
    Ok(())
}

pub(crate) fn create_writer(path: &Path) -> Result<BufWriter<File>> {
    create(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pgm16_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.pgm");
        let px: Vec<u16> = (0..12).map(|i| i * 5000).collect();
        write_pgm16(&p, 4, 3, &px).unwrap();
        let img = load_image(&p, 0.2).unwrap();
        assert_eq!((img.width(), img.height()), (4, 3));
        assert_eq!(img.pixels(), px.iter().map(|&v| v as f64).collect::<Vec<_>>().as_slice());
        let bytes = std::fs::read(&p).unwrap();
        assert!(bytes.starts_with(b"P5"));
    }

    #[test]
    fn reference_cdf_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("ref.csv");
        let cdf = ReferenceCdf::from_cdf(vec![0.1, 0.35, 0.35, 1.0]).unwrap();
        write_reference_cdf(&p, &cdf).unwrap();
        assert_eq!(read_reference_cdf(&p).unwrap(), cdf);
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(text.starts_with("bin_index,bin_center,cdf\n0,0.125,0.1\n"));
    }

    #[test]
    fn exceptions_path_sits_next_to_cache() {
        assert_eq!(exceptions_path(Path::new("out/features.csv")), PathBuf::from("out/features.exceptions.csv"));
    }

    #[test]
    fn dl_scores_validated() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("dl.csv");
        std::fs::write(&p, "patient_id,year,laterality,view,dl_score\nP1,2016,L,CC,0.3\nP1,2016,L,CC,0.4\n").unwrap();
        assert!(format!("{:#}", read_dl_scores(&p).unwrap_err()).contains("duplicate"));
        std::fs::write(&p, "patient_id,year,laterality,view,dl_score\nP1,2016,L,CC,1.3\n").unwrap();
        assert!(read_dl_scores(&p).is_err());
    }
}
