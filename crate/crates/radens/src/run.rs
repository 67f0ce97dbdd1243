//! Leave-one-year-out run: assemble patients, train folds, write artifacts.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use log::{info, warn};
use radens_core::calibration::{leave_one_year_out, patient_keys, run_fold, Branches, FoldModel, FoldOutcome, PatientInput, PatientScore};
use radens_core::evaluation::roc_curve;
use rayon::prelude::*;

use crate::config::RunConfig;
use crate::io::{create_writer, CachedView, ViewException};
use crate::manifest::{Manifest, ViewKey};
use crate::metrics::{build_metrics, Metrics};

pub const PREDICTIONS_HEADER: &str = "patient_id,year,label,rad_raw,rad_cal,dl_raw,dl_cal,fused";

#[derive(Debug, Clone)]
pub struct Assembled {
    pub patients: Vec<PatientInput>,
    /// Patients left out, with the reason.
    pub dropped: Vec<(String, String)>,
}

/// Join manifest, feature cache and DL scores into per-patient inputs in
/// patient-id order; views within a patient are in (laterality, view) order.
pub fn assemble_patients(
    manifest: &Manifest,
    cache: Option<&[CachedView]>,
    exceptions: &[ViewException],
    dl: Option<&BTreeMap<ViewKey, f64>>,
    branches: Branches,
    allow_missing_dl: bool,
) -> Result<Assembled> {
    let cache_map: BTreeMap<&ViewKey, &CachedView> = cache.unwrap_or_default().iter().map(|c| (&c.key, c)).collect();
    let excluded: BTreeSet<&ViewKey> = exceptions.iter().map(|e| &e.key).collect();
    let mut by_patient: BTreeMap<&str, Vec<&crate::manifest::ExamRecord>> = BTreeMap::new();
    for r in &manifest.records {
        by_patient.entry(r.patient_id.as_str()).or_default().push(r);
    }

    let mut uncovered = Vec::new();
    let mut missing_dl = Vec::new();
    let mut patients = Vec::new();
    let mut dropped = Vec::new();
    for (pid, mut recs) in by_patient {
        recs.sort_by_key(|r| r.view_key());
        let mut views = Vec::new();
        let mut dl_views = Vec::new();
        let mut lacks_dl = false;
        for r in &recs {
            let key = r.view_key();
            if branches.uses_rad() && !excluded.contains(&key) {
                match cache_map.get(&key) {
                    Some(c) if c.label == r.label && c.year == r.year => views.push(c.features.clone()),
                    Some(_) => bail!("feature cache row {key} disagrees with the manifest on label or year"),
                    None => uncovered.push(key.to_string()),
                }
            }
            if branches.uses_dl() {
                match dl.and_then(|d| d.get(&key)) {
                    Some(&s) => dl_views.push(s),
                    None => {
                        lacks_dl = true;
                        missing_dl.push(key.to_string());
                    }
                }
            }
        }
        if lacks_dl {
            dropped.push((pid.to_string(), "missing DL score".to_string()));
            continue;
        }
        if branches.uses_rad() && views.is_empty() {
            dropped.push((pid.to_string(), "no view passed feature extraction".to_string()));
            continue;
        }
        patients.push(PatientInput {
            patient_id: pid.to_string(),
            year: recs[0].year,
            label: recs[0].label,
            views,
            dl_views,
        });
    }
    if !uncovered.is_empty() {
        bail!(
            "{} manifest views are neither in the feature cache nor in its exceptions sidecar: {}",
            uncovered.len(),
            uncovered.join(", ")
        );
    }
    if !missing_dl.is_empty() {
        if !allow_missing_dl {
            bail!(
                "{} manifest views lack a DL score (use --allow-missing-dl to drop those patients): {}",
                missing_dl.len(),
                missing_dl.join(", ")
            );
        }
        warn!("dropping patients with missing DL scores: {}", missing_dl.join(", "));
    }
    for (pid, why) in &dropped {
        warn!("patient {pid} dropped: {why}");
    }
    Ok(Assembled { patients, dropped })
}

/// Folds in ascending year order, trained concurrently.
pub fn run_folds(patients: &[PatientInput], cfg: &RunConfig, branches: Branches) -> Result<Vec<FoldOutcome>> {
    let folds = leave_one_year_out(&patient_keys(patients))?;
    folds
        .par_iter()
        .map(|f| {
            let out = run_fold(patients, f, &cfg.learners, branches, cfg.seed)
                .with_context(|| format!("fold holding out {}", f.held_out_year));
            if out.is_ok() {
                info!("fold {} done ({} test patients)", f.held_out_year, f.test.len());
            }
            out
        })
        .collect()
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_predictions(path: &Path, scores: &[PatientScore]) -> Result<()> {
    let mut out = create_writer(path)?;
    writeln!(out, "{PREDICTIONS_HEADER}")?;
    for s in scores {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            s.patient_id,
            s.year,
            s.label as u8,
            opt(s.rad_raw),
            opt(s.rad_cal),
            opt(s.dl_raw),
            opt(s.dl_cal),
            s.fused
        )?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_roc(path: &Path, scores: &[PatientScore]) -> Result<()> {
    let fused: Vec<f64> = scores.iter().map(|s| s.fused).collect();
    let labels: Vec<bool> = scores.iter().map(|s| s.label).collect();
    let mut out = create_writer(path)?;
    writeln!(out, "threshold,fpr,tpr")?;
    for p in roc_curve(&fused, &labels)? {
        writeln!(out, "{},{},{}", p.threshold, p.fpr, p.tpr)?;
    }
    out.flush()?;
    Ok(())
}

pub fn bundle_path(out_dir: &Path, year: i32) -> PathBuf {
    out_dir.join("models").join(format!("fold_{year}.json"))
}

pub fn write_bundle(path: &Path, model: &FoldModel) -> Result<()> {
    let mut out = create_writer(path)?;
    serde_json::to_writer(&mut out, model)?;
    writeln!(out)?;
    out.flush()?;
    Ok(())
}

pub fn read_bundle(path: &Path) -> Result<FoldModel> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(serde_json::from_str(&text)?)
}

#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub predictions: PathBuf,
    pub metrics: PathBuf,
    pub roc: PathBuf,
    pub bundles: Vec<PathBuf>,
    pub report: Metrics,
}

pub fn write_run(out_dir: &Path, folds: &[FoldOutcome], cfg: &RunConfig, branches: Branches) -> Result<RunArtifacts> {
    std::fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    let scores: Vec<PatientScore> = folds.iter().flat_map(|f| f.test_scores.iter().cloned()).collect();
    let mut bundles = Vec::new();
    for f in folds {
        let p = bundle_path(out_dir, f.model.held_out_year);
        write_bundle(&p, &f.model)?;
        bundles.push(p);
    }
    let predictions = out_dir.join("predictions.csv");
    write_predictions(&predictions, &scores)?;
    let roc = out_dir.join("roc.csv");
    write_roc(&roc, &scores)?;
    let report = build_metrics(folds, cfg, branches)?;
    let metrics = out_dir.join("metrics.json");
    let mut out = create_writer(&metrics)?;
    serde_json::to_writer_pretty(&mut out, &report)?;
    writeln!(out)?;
    out.flush()?;
    Ok(RunArtifacts {
        predictions,
        metrics,
        roc,
        bundles,
        report,
    })
}
