//! Metrics report (JSON) and its text rendering.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use anyhow::{bail, Result};
use radens_core::calibration::{Branches, FoldOutcome, PatientScore};
use radens_core::evaluation::{
    auc, auc_ci_bootstrap, auc_ci_delong, confusion_at_threshold, summary_metrics, ConfusionMatrix, SummaryMetrics,
};
use radens_core::features::SCHEMA_VERSION;
use radens_core::rng::derive_seed;
use radens_core::rng::Stream;
use serde::{Deserialize, Serialize};

use crate::config::{RunConfig, ThresholdPolicy};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub method: String,
    pub low: f64,
    pub high: f64,
    /// Zero variance collapsed the interval to a point.
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Threshold {
    pub policy: String,
    /// Cut applied to each held-out year.
    pub per_fold: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMetrics {
    pub n_patients: usize,
    pub n_positive: usize,
    pub auc: Option<f64>,
    pub ci: Option<Interval>,
    pub bootstrap_ci: Option<Interval>,
    pub threshold: Threshold,
    pub confusion: ConfusionMatrix,
    pub tpr: Option<f64>,
    pub tnr: Option<f64>,
    pub accuracy: Option<f64>,
    pub f1: Option<f64>,
    pub ber: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Models<T> {
    #[serde(rename = "RAD")]
    pub rad: Option<T>,
    #[serde(rename = "DL")]
    pub dl: Option<T>,
    #[serde(rename = "ENS")]
    pub ens: Option<T>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldModelMetrics {
    pub auc: Option<f64>,
    pub threshold: f64,
    pub confusion: ConfusionMatrix,
    pub tpr: Option<f64>,
    pub tnr: Option<f64>,
    pub accuracy: Option<f64>,
    pub f1: Option<f64>,
    pub ber: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldMetrics {
    pub held_out_year: i32,
    pub n_patients: usize,
    pub n_positive: usize,
    pub models: Models<FoldModelMetrics>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub schema_version: u32,
    pub seed: u64,
    pub branches: String,
    pub models: Models<ModelMetrics>,
    pub folds: Vec<FoldMetrics>,
}

#[derive(Clone, Copy)]
enum Which {
    Rad,
    Dl,
    Ens,
}

fn pick(s: &PatientScore, w: Which) -> Option<f64> {
    match w {
        Which::Rad => s.rad_cal,
        Which::Dl => s.dl_cal,
        Which::Ens => Some(s.fused),
    }
}

fn fold_threshold(f: &FoldOutcome, w: Which, policy: ThresholdPolicy) -> Option<f64> {
    if let ThresholdPolicy::Fixed(t) = policy {
        return Some(t);
    }
    let t = &f.model.thresholds;
    match w {
        Which::Rad => t.rad,
        Which::Dl => t.dl,
        Which::Ens => Some(t.fused),
    }
}

fn add(a: ConfusionMatrix, b: ConfusionMatrix) -> ConfusionMatrix {
    ConfusionMatrix::new(a.tp + b.tp, a.fp + b.fp, a.fn_ + b.fn_, a.tn + b.tn)
}

fn fold_entry(f: &FoldOutcome, w: Which, policy: ThresholdPolicy) -> Option<FoldModelMetrics> {
    let scores: Option<Vec<f64>> = f.test_scores.iter().map(|s| pick(s, w)).collect();
    let scores = scores?;
    let labels: Vec<bool> = f.test_scores.iter().map(|s| s.label).collect();
    let threshold = fold_threshold(f, w, policy)?;
    let confusion = confusion_at_threshold(&scores, &labels, threshold);
    let SummaryMetrics {
        tpr,
        tnr,
        accuracy,
        f1,
        ber,
    } = summary_metrics(&confusion);
    Some(FoldModelMetrics {
        auc: auc(&scores, &labels).ok(),
        threshold,
        confusion,
        tpr,
        tnr,
        accuracy,
        f1,
        ber,
    })
}

fn pooled_entry(folds: &[FoldOutcome], w: Which, cfg: &RunConfig) -> Result<Option<ModelMetrics>> {
    let all: Vec<&PatientScore> = folds.iter().flat_map(|f| &f.test_scores).collect();
    let Some(scores) = all.iter().map(|s| pick(s, w)).collect::<Option<Vec<f64>>>() else {
        return Ok(None);
    };
    let labels: Vec<bool> = all.iter().map(|s| s.label).collect();
    let mut confusion = ConfusionMatrix::new(0, 0, 0, 0);
    let mut per_fold = BTreeMap::new();
    for f in folds {
        let Some(e) = fold_entry(f, w, cfg.threshold) else {
            return Ok(None);
        };
        confusion = add(confusion, e.confusion);
        per_fold.insert(f.model.held_out_year.to_string(), e.threshold);
    }
    let ci = auc_ci_delong(&scores, &labels).ok().map(|c| Interval {
        method: "delong".into(),
        low: c.low,
        high: c.high,
        degenerate: c.degenerate,
    });
    let bootstrap_ci = if cfg.bootstrap_ci {
        let seed = derive_seed(cfg.seed, Stream::Bootstrap, w as u64);
        auc_ci_bootstrap(&scores, &labels, cfg.bootstrap_resamples, seed)
            .ok()
            .map(|(low, high)| Interval {
                method: format!("bootstrap-percentile-{}", cfg.bootstrap_resamples),
                low,
                high,
                degenerate: low == high,
            })
    } else {
        None
    };
    let m = summary_metrics(&confusion);
    Ok(Some(ModelMetrics {
        n_patients: labels.len(),
        n_positive: labels.iter().filter(|&&l| l).count(),
        auc: auc(&scores, &labels).ok(),
        ci,
        bootstrap_ci,
        threshold: Threshold {
            policy: match cfg.threshold {
                ThresholdPolicy::Youden => "youden".into(),
                ThresholdPolicy::Fixed(_) => "fixed".into(),
            },
            per_fold,
        },
        confusion,
        tpr: m.tpr,
        tnr: m.tnr,
        accuracy: m.accuracy,
        f1: m.f1,
        ber: m.ber,
    }))
}

pub fn branches_name(b: Branches) -> &'static str {
    match b {
        Branches::Both => "both",
        Branches::RadOnly => "rad-only",
        Branches::DlOnly => "dl-only",
    }
}

pub fn build_metrics(folds: &[FoldOutcome], cfg: &RunConfig, branches: Branches) -> Result<Metrics> {
    let fold_metrics = folds
        .iter()
        .map(|f| FoldMetrics {
            held_out_year: f.model.held_out_year,
            n_patients: f.test_scores.len(),
            n_positive: f.test_scores.iter().filter(|s| s.label).count(),
            models: Models {
                rad: fold_entry(f, Which::Rad, cfg.threshold),
                dl: fold_entry(f, Which::Dl, cfg.threshold),
                ens: fold_entry(f, Which::Ens, cfg.threshold),
            },
        })
        .collect();
    Ok(Metrics {
        schema_version: SCHEMA_VERSION,
        seed: cfg.seed,
        branches: branches_name(branches).into(),
        models: Models {
            rad: pooled_entry(folds, Which::Rad, cfg)?,
            dl: pooled_entry(folds, Which::Dl, cfg)?,
            ens: pooled_entry(folds, Which::Ens, cfg)?,
        },
        folds: fold_metrics,
    })
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_string(), |x| format!("{x:.3}"))
}

/// Fixed-format table, one row per model in RAD, DL, ENS order. Metrics
/// are recomputed from the confusion counts.
pub fn render_report(m: &Metrics) -> Result<String> {
    if m.folds.is_empty() {
        bail!("no folds in metrics report");
    }
    let mut out = String::new();
    writeln!(out, "seed {}  branches {}  folds {}", m.seed, m.branches, m.folds.len())?;
    writeln!(
        out,
        "{:<5} {:<22} {:>6} {:>6} {:>6} {:>6} {:>6}",
        "model", "AUC (95% CI)", "TPR", "TNR", "ACC", "F1", "BER"
    )?;
    for (name, entry) in [("RAD", &m.models.rad), ("DL", &m.models.dl), ("ENS", &m.models.ens)] {
        let Some(e) = entry else {
            writeln!(out, "{name:<5} not run")?;
            continue;
        };
        let auc = match (&e.auc, &e.ci) {
            (Some(a), Some(ci)) => format!("{a:.3} ({:.3}-{:.3})", ci.low, ci.high),
            (Some(a), None) => format!("{a:.3}"),
            _ => "n/a".into(),
        };
        let s = summary_metrics(&e.confusion);
        writeln!(
            out,
            "{name:<5} {auc:<22} {:>6} {:>6} {:>6} {:>6} {:>6}",
            cell(s.tpr),
            cell(s.tnr),
            cell(s.accuracy),
            cell(s.f1),
            cell(s.ber)
        )?;
    }
    Ok(out)
}
