//! Leave-one-year-out folds, Platt calibration, view aggregation and the
//! radiomics + deep-learning score fusion.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluation::choose_threshold;
use crate::features::SCHEMA_VERSION;
use crate::learners::logistic::{fit_sigmoid, logit, sigmoid};
use crate::learners::{Dataset, LearnerParams, SubEnsemble};
use crate::rng::{derive_seed, Stream};

pub const CLAMP_EPS: f64 = 1e-6;
pub const PLATT_TOL: f64 = 1e-10;
pub const PLATT_MAX_ITER: usize = 100;

#[inline]
fn clamp_prob(p: f64) -> f64 {
    if p.is_nan() {
        0.5
    } else {
        p.clamp(CLAMP_EPS, 1.0 - CLAMP_EPS)
    }
}

/// `p' = sigmoid(slope * logit(p) + intercept)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationModel {
    pub slope: f64,
    pub intercept: f64,
}

impl CalibrationModel {
    pub const IDENTITY: CalibrationModel = CalibrationModel {
        slope: 1.0,
        intercept: 0.0,
    };

    pub fn apply(&self, p: f64) -> f64 {
        sigmoid(self.slope * logit(clamp_prob(p)) + self.intercept)
    }
}

pub fn fit_platt(scores: &[f64], labels: &[bool]) -> Result<CalibrationModel> {
    if scores.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            expected: labels.len(),
            found: scores.len(),
        });
    }
    let x: Vec<f64> = scores.iter().map(|&s| logit(clamp_prob(s))).collect();
    let (slope, intercept, converged) = fit_sigmoid(&x, labels, PLATT_MAX_ITER, PLATT_TOL)?;
    if !converged || !slope.is_finite() || !intercept.is_finite() {
        return Err(Error::NonConvergence {
            what: "Platt calibration",
            iterations: PLATT_MAX_ITER,
        });
    }
    Ok(CalibrationModel { slope, intercept })
}

pub fn aggregate_views_max(view_probs: &[f64]) -> Result<f64> {
    view_probs
        .iter()
        .copied()
        .reduce(f64::max)
        .ok_or(Error::Empty("view probabilities"))
}

pub fn fuse_average(rad_cal: f64, dl_cal: f64) -> f64 {
    (rad_cal + dl_cal) / 2.0
}

/// Minimal per-patient facts needed to build folds.
#[derive(Debug, Clone, PartialEq)]
pub struct PatientKey {
    pub year: i32,
    pub label: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fold {
    pub held_out_year: i32,
    /// Indices into the patient list, ascending.
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// One fold per distinct year, in ascending year order.
pub fn leave_one_year_out(patients: &[PatientKey]) -> Result<Vec<Fold>> {
    let mut by_year: BTreeMap<i32, Vec<usize>> = BTreeMap::new();
    for (i, p) in patients.iter().enumerate() {
        by_year.entry(p.year).or_default().push(i);
    }
    if by_year.len() < 2 {
        return Err(Error::TooFewYears(by_year.len()));
    }
    let mut folds = Vec::with_capacity(by_year.len());
    for (&year, test) in &by_year {
        let train: Vec<usize> = (0..patients.len()).filter(|&i| patients[i].year != year).collect();
        let pos = train.iter().filter(|&&i| patients[i].label).count();
        if pos == 0 || pos == train.len() {
            return Err(Error::FoldLacksClass { year });
        }
        folds.push(Fold {
            held_out_year: year,
            train,
            test: test.clone(),
        });
    }
    Ok(folds)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Branches {
    Both,
    RadOnly,
    DlOnly,
}

impl Branches {
    pub fn uses_rad(self) -> bool {
        self != Branches::DlOnly
    }

    pub fn uses_dl(self) -> bool {
        self != Branches::RadOnly
    }
}

/// A patient's views as feature rows plus its per-view DL scores.
#[derive(Debug, Clone, PartialEq)]
pub struct PatientInput {
    pub patient_id: String,
    pub year: i32,
    pub label: bool,
    pub views: Vec<Vec<f64>>,
    pub dl_views: Vec<f64>,
}

/// Branch columns are `None` when that branch is disabled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatientScore {
    pub patient_id: String,
    pub year: i32,
    pub label: bool,
    pub rad_raw: Option<f64>,
    pub rad_cal: Option<f64>,
    pub dl_raw: Option<f64>,
    pub dl_cal: Option<f64>,
    pub fused: f64,
}

/// Everything a fold learned from its training years.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldModel {
    pub schema_version: u32,
    pub seed: u64,
    pub held_out_year: i32,
    pub branches: Branches,
    pub ensemble: Option<SubEnsemble>,
    pub rad_calibration: Option<CalibrationModel>,
    pub dl_calibration: Option<CalibrationModel>,
    pub thresholds: Thresholds,
}

/// Youden-optimal cuts on the training patients' calibrated scores.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub rad: Option<f64>,
    pub dl: Option<f64>,
    pub fused: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FoldOutcome {
    pub model: FoldModel,
    pub test_scores: Vec<PatientScore>,
}

pub fn fold_seed(master: u64, held_out_year: i32) -> u64 {
    derive_seed(master, Stream::Fold, held_out_year as i64 as u64)
}

impl FoldModel {
    fn raw_scores(&self, p: &PatientInput) -> Result<(Option<f64>, Option<f64>)> {
        let rad = match &self.ensemble {
            Some(e) => {
                let probs: Vec<f64> = p.views.iter().map(|v| e.predict_proba(v)).collect();
                Some(aggregate_views_max(&probs).map_err(|_| Error::Missing(p.patient_id.clone()))?)
            }
            None => None,
        };
        let dl = if self.branches.uses_dl() {
            Some(aggregate_views_max(&p.dl_views).map_err(|_| Error::Missing(p.patient_id.clone()))?)
        } else {
            None
        };
        Ok((rad, dl))
    }

    pub fn score(&self, p: &PatientInput) -> Result<PatientScore> {
        let (rad_raw, dl_raw) = self.raw_scores(p)?;
        let rad_cal = rad_raw.zip(self.rad_calibration).map(|(r, c)| c.apply(r));
        let dl_cal = dl_raw.zip(self.dl_calibration).map(|(d, c)| c.apply(d));
        let fused = match (rad_cal, dl_cal) {
            (Some(r), Some(d)) => fuse_average(r, d),
            (Some(r), None) => r,
            (None, Some(d)) => d,
            (None, None) => return Err(Error::InvalidArgument("no branch enabled".into())),
        };
        Ok(PatientScore {
            patient_id: p.patient_id.clone(),
            year: p.year,
            label: p.label,
            rad_raw,
            rad_cal,
            dl_raw,
            dl_cal,
            fused,
        })
    }
}

/// Train, calibrate and score one fold. Only `fold.train` patients'
/// labels and features reach the model.
pub fn run_fold(
    patients: &[PatientInput],
    fold: &Fold,
    params: &LearnerParams,
    branches: Branches,
    master_seed: u64,
) -> Result<FoldOutcome> {
    let seed = fold_seed(master_seed, fold.held_out_year);
    let train: Vec<&PatientInput> = fold.train.iter().map(|&i| &patients[i]).collect();
    let labels: Vec<bool> = train.iter().map(|p| p.label).collect();

    let ensemble = if branches.uses_rad() {
        let mut rows: Vec<&[f64]> = Vec::new();
        let mut view_labels = Vec::new();
        for p in &train {
            for v in &p.views {
                rows.push(v);
                view_labels.push(p.label);
            }
        }
        let data = Dataset::from_rows(&rows, &view_labels)?;
        Some(SubEnsemble::train(&data, params, seed)?)
    } else {
        None
    };
    let mut model = FoldModel {
        schema_version: SCHEMA_VERSION,
        seed,
        held_out_year: fold.held_out_year,
        branches,
        ensemble,
        rad_calibration: None,
        dl_calibration: None,
        thresholds: Thresholds {
            rad: None,
            dl: None,
            fused: 0.5,
        },
    };

    let raw: Vec<(Option<f64>, Option<f64>)> = train.iter().map(|p| model.raw_scores(p)).collect::<Result<_>>()?;
    if branches.uses_rad() {
        let s: Vec<f64> = raw.iter().map(|r| r.0.unwrap_or(0.5)).collect();
        model.rad_calibration = Some(fit_platt(&s, &labels)?);
    }
    if branches.uses_dl() {
        let s: Vec<f64> = raw.iter().map(|r| r.1.unwrap_or(0.5)).collect();
        model.dl_calibration = Some(fit_platt(&s, &labels)?);
    }
    let train_scores: Vec<PatientScore> = train.iter().map(|p| model.score(p)).collect::<Result<_>>()?;
    let cut = |f: fn(&PatientScore) -> Option<f64>| -> Result<Option<f64>> {
        let s: Option<Vec<f64>> = train_scores.iter().map(f).collect();
        s.map(|s| choose_threshold(&s, &labels)).transpose()
    };
    model.thresholds = Thresholds {
        rad: cut(|s| s.rad_cal)?,
        dl: cut(|s| s.dl_cal)?,
        fused: cut(|s| Some(s.fused))?.unwrap_or(0.5),
    };

    let test_scores = fold.test.iter().map(|&i| model.score(&patients[i])).collect::<Result<_>>()?;
    Ok(FoldOutcome { model, test_scores })
}

pub fn patient_keys(patients: &[PatientInput]) -> Vec<PatientKey> {
    patients
        .iter()
        .map(|p| PatientKey {
            year: p.year,
            label: p.label,
        })
        .collect()
}

/// All folds in year order; test scores concatenate to one per patient.
pub fn run_loyo(
    patients: &[PatientInput],
    params: &LearnerParams,
    branches: Branches,
    master_seed: u64,
) -> Result<Vec<FoldOutcome>> {
    leave_one_year_out(&patient_keys(patients))?
        .iter()
        .map(|f| run_fold(patients, f, params, branches, master_seed))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evaluation::auc;
    use crate::rng::{standard_normal, stream_rng};
    use alloc::vec;
    use rand::RngExt;

    #[test]
    fn aggregation_and_fusion() {
        assert_eq!(aggregate_views_max(&[0.1, 0.2, 0.9, 0.3]), Ok(0.9));
        assert_eq!(aggregate_views_max(&[0.4]), Ok(0.4));
        assert_eq!(aggregate_views_max(&[0.5; 4]), Ok(0.5));
        assert!(aggregate_views_max(&[]).is_err());
        assert!((fuse_average(0.6, 0.8) - 0.7).abs() < 1e-15);
        assert_eq!(fuse_average(0.3, 0.3), 0.3);
        assert_eq!(fuse_average(0.2, 0.9), fuse_average(0.9, 0.2));
    }

    #[test]
    fn apply_examples() {
        for p in [0.01, 0.3, 0.5, 0.9] {
            assert!((CalibrationModel::IDENTITY.apply(p) - p).abs() < 1e-12);
        }
        assert!((CalibrationModel::IDENTITY.apply(0.0) - CLAMP_EPS).abs() < 1e-15);
        let m = CalibrationModel {
            slope: 1.0,
            intercept: -2.0,
        };
        assert!((m.apply(0.5) - 0.11920292202211755).abs() < 1e-15);
        assert!(m.apply(0.2) < m.apply(0.21));
    }

    #[test]
    fn calibrated_scores_recover_identity() {
        let mut rng = stream_rng(4, Stream::Phantom, 40);
        let n = 10_000;
        let s: Vec<f64> = (0..n).map(|_| rng.random_range(0.01..0.99)).collect();
        let l: Vec<bool> = s.iter().map(|&p| rng.random_bool(p)).collect();
        let m = fit_platt(&s, &l).unwrap();
        assert!((m.slope - 1.0).abs() < 0.1 && m.intercept.abs() < 0.1, "{m:?}");
    }

    #[test]
    fn uninformative_scores_flatten_to_prevalence() {
        let mut rng = stream_rng(5, Stream::Phantom, 41);
        let n = 10_000;
        let s: Vec<f64> = (0..n).map(|_| rng.random_range(0.01..0.99)).collect();
        let l: Vec<bool> = (0..n).map(|_| rng.random_bool(0.2)).collect();
        let m = fit_platt(&s, &l).unwrap();
        assert!(m.slope.abs() < 0.1);
        let prevalence = l.iter().filter(|&&x| x).count() as f64 / n as f64;
        assert!((m.apply(0.5) - prevalence).abs() < 0.02);
        assert_eq!(fit_platt(&s, &vec![false; n]), Err(Error::SingleClass));
    }

    #[test]
    fn calibration_preserves_auc() {
        let mut rng = stream_rng(6, Stream::Phantom, 42);
        for _ in 0..100 {
            let n = rng.random_range(20..300);
            let shift = rng.random_range(0.0..2.0);
            let mut s = Vec::with_capacity(n);
            let mut l = Vec::with_capacity(n);
            for i in 0..n {
                let y = i % 3 == 0;
                s.push(sigmoid(standard_normal(&mut rng) + if y { shift } else { 0.0 }));
                l.push(y);
            }
            let m = fit_platt(&s, &l).unwrap();
            if m.slope > 0.0 {
                let c: Vec<f64> = s.iter().map(|&p| m.apply(p)).collect();
                assert!((auc(&s, &l).unwrap() - auc(&c, &l).unwrap()).abs() < 1e-12);
            }
        }
    }

    fn keys(years: &[i32], labels: &[bool]) -> Vec<PatientKey> {
        years
            .iter()
            .zip(labels)
            .map(|(&year, &label)| PatientKey { year, label })
            .collect()
    }

    #[test]
    fn folds_partition_patients() {
        let years: Vec<i32> = (0..60).map(|i| 2014 + (i % 6)).collect();
        let labels: Vec<bool> = (0..60).map(|i| i % 5 == 0).collect();
        let folds = leave_one_year_out(&keys(&years, &labels)).unwrap();
        assert_eq!(folds.len(), 6);
        let mut seen = vec![0; 60];
        for f in &folds {
            for &i in &f.test {
                seen[i] += 1;
                assert_eq!(years[i], f.held_out_year);
                assert!(!f.train.contains(&i));
            }
            assert_eq!(f.train.len() + f.test.len(), 60);
        }
        assert!(seen.iter().all(|&c| c == 1));
    }

    #[test]
    fn fold_errors() {
        assert_eq!(
            leave_one_year_out(&keys(&[2015, 2015], &[true, false])),
            Err(Error::TooFewYears(1))
        );
        // every positive sits in 2016, so holding it out leaves none
        assert_eq!(
            leave_one_year_out(&keys(&[2015, 2015, 2016, 2016], &[false, false, true, false])),
            Err(Error::FoldLacksClass { year: 2016 })
        );
    }

    fn cohort(n: usize, seed: u64) -> Vec<PatientInput> {
        let mut rng = stream_rng(seed, Stream::Phantom, 43);
        (0..n)
            .map(|i| {
                let label = i % 4 == 0;
                let shift = if label { 1.0 } else { 0.0 };
                let views = (0..4)
                    .map(|_| (0..3).map(|_| standard_normal(&mut rng) + shift).collect())
                    .collect();
                let dl_views = (0..4).map(|_| sigmoid(standard_normal(&mut rng) + shift)).collect();
                PatientInput {
                    patient_id: alloc::format!("P{i:03}"),
                    year: 2018 + (i % 3) as i32,
                    label,
                    views,
                    dl_views,
                }
            })
            .collect()
    }

    fn small_params() -> LearnerParams {
        LearnerParams {
            rf_trees: 10,
            bswims_bootstraps: 3,
            ..LearnerParams::default()
        }
    }

    #[test]
    fn loyo_scores_every_patient_once() {
        let patients = cohort(60, 1);
        let out = run_loyo(&patients, &small_params(), Branches::Both, 3).unwrap();
        let mut ids: Vec<&str> = out
            .iter()
            .flat_map(|f| f.test_scores.iter().map(|s| s.patient_id.as_str()))
            .collect();
        ids.sort_unstable();
        ids.dedup();
        assert_eq!(ids.len(), 60);
        for s in out.iter().flat_map(|f| &f.test_scores) {
            let (r, d) = (s.rad_cal.unwrap(), s.dl_cal.unwrap());
            assert_eq!(s.fused, fuse_average(r, d));
            for p in [s.rad_raw.unwrap(), r, s.dl_raw.unwrap(), d, s.fused] {
                assert!((0.0..=1.0).contains(&p));
            }
        }
    }

    #[test]
    fn single_branch_fusion_is_that_branch() {
        let patients = cohort(45, 2);
        for f in run_loyo(&patients, &small_params(), Branches::RadOnly, 3).unwrap() {
            assert!(f.model.dl_calibration.is_none());
            for s in f.test_scores {
                assert_eq!(Some(s.fused), s.rad_cal);
                assert!(s.dl_raw.is_none());
            }
        }
        for f in run_loyo(&patients, &small_params(), Branches::DlOnly, 3).unwrap() {
            assert!(f.model.ensemble.is_none());
            for s in f.test_scores {
                assert_eq!(Some(s.fused), s.dl_cal);
            }
        }
    }

    #[test]
    fn test_labels_do_not_reach_the_model() {
        let patients = cohort(45, 3);
        let folds = leave_one_year_out(&patient_keys(&patients)).unwrap();
        let fold = &folds[1];
        let base = run_fold(&patients, fold, &small_params(), Branches::Both, 8).unwrap();
        let mut flipped = patients.clone();
        for &i in &fold.test {
            flipped[i].label = !flipped[i].label;
        }
        let again = run_fold(&flipped, fold, &small_params(), Branches::Both, 8).unwrap();
        assert_eq!(base.model, again.model);
        for (a, b) in base.test_scores.iter().zip(&again.test_scores) {
            assert_eq!(a.fused.to_bits(), b.fused.to_bits());
            assert_ne!(a.label, b.label);
        }
    }
}
