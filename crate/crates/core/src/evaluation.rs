//! ROC analysis, confidence intervals and confusion-matrix metrics.

use alloc::vec;
use alloc::vec::Vec;

use rand::RngExt;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{stream_rng, Stream};

pub const Z_95: f64 = 1.96;

fn class_counts(labels: &[bool]) -> (usize, usize) {
    let pos = labels.iter().filter(|&&l| l).count();
    (pos, labels.len() - pos)
}

fn check(scores: &[f64], labels: &[bool]) -> Result<(usize, usize)> {
    if scores.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            expected: labels.len(),
            found: scores.len(),
        });
    }
    let (p, n) = class_counts(labels);
    if p == 0 || n == 0 {
        return Err(Error::SingleClass);
    }
    Ok((p, n))
}

/// Indices sorted by ascending score.
fn order(scores: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    idx
}

/// Twice the Mann-Whitney U statistic (ties count one half), as an integer.
pub fn twice_u(scores: &[f64], labels: &[bool]) -> u128 {
    let idx = order(scores);
    let mut twice = 0u128;
    let mut neg_below = 0u128;
    let mut k = 0;
    while k < idx.len() {
        let mut end = k;
        let (mut p, mut q) = (0u128, 0u128);
        while end < idx.len() && scores[idx[end]] == scores[idx[k]] {
            if labels[idx[end]] {
                p += 1;
            } else {
                q += 1;
            }
            end += 1;
        }
        twice += 2 * p * neg_below + p * q;
        neg_below += q;
        k = end;
    }
    twice
}

/// `P(s+ > s-) + P(s+ = s-)/2`.
pub fn auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    let (p, n) = check(scores, labels)?;
    Ok(twice_u(scores, labels) as f64 / (2 * p as u128 * n as u128) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AucInterval {
    pub auc: f64,
    pub variance: f64,
    pub low: f64,
    pub high: f64,
    /// Set when the variance is zero and the interval collapses to a point.
    pub degenerate: bool,
}

/// DeLong structural-component variance and a normal 95% interval.
pub fn auc_ci_delong(scores: &[f64], labels: &[bool]) -> Result<AucInterval> {
    let (np, nn) = check(scores, labels)?;
    if np < 2 || nn < 2 {
        return Err(Error::InvalidArgument("DeLong interval needs at least two cases per class".into()));
    }
    let mut pos: Vec<f64> = Vec::with_capacity(np);
    let mut neg: Vec<f64> = Vec::with_capacity(nn);
    for (&s, &l) in scores.iter().zip(labels) {
        if l {
            pos.push(s)
        } else {
            neg.push(s)
        }
    }
    pos.sort_by(f64::total_cmp);
    neg.sort_by(f64::total_cmp);
    // psi summed against the other class: #less + #equal / 2
    let placement = |x: f64, other: &[f64], less_is_win: bool| -> f64 {
        let below = other.partition_point(|&v| v < x);
        let not_above = other.partition_point(|&v| v <= x);
        let ties = (not_above - below) as f64;
        if less_is_win {
            below as f64 + ties / 2.0
        } else {
            (other.len() - not_above) as f64 + ties / 2.0
        }
    };
    let v10: Vec<f64> = pos.iter().map(|&x| placement(x, &neg, true) / nn as f64).collect();
    let v01: Vec<f64> = neg.iter().map(|&y| placement(y, &pos, false) / np as f64).collect();
    let value = auc(scores, labels)?;
    let sample_var = |v: &[f64]| {
        let m = v.iter().sum::<f64>() / v.len() as f64;
        v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() - 1) as f64
    };
    let variance = sample_var(&v10) / np as f64 + sample_var(&v01) / nn as f64;
    if !(variance > 0.0) {
        return Ok(AucInterval {
            auc: value,
            variance: 0.0,
            low: value,
            high: value,
            degenerate: true,
        });
    }
    let half = Z_95 * libm::sqrt(variance);
    Ok(AucInterval {
        auc: value,
        variance,
        low: (value - half).max(0.0),
        high: (value + half).min(1.0),
        degenerate: false,
    })
}

/// Stratified percentile bootstrap interval for the AUC.
pub fn auc_ci_bootstrap(scores: &[f64], labels: &[bool], resamples: usize, seed: u64) -> Result<(f64, f64)> {
    check(scores, labels)?;
    if resamples == 0 {
        return Err(Error::InvalidArgument("bootstrap needs at least one resample".into()));
    }
    let pos: Vec<f64> = scores.iter().zip(labels).filter(|p| *p.1).map(|p| *p.0).collect();
    let neg: Vec<f64> = scores.iter().zip(labels).filter(|p| !*p.1).map(|p| *p.0).collect();
    let mut stats = Vec::with_capacity(resamples);
    let mut s = Vec::with_capacity(scores.len());
    let mut l = Vec::with_capacity(scores.len());
    for r in 0..resamples {
        let mut rng = stream_rng(seed, Stream::Bootstrap, r as u64);
        s.clear();
        l.clear();
        for _ in 0..pos.len() {
            s.push(pos[rng.random_range(0..pos.len())]);
            l.push(true);
        }
        for _ in 0..neg.len() {
            s.push(neg[rng.random_range(0..neg.len())]);
            l.push(false);
        }
        stats.push(auc(&s, &l)?);
    }
    stats.sort_by(f64::total_cmp);
    let q = |p: f64| {
        let pos = p * (stats.len() - 1) as f64;
        let lo = libm::floor(pos) as usize;
        let hi = (lo + 1).min(stats.len() - 1);
        stats[lo] + (pos - lo as f64) * (stats[hi] - stats[lo])
    };
    Ok((q(0.025), q(0.975)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub threshold: f64,
    pub fpr: f64,
    pub tpr: f64,
}

/// Staircase ROC: an infinite sentinel threshold, then each distinct score
/// from high to low; each point classifies `score >= threshold` positive.
pub fn roc_curve(scores: &[f64], labels: &[bool]) -> Result<Vec<RocPoint>> {
    let (np, nn) = check(scores, labels)?;
    let idx = order(scores);
    let mut points = vec![RocPoint {
        threshold: f64::INFINITY,
        fpr: 0.0,
        tpr: 0.0,
    }];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut k = idx.len();
    while k > 0 {
        let t = scores[idx[k - 1]];
        while k > 0 && scores[idx[k - 1]] == t {
            if labels[idx[k - 1]] {
                tp += 1;
            } else {
                fp += 1;
            }
            k -= 1;
        }
        points.push(RocPoint {
            threshold: t,
            fpr: fp as f64 / nn as f64,
            tpr: tp as f64 / np as f64,
        });
    }
    Ok(points)
}

pub fn trapezoid_area(points: &[RocPoint]) -> f64 {
    points
        .windows(2)
        .map(|w| (w[1].fpr - w[0].fpr) * (w[1].tpr + w[0].tpr) / 2.0)
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionMatrix {
    pub fn new(tp: u64, fp: u64, fn_: u64, tn: u64) -> Self {
        ConfusionMatrix { tp, fp, fn_, tn }
    }

    pub fn positives(&self) -> u64 {
        self.tp + self.fn_
    }

    pub fn negatives(&self) -> u64 {
        self.fp + self.tn
    }

    pub fn total(&self) -> u64 {
        self.positives() + self.negatives()
    }
}

/// Predicted positive iff `score >= t`.
pub fn confusion_at_threshold(scores: &[f64], labels: &[bool], t: f64) -> ConfusionMatrix {
    let mut cm = ConfusionMatrix::new(0, 0, 0, 0);
    for (&s, &l) in scores.iter().zip(labels) {
        match (s >= t, l) {
            (true, true) => cm.tp += 1,
            (true, false) => cm.fp += 1,
            (false, true) => cm.fn_ += 1,
            (false, false) => cm.tn += 1,
        }
    }
    cm
}

/// `None` marks a metric whose denominator is zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SummaryMetrics {
    pub tpr: Option<f64>,
    pub tnr: Option<f64>,
    pub accuracy: Option<f64>,
    pub f1: Option<f64>,
    pub ber: Option<f64>,
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

pub fn summary_metrics(cm: &ConfusionMatrix) -> SummaryMetrics {
    let tpr = ratio(cm.tp, cm.positives());
    let tnr = ratio(cm.tn, cm.negatives());
    SummaryMetrics {
        tpr,
        tnr,
        accuracy: ratio(cm.tp + cm.tn, cm.total()),
        f1: ratio(2 * cm.tp, 2 * cm.tp + cm.fp + cm.fn_),
        ber: tpr.zip(tnr).map(|(a, b)| 1.0 - (a + b) / 2.0),
    }
}

/// Score maximizing Youden's J over the distinct scores; ties keep the
/// larger threshold.
pub fn choose_threshold(scores: &[f64], labels: &[bool]) -> Result<f64> {
    let points = roc_curve(scores, labels)?;
    let mut best = (f64::NEG_INFINITY, points[1].threshold);
    for p in &points[1..] {
        let j = p.tpr - p.fpr;
        if j > best.0 {
            best = (j, p.threshold);
        }
    }
    Ok(best.1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::standard_normal;
    use proptest::prelude::*;

    fn pair_oracle(scores: &[f64], labels: &[bool]) -> f64 {
        let mut twice = 0u64;
        let (mut p, mut n) = (0u64, 0u64);
        for i in 0..scores.len() {
            if labels[i] {
                p += 1;
            } else {
                n += 1;
            }
        }
        for i in 0..scores.len() {
            for j in 0..scores.len() {
                if labels[i] && !labels[j] {
                    if scores[i] > scores[j] {
                        twice += 2;
                    } else if scores[i] == scores[j] {
                        twice += 1;
                    }
                }
            }
        }
        twice as f64 / (2 * p * n) as f64
    }

    #[test]
    fn auc_examples() {
        assert_eq!(auc(&[0.1, 0.2, 0.8, 0.9], &[false, false, true, true]), Ok(1.0));
        assert_eq!(auc(&[0.3; 4], &[false, true, false, true]), Ok(0.5));
        let s = [0.1, 0.4, 0.35, 0.8];
        let l = [false, true, false, true];
        assert_eq!(auc(&s, &l), Ok(pair_oracle(&s, &l)));
        assert_eq!(auc(&s, &l), Ok(1.0));
        assert_eq!(auc(&[0.1, 0.2], &[true, true]), Err(Error::SingleClass));
    }

    #[test]
    fn auc_matches_pair_oracle_on_random_instances() {
        let mut rng = stream_rng(1, Stream::Phantom, 10);
        let mut done = 0;
        while done < 1000 {
            let n = rng.random_range(2..=50);
            let levels = rng.random_range(1..=10);
            let s: Vec<f64> = (0..n).map(|_| rng.random_range(0..levels) as f64 / 3.0).collect();
            let l: Vec<bool> = (0..n).map(|_| rng.random_bool(0.4)).collect();
            if l.iter().all(|&x| x) || l.iter().all(|&x| !x) {
                continue;
            }
            assert_eq!(auc(&s, &l).unwrap(), pair_oracle(&s, &l));
            let roc = roc_curve(&s, &l).unwrap();
            assert!((trapezoid_area(&roc) - auc(&s, &l).unwrap()).abs() < 1e-12);
            done += 1;
        }
    }

    proptest! {
        #[test]
        fn auc_invariant_to_monotone_transform(
            s in proptest::collection::vec(-5.0f64..5.0, 4..40),
            flips in proptest::collection::vec(any::<bool>(), 40),
        ) {
            let mut l: Vec<bool> = flips[..s.len()].to_vec();
            l[0] = true;
            l[1] = false;
            let t: Vec<f64> = s.iter().map(|x| libm::exp(*x) * 3.0 + 1.0).collect();
            prop_assert_eq!(auc(&s, &l).unwrap(), auc(&t, &l).unwrap());
        }

        #[test]
        fn roc_is_monotone(
            s in proptest::collection::vec(0u8..6, 2..40),
            flips in proptest::collection::vec(any::<bool>(), 40),
        ) {
            let s: Vec<f64> = s.iter().map(|&v| v as f64).collect();
            let mut l: Vec<bool> = flips[..s.len()].to_vec();
            l[0] = true;
            l[1] = false;
            let roc = roc_curve(&s, &l).unwrap();
            for w in roc.windows(2) {
                prop_assert!(w[1].fpr >= w[0].fpr && w[1].tpr >= w[0].tpr);
                prop_assert!(w[1].threshold < w[0].threshold);
            }
            let last = roc.last().unwrap();
            prop_assert_eq!((last.fpr, last.tpr), (1.0, 1.0));
        }
    }

    #[test]
    fn roc_examples() {
        let r = roc_curve(&[1.0, 0.0], &[true, false]).unwrap();
        let pts: Vec<(f64, f64)> = r.iter().map(|p| (p.fpr, p.tpr)).collect();
        assert_eq!(pts, vec![(0.0, 0.0), (0.0, 1.0), (1.0, 1.0)]);
        assert!(r[0].threshold.is_infinite());
        let r = roc_curve(&[0.5; 4], &[true, false, true, false]).unwrap();
        let pts: Vec<(f64, f64)> = r.iter().map(|p| (p.fpr, p.tpr)).collect();
        assert_eq!(pts, vec![(0.0, 0.0), (1.0, 1.0)]);
    }

    #[test]
    fn table_counts_reproduce_reported_metrics() {
        let cm = ConfusionMatrix::new(287, 3219, 82, 15812);
        assert_eq!((cm.positives(), cm.negatives(), cm.total()), (369, 19031, 19400));
        let m = summary_metrics(&cm);
        for (got, want) in [
            (m.tpr, 0.778),
            (m.tnr, 0.831),
            (m.accuracy, 0.830),
            (m.f1, 0.148),
            (m.ber, 0.196),
        ] {
            assert!((got.unwrap() - want).abs() < 0.0005, "{got:?} vs {want}");
        }
    }

    #[test]
    fn metric_edge_cases() {
        let m = summary_metrics(&ConfusionMatrix::new(1, 0, 0, 1));
        assert_eq!((m.tpr, m.tnr, m.accuracy, m.f1, m.ber), (Some(1.0), Some(1.0), Some(1.0), Some(1.0), Some(0.0)));
        let m = summary_metrics(&ConfusionMatrix::new(0, 0, 3, 4));
        assert_eq!((m.tpr, m.f1), (Some(0.0), Some(0.0)));
        let m = summary_metrics(&ConfusionMatrix::new(0, 0, 0, 4));
        assert_eq!((m.tpr, m.f1, m.ber), (None, None, None));
        assert_eq!(m.tnr, Some(1.0));
    }

    #[test]
    fn confusion_boundaries() {
        let s = [0.1, 0.5, 0.9, 0.3];
        let l = [false, true, true, false];
        let cm = confusion_at_threshold(&s, &l, 0.0);
        assert_eq!((cm.tp, cm.fp, cm.fn_, cm.tn), (2, 2, 0, 0));
        let cm = confusion_at_threshold(&s, &l, 0.9 + 1e-12);
        assert_eq!((cm.tp, cm.fp, cm.fn_, cm.tn), (0, 0, 2, 2));
        let cm = confusion_at_threshold(&s, &l, 0.5);
        assert_eq!((cm.tp, cm.fp, cm.fn_, cm.tn), (2, 0, 0, 2));
    }

    #[test]
    fn threshold_rule() {
        assert_eq!(choose_threshold(&[0.9, 0.1], &[true, false]), Ok(0.9));
        assert_eq!(choose_threshold(&[0.2, 0.3, 0.7, 0.8], &[false, false, true, true]), Ok(0.7));
        assert_eq!(choose_threshold(&[0.4; 3], &[true, false, true]), Ok(0.4));
        assert_eq!(choose_threshold(&[0.4; 3], &[true; 3]), Err(Error::SingleClass));
    }

    #[test]
    fn delong_point_interval_when_separated() {
        let ci = auc_ci_delong(&[0.1, 0.2, 0.8, 0.9], &[false, false, true, true]).unwrap();
        assert!(ci.degenerate);
        assert_eq!((ci.low, ci.auc, ci.high), (1.0, 1.0, 1.0));
    }

    /// Binormal sample with true AUC Phi(delta / sqrt 2).
    fn binormal(n: usize, delta: f64, rng: &mut impl rand::Rng) -> (Vec<f64>, Vec<bool>) {
        let mut s = Vec::with_capacity(n);
        let mut l = Vec::with_capacity(n);
        for i in 0..n {
            let y = i % 2 == 0;
            s.push(standard_normal(rng) + if y { delta } else { 0.0 });
            l.push(y);
        }
        (s, l)
    }

    #[test]
    fn delong_coverage() {
        // Phi(1.190232 / sqrt 2) = 0.8
        for (delta, truth, n, sims) in [(1.190232, 0.8, 200, 500), (0.0, 0.5, 2000, 500)] {
            let mut rng = stream_rng(7, Stream::Phantom, n as u64);
            let mut covered = 0;
            for _ in 0..sims {
                let (s, l) = binormal(n, delta, &mut rng);
                let ci = auc_ci_delong(&s, &l).unwrap();
                let half = Z_95 * libm::sqrt(ci.variance);
                assert!((ci.high - ci.low - 2.0 * half).abs() < 1e-12);
                if ci.low <= truth && truth <= ci.high {
                    covered += 1;
                }
            }
            let rate = covered as f64 / sims as f64;
            assert!((0.90..=0.98).contains(&rate), "coverage {rate} at auc {truth}");
        }
    }

    #[test]
    fn duplicating_data_narrows_interval() {
        let mut rng = stream_rng(8, Stream::Phantom, 0);
        let (s, l) = binormal(400, 1.0, &mut rng);
        let a = auc_ci_delong(&s, &l).unwrap();
        let s2: Vec<f64> = s.iter().chain(&s).copied().collect();
        let l2: Vec<bool> = l.iter().chain(&l).copied().collect();
        let b = auc_ci_delong(&s2, &l2).unwrap();
        assert_eq!(a.auc, b.auc);
        let ratio = (a.high - a.low) / (b.high - b.low);
        assert!((ratio - core::f64::consts::SQRT_2).abs() < 0.02, "{ratio}");
    }

    #[test]
    fn bootstrap_interval_brackets_auc() {
        let mut rng = stream_rng(9, Stream::Phantom, 0);
        let (s, l) = binormal(300, 1.0, &mut rng);
        let value = auc(&s, &l).unwrap();
        let (lo, hi) = auc_ci_bootstrap(&s, &l, 2000, 3).unwrap();
        assert!(lo < value && value < hi);
        let d = auc_ci_delong(&s, &l).unwrap();
        assert!((lo - d.low).abs() < 0.02 && (hi - d.high).abs() < 0.02);
        assert_eq!(auc_ci_bootstrap(&s, &l, 2000, 3).unwrap(), (lo, hi));
    }
}
