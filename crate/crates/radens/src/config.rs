//! Flat `key=value` run configuration.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use radens_core::features::ExtractionParams;
use radens_core::image::DEFAULT_BIN_COUNT;
use radens_core::learners::LearnerParams;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ThresholdPolicy {
    /// Youden-optimal cut fitted on each fold's training patients.
    Youden,
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub output_dir: PathBuf,
    pub reference_cdf: Option<PathBuf>,
    pub bin_count: usize,
    pub glcm_levels: usize,
    pub learners: LearnerParams,
    pub threshold: ThresholdPolicy,
    pub bootstrap_ci: bool,
    pub bootstrap_resamples: usize,
    pub max_failure_fraction: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 42,
            output_dir: PathBuf::from("out"),
            reference_cdf: None,
            bin_count: DEFAULT_BIN_COUNT,
            glcm_levels: ExtractionParams::default().glcm_levels,
            learners: LearnerParams::default(),
            threshold: ThresholdPolicy::Youden,
            bootstrap_ci: false,
            bootstrap_resamples: 2000,
            max_failure_fraction: 0.1,
        }
    }
}

pub const KEYS: &[&str] = &[
    "run.seed",
    "run.output_dir",
    "imaging.reference_cdf",
    "imaging.bin_count",
    "glcm.levels",
    "knn.k",
    "svm.lambda",
    "svm.epochs",
    "lasso.lambda_min",
    "lasso.lambda_max",
    "lasso.grid_points",
    "lasso.inner_folds",
    "bswims.bootstraps",
    "bswims.z_threshold",
    "bswims.max_size",
    "rf.trees",
    "rf.max_depth",
    "rf.min_leaf",
    "evaluation.threshold",
    "evaluation.bootstrap_ci",
    "evaluation.bootstrap_resamples",
    "extract.max_failure_fraction",
];

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value
        .parse()
        .map_err(|e| anyhow::anyhow!("config key `{key}`: cannot parse `{value}`: {e}"))
}

impl RunConfig {
    pub fn extraction(&self) -> ExtractionParams {
        ExtractionParams {
            glcm_levels: self.glcm_levels,
        }
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let l = &mut self.learners;
        match key {
            "run.seed" => self.seed = parse(key, value)?,
            "run.output_dir" => self.output_dir = PathBuf::from(value),
            "imaging.reference_cdf" => self.reference_cdf = Some(PathBuf::from(value)),
            "imaging.bin_count" => self.bin_count = parse(key, value)?,
            "glcm.levels" => self.glcm_levels = parse(key, value)?,
            "knn.k" => l.knn_k = parse(key, value)?,
            "svm.lambda" => l.svm_lambda = parse(key, value)?,
            "svm.epochs" => l.svm_epochs = parse(key, value)?,
            "lasso.lambda_min" => l.lasso_lambda_min = parse(key, value)?,
            "lasso.lambda_max" => l.lasso_lambda_max = parse(key, value)?,
            "lasso.grid_points" => l.lasso_grid_points = parse(key, value)?,
            "lasso.inner_folds" => l.lasso_inner_folds = parse(key, value)?,
            "bswims.bootstraps" => l.bswims_bootstraps = parse(key, value)?,
            "bswims.z_threshold" => l.bswims_z_threshold = parse(key, value)?,
            "bswims.max_size" => l.bswims_max_size = parse(key, value)?,
            "rf.trees" => l.rf_trees = parse(key, value)?,
            "rf.max_depth" => l.rf_max_depth = parse(key, value)?,
            "rf.min_leaf" => l.rf_min_leaf = parse(key, value)?,
            "evaluation.threshold" => {
                self.threshold = if value == "youden" {
                    ThresholdPolicy::Youden
                } else {
                    ThresholdPolicy::Fixed(parse(key, value)?)
                }
            }
            "evaluation.bootstrap_ci" => self.bootstrap_ci = parse(key, value)?,
            "evaluation.bootstrap_resamples" => self.bootstrap_resamples = parse(key, value)?,
            "extract.max_failure_fraction" => self.max_failure_fraction = parse(key, value)?,
            _ => bail!("unknown config key `{key}`"),
        }
        Ok(())
    }

    pub fn parse_str(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                bail!("config line {}: expected key=value", n + 1);
            };
            cfg.set(key.trim(), value.trim())
                .with_context(|| format!("config line {}", n + 1))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        Self::parse_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let l = &self.learners;
        if self.bin_count < 2 {
            bail!("imaging.bin_count must be at least 2");
        }
        if !(2..=65536).contains(&self.glcm_levels) {
            bail!("glcm.levels must be in 2..=65536");
        }
        if l.knn_k == 0 || l.lasso_grid_points == 0 || l.lasso_inner_folds < 2 || l.rf_trees == 0 {
            bail!("learner counts must be positive (lasso.inner_folds at least 2)");
        }
        if !(l.lasso_lambda_min > 0.0 && l.lasso_lambda_min <= l.lasso_lambda_max) {
            bail!("lasso grid needs 0 < lambda_min <= lambda_max");
        }
        if !(0.0..=1.0).contains(&self.max_failure_fraction) {
            bail!("extract.max_failure_fraction must be in [0, 1]");
        }
        Ok(())
    }

    /// Every key with its current value, one per line.
    pub fn render(&self) -> String {
        let l = &self.learners;
        let threshold = match self.threshold {
            ThresholdPolicy::Youden => "youden".to_string(),
            ThresholdPolicy::Fixed(t) => t.to_string(),
        };
        let values: Vec<String> = vec![
            self.seed.to_string(),
            self.output_dir.display().to_string(),
            self.reference_cdf
                .as_ref()
                .map(|p| p.display().to_string())
                .unwrap_or_default(),
            self.bin_count.to_string(),
            self.glcm_levels.to_string(),
            l.knn_k.to_string(),
            l.svm_lambda.to_string(),
            l.svm_epochs.to_string(),
            l.lasso_lambda_min.to_string(),
            l.lasso_lambda_max.to_string(),
            l.lasso_grid_points.to_string(),
            l.lasso_inner_folds.to_string(),
            l.bswims_bootstraps.to_string(),
            l.bswims_z_threshold.to_string(),
            l.bswims_max_size.to_string(),
            l.rf_trees.to_string(),
            l.rf_max_depth.to_string(),
            l.rf_min_leaf.to_string(),
            threshold,
            self.bootstrap_ci.to_string(),
            self.bootstrap_resamples.to_string(),
            self.max_failure_fraction.to_string(),
        ];
        KEYS.iter()
            .zip(values)
            .filter(|(_, v)| !v.is_empty())
            .map(|(k, v)| format!("{k}={v}\n"))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_text() {
        let cfg = RunConfig::default();
        assert_eq!(RunConfig::parse_str(&cfg.render()).unwrap(), cfg);
        assert_eq!(cfg.glcm_levels, 32);
        assert_eq!(cfg.learners.rf_trees, 200);
    }

    #[test]
    fn namespaced_keys_and_comments() {
        let cfg = RunConfig::parse_str("# tuning\nglcm.levels = 16\n\nrf.trees=50\nevaluation.threshold=0.3\n").unwrap();
        assert_eq!(cfg.glcm_levels, 16);
        assert_eq!(cfg.learners.rf_trees, 50);
        assert_eq!(cfg.threshold, ThresholdPolicy::Fixed(0.3));
    }

    #[test]
    fn unknown_or_malformed_keys_fail() {
        let e = RunConfig::parse_str("glcm.level=16").unwrap_err();
        assert!(format!("{e:#}").contains("unknown config key `glcm.level`"));
        assert!(RunConfig::parse_str("glcm.levels").is_err());
        assert!(RunConfig::parse_str("knn.k=five").is_err());
        assert!(RunConfig::parse_str("lasso.lambda_min=1").is_err());
    }
}
