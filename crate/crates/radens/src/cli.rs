//! Command-line entry points.

use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use log::info;
use radens_core::calibration::Branches;

use crate::config::RunConfig;
use crate::extract::{build_reference, run_extract};
use crate::io::{exceptions_path, read_dl_scores, read_exceptions, read_feature_cache, read_reference_cdf, write_reference_cdf};
use crate::manifest::Manifest;
use crate::metrics::{render_report, Metrics};
use crate::phantoms::{generate_phantoms, PhantomSpec};
use crate::run::{assemble_patients, run_folds, write_run};

#[derive(Debug, Parser)]
#[command(name = "radens", version, about = "Radiomics sub-ensemble + DL score fusion under leave-one-year-out validation")]
pub struct Cli {
    /// Flat key=value configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Master seed (overrides run.seed).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads; 0 uses all cores.
    #[arg(long, global = true, default_value_t = 0)]
    pub jobs: usize,
    /// Use only the radiomics branch; DL scores are not read.
    #[arg(long, global = true)]
    pub rad_only: bool,
    /// Use only the DL branch; the feature cache is not read.
    #[arg(long, global = true)]
    pub dl_only: bool,
    /// Drop patients with missing DL scores instead of failing.
    #[arg(long, global = true)]
    pub allow_missing_dl: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic cohort: images, manifest.csv, dl_scores.csv.
    Phantoms(PhantomArgs),
    /// Estimate the reference intensity CDF from the manifest's images.
    Refcdf {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Preprocess, segment and extract features for every manifest view.
    Extract {
        #[arg(long)]
        manifest: PathBuf,
        /// Feature cache CSV to write; failures go to <stem>.exceptions.csv.
        #[arg(long)]
        out: PathBuf,
        /// Reference CDF (overrides imaging.reference_cdf).
        #[arg(long)]
        reference: Option<PathBuf>,
        /// Write a PNG label map per view into this directory.
        #[arg(long)]
        label_maps: Option<PathBuf>,
    },
    /// Leave-one-year-out training, calibration, fusion and evaluation.
    Run {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        features: Option<PathBuf>,
        #[arg(long)]
        dl_scores: Option<PathBuf>,
        /// Output directory (overrides run.output_dir).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print a summary table from a metrics JSON file.
    Report {
        #[arg(long)]
        metrics: PathBuf,
    },
}

#[derive(Debug, Args)]
pub struct PhantomArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 600)]
    pub count: usize,
    #[arg(long, default_value_t = 0.1)]
    pub positive_fraction: f64,
    #[arg(long, value_delimiter = ',', default_values_t = [2017, 2018, 2019])]
    pub years: Vec<i32>,
    #[arg(long, default_value_t = PhantomSpec::default().lesion_contrast)]
    pub lesion_contrast: f64,
    #[arg(long, default_value_t = PhantomSpec::default().texture_sigma)]
    pub texture_sigma: f64,
    #[arg(long, default_value_t = 160)]
    pub width: usize,
    #[arg(long, default_value_t = 128)]
    pub height: usize,
    #[arg(long, default_value_t = 0.2)]
    pub pixel_spacing: f64,
    #[arg(long, default_value_t = PhantomSpec::default().dl_separation)]
    pub dl_separation: f64,
}

impl Cli {
    pub fn branches(&self) -> Result<Branches> {
        match (self.rad_only, self.dl_only) {
            (true, true) => bail!("--rad-only and --dl-only are mutually exclusive"),
            (true, false) => Ok(Branches::RadOnly),
            (false, true) => Ok(Branches::DlOnly),
            (false, false) => Ok(Branches::Both),
        }
    }

    pub fn load_config(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        Ok(cfg)
    }
}

/// Returns the text to print on stdout.
pub fn execute(cli: &Cli) -> Result<String> {
    if cli.jobs > 0 {
        // a second call in the same process keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new().num_threads(cli.jobs).build_global();
    }
    let cfg = cli.load_config()?;
    let branches = cli.branches()?;
    match &cli.command {
        Command::Phantoms(a) => {
            let spec = PhantomSpec {
                count: a.count,
                positive_fraction: a.positive_fraction,
                years: a.years.clone(),
                lesion_contrast: a.lesion_contrast,
                texture_sigma: a.texture_sigma,
                width: a.width,
                height: a.height,
                pixel_spacing_mm: a.pixel_spacing,
                dl_separation: a.dl_separation,
                seed: cfg.seed,
            };
            let out = generate_phantoms(&spec, &a.out)?;
            Ok(format!(
                "wrote {} patients: {} and {}\n",
                out.patients.len(),
                out.manifest.display(),
                out.dl_scores.display()
            ))
        }
        Command::Refcdf { manifest, out } => {
            let m = Manifest::load(manifest)?;
            let cdf = build_reference(&m, cfg.bin_count)?;
            write_reference_cdf(out, &cdf)?;
            Ok(format!("wrote {} bins to {}\n", cdf.bin_count(), out.display()))
        }
        Command::Extract {
            manifest,
            out,
            reference,
            label_maps,
        } => {
            let m = Manifest::load(manifest)?;
            let Some(ref_path) = reference.as_ref().or(cfg.reference_cdf.as_ref()) else {
                bail!("no reference CDF: pass --reference or set imaging.reference_cdf (see `radens refcdf`)");
            };
            let cdf = read_reference_cdf(ref_path)?;
            let s = run_extract(&m, &cdf, &cfg.extraction(), out, label_maps.as_deref(), cfg.max_failure_fraction)?;
            Ok(format!(
                "{} views cached in {}, {} exceptions, {} imputed\n",
                s.cached,
                out.display(),
                s.exceptions,
                s.imputed
            ))
        }
        Command::Run {
            manifest,
            features,
            dl_scores,
            out,
        } => {
            let m = Manifest::load(manifest)?;
            let (cache, exceptions) = if branches.uses_rad() {
                let Some(f) = features else {
                    bail!("--features is required unless --dl-only");
                };
                let side = exceptions_path(f);
                let exc = if side.exists() { read_exceptions(&side)? } else { Vec::new() };
                (Some(read_feature_cache(f)?), exc)
            } else {
                (None, Vec::new())
            };
            let dl = if branches.uses_dl() {
                let Some(d) = dl_scores else {
                    bail!("--dl-scores is required unless --rad-only");
                };
                Some(read_dl_scores(d)?)
            } else {
                None
            };
            let a = assemble_patients(&m, cache.as_deref(), &exceptions, dl.as_ref(), branches, cli.allow_missing_dl)?;
            info!("{} patients ({} dropped)", a.patients.len(), a.dropped.len());
            let folds = run_folds(&a.patients, &cfg, branches)?;
            let out_dir = out.clone().unwrap_or_else(|| cfg.output_dir.clone());
            let art = write_run(&out_dir, &folds, &cfg, branches)?;
            render_report(&art.report)
        }
        Command::Report { metrics } => {
            let text = std::fs::read_to_string(metrics).with_context(|| format!("reading {}", metrics.display()))?;
            let m: Metrics = serde_json::from_str(&text).with_context(|| format!("parsing {}", metrics.display()))?;
            render_report(&m)
        }
    }
}
