use std::path::PathBuf;

use clap::Args;
use repgeo::linalg::{feature_covariance, ReprMatrix};
use repgeo::rng::{tag, SeedStream};
use repgeo::stats::{
    moments, offdiag_spread, per_dimension_moment_sweep, qq_points, standardize, DimensionSample,
};
use serde::{Deserialize, Serialize};

use super::load_bundle;
use crate::failure::{load_config, overlay, required, usage, CmdResult};
use crate::report::{Cell, Report, Table};
use crate::Common;

#[derive(Args, Debug)]
pub struct DiagnosticsArgs {
    #[arg(long)]
    bundle: Option<PathBuf>,
    /// Dimension used for the Q-Q data.
    #[arg(long)]
    dimension: Option<usize>,
    /// Number of Q-Q points.
    #[arg(long)]
    qq_points: Option<usize>,
    /// Fraction of the dimension's values kept for the Q-Q data.
    #[arg(long)]
    qq_fraction: Option<f64>,
    /// Also compute the statistics on N(0, 1) draws of the same size.
    #[arg(long)]
    reference: Option<bool>,
}

#[derive(Serialize, Deserialize, Debug)]
#[serde(default, deny_unknown_fields)]
pub struct DiagnosticsConfig {
    bundle: Option<PathBuf>,
    dimension: usize,
    qq_points: usize,
    qq_fraction: f64,
    reference: bool,
    seed: u64,
}

impl Default for DiagnosticsConfig {
    fn default() -> Self {
        Self {
            bundle: None,
            dimension: 0,
            qq_points: 100,
            qq_fraction: 1.0,
            reference: true,
            seed: 0,
        }
    }
}

#[derive(Serialize)]
struct MomentTable {
    skewness_mean: f64,
    skewness_std: f64,
    kurtosis_mean: f64,
    kurtosis_std: f64,
    offdiag_mean: f64,
    offdiag_std: f64,
    pooled_count: usize,
}

#[derive(Serialize)]
struct Reference {
    skewness: f64,
    kurtosis: f64,
    qq_correlation: f64,
    count: usize,
}

pub fn run(args: &DiagnosticsArgs, common: &Common) -> CmdResult<Report> {
    let mut cfg: DiagnosticsConfig = load_config(common.config.as_deref())?;
    overlay!(
        cfg,
        args,
        bundle,
        dimension,
        qq_points,
        qq_fraction,
        reference
    );
    overlay!(cfg, common, seed);
    let path = required(&cfg.bundle, "--bundle")?;
    let corpus = load_bundle("--bundle", path)?.into_matrices();
    let d = corpus.first().map(ReprMatrix::d).unwrap_or(0);
    if cfg.dimension >= d {
        return Err(usage(format!(
            "--dimension {} is out of range for d = {d}",
            cfg.dimension
        )));
    }
    let sweep = per_dimension_moment_sweep(&corpus)?;
    let spread = offdiag_spread(&feature_covariance(&corpus)?)?;
    let sample = DimensionSample::from_corpus(&corpus, cfg.dimension)?;
    let pooled_count = sample.values.len();
    let (z, _, _) = standardize(&sample)?;
    let qq = qq_points(
        &DimensionSample::new(cfg.dimension, z)?,
        cfg.qq_points,
        cfg.qq_fraction,
        cfg.seed,
    )?;

    let mut report = Report::new("diagnostics", cfg.seed, &cfg)?;
    report.summary(
        "moment_table",
        &MomentTable {
            skewness_mean: sweep.skewness_mean,
            skewness_std: sweep.skewness_std,
            kurtosis_mean: sweep.kurtosis_mean,
            kurtosis_std: sweep.kurtosis_std,
            offdiag_mean: spread.mean,
            offdiag_std: spread.std,
            pooled_count,
        },
    )?;

    let mut table = Table::new("", &["statistic", "normal", "mean", "std"]);
    table.push(vec![
        "skewness".into(),
        0.0.into(),
        sweep.skewness_mean.into(),
        sweep.skewness_std.into(),
    ]);
    table.push(vec![
        "kurtosis".into(),
        3.0.into(),
        sweep.kurtosis_mean.into(),
        sweep.kurtosis_std.into(),
    ]);
    table.push(vec![
        "covariance_offdiag".into(),
        0.0.into(),
        spread.mean.into(),
        spread.std.into(),
    ]);

    if cfg.reference {
        let mut rng = SeedStream::new(cfg.seed).split(tag::MATRIX).rng();
        let draws: Vec<f64> = (0..pooled_count).map(|_| rng.normal()).collect();
        let s = DimensionSample::new(0, draws)?;
        let (z, _, _) = standardize(&s)?;
        let m = moments(&z)?;
        let k = cfg.qq_points.min(z.len());
        let rqq = qq_points(&DimensionSample::new(0, z)?, k, 1.0, cfg.seed)?;
        report.summary(
            "normal_reference",
            &Reference {
                skewness: m.skewness,
                kurtosis: m.kurtosis,
                qq_correlation: rqq.correlation,
                count: pooled_count,
            },
        )?;
    }
    report.summary("qq", &qq)?;

    let mut dims = Table::new("_dimensions", &["dimension", "skewness", "kurtosis"]);
    for (j, m) in sweep.per_dimension.iter().enumerate() {
        dims.push(vec![j.into(), m.skewness.into(), m.kurtosis.into()]);
    }
    dims.push(vec![
        Cell::Text("mean".into()),
        sweep.skewness_mean.into(),
        sweep.kurtosis_mean.into(),
    ]);
    dims.push(vec![
        Cell::Text("std".into()),
        sweep.skewness_std.into(),
        sweep.kurtosis_std.into(),
    ]);
    let mut qq_table = Table::new("_qq", &["theoretical", "empirical"]);
    for (x, y) in &qq.points {
        qq_table.push(vec![(*x).into(), (*y).into()]);
    }
    report.detail("per_dimension", &sweep.per_dimension)?;
    report.tables.extend([table, dims, qq_table]);
    Ok(report)
}
