use std::path::PathBuf;

use clap::Args;
use repgeo::linalg::{token_covariance, Centering};
use repgeo::rng::{tag, SeedStream};
use repgeo::synth::{fit_spec, sample_matrix, NormalSpec};
use repgeo::theory::{
    compare_moments, constant_structure_spectrum, empirical_moments, monte_carlo_moments,
    spectral_check, theoretical_moments, ConstantStructure, CovMomentReport, ErrorBars,
    MomentComparison,
};
use serde::{Deserialize, Serialize};

use super::load_bundle;
use crate::failure::{load_config, overlay, usage, CmdResult, Context, Failure};
use crate::report::{Cell, Report, Table};
use crate::Common;

#[derive(Args, Debug)]
pub struct TheoryArgs {
    /// Normal parameters as JSON: {"mu": [...], "sigma": [...]}.
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Bundle: fit the parameters and compare with its own covariance entries.
    #[arg(long)]
    bundle: Option<PathBuf>,
    /// Number of sampled matrices.
    #[arg(long)]
    n: Option<usize>,
    /// Tokens per sampled matrix; with 2 the pooled entries are independent.
    #[arg(long)]
    length: Option<usize>,
    #[arg(long)]
    zero_sum: Option<bool>,
    /// Tokens of the matrix used for the spectral checks.
    #[arg(long)]
    spectral_length: Option<usize>,
    /// Column centering of bundle matrices before their covariance.
    #[arg(long, value_parser = parse_centering)]
    centering: Option<Centering>,
}

fn parse_centering(s: &str) -> Result<Centering, String> {
    match s {
        "none" => Ok(Centering::None),
        "per_column_mean" | "per-column-mean" => Ok(Centering::PerColumnMean),
        _ => Err(format!(
            "unknown centering {s:?} (expected none or per_column_mean)"
        )),
    }
}

#[derive(Serialize, Deserialize, Debug)]
#[serde(default, deny_unknown_fields)]
pub struct TheoryConfig {
    spec: Option<PathBuf>,
    bundle: Option<PathBuf>,
    n: usize,
    length: usize,
    zero_sum: bool,
    spectral_length: usize,
    centering: Centering,
    seed: u64,
}

impl Default for TheoryConfig {
    fn default() -> Self {
        Self {
            spec: None,
            bundle: None,
            n: 2000,
            length: 2,
            zero_sum: false,
            spectral_length: 32,
            centering: Centering::None,
            seed: 0,
        }
    }
}

#[derive(Serialize)]
struct Check<'a> {
    estimate: &'a str,
    error_bars: ErrorBars,
    z_scores: MomentComparison,
    means_within_3se: bool,
    variances_within_3se: bool,
}

#[derive(Serialize)]
struct SpectralSummary {
    l: usize,
    lambda1: f64,
    row_sum_low: Option<f64>,
    row_sum_high: Option<f64>,
    within_row_sum_bounds: Option<bool>,
    constant_prediction: f64,
    w_uniformity: f64,
    expected_diag: f64,
    expected_offdiag: f64,
    expected_lambda_max: Option<f64>,
}

fn read_spec(path: &PathBuf) -> CmdResult<NormalSpec> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::Data(anyhow::anyhow!("--spec {}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| Failure::Data(anyhow::anyhow!("--spec {}: {e}", path.display())))
}

fn moments_row(t: &mut Table, label: &str, r: &CovMomentReport) {
    t.push(vec![
        label.into(),
        r.diag_mean.into(),
        r.diag_std.into(),
        r.offdiag_mean.into(),
        r.offdiag_std.into(),
    ]);
}

pub fn run(args: &TheoryArgs, common: &Common) -> CmdResult<Report> {
    let mut cfg: TheoryConfig = load_config(common.config.as_deref())?;
    overlay!(
        cfg,
        args,
        spec,
        bundle,
        n,
        length,
        zero_sum,
        spectral_length,
        centering
    );
    overlay!(cfg, common, seed);
    if cfg.spec.is_some() == cfg.bundle.is_some() {
        return Err(usage("exactly one of --spec and --bundle is required"));
    }
    if cfg.spectral_length < 2 {
        return Err(usage("--spectral-length must be at least 2"));
    }
    let corpus = match &cfg.bundle {
        Some(p) => Some(load_bundle("--bundle", p)?.into_matrices()),
        None => None,
    };
    let spec = match (&cfg.spec, &corpus) {
        (Some(p), _) => read_spec(p)?,
        (None, Some(c)) => {
            fit_spec(c).file("--bundle", cfg.bundle.as_ref().expect("bundle set"))?
        }
        (None, None) => unreachable!("checked above"),
    };

    let theoretical = theoretical_moments(&spec)?;
    let simulated = monte_carlo_moments(&spec, cfg.length, cfg.n, cfg.seed, cfg.zero_sum)
        .map_err(|e| usage(format!("--n/--length: {e}")))?;
    let bars = if cfg.length == 2 {
        ErrorBars::Theoretical
    } else {
        ErrorBars::BatchMeans
    };

    let mut report = Report::new("theory-check", cfg.seed, &cfg)?;
    let mut table = Table::new(
        "",
        &[
            "source",
            "diag_mean",
            "diag_std",
            "offdiag_mean",
            "offdiag_std",
        ],
    );
    report.summary("cov_moments", &theoretical)?;
    moments_row(&mut table, "theoretical", &theoretical);
    report.summary("cov_moments", &simulated)?;
    moments_row(&mut table, "estimated (simulated)", &simulated);
    let mut checks = vec![check("simulated", &theoretical, &simulated, bars)?];
    if let Some(c) = &corpus {
        let observed = empirical_moments(c, cfg.centering)?;
        report.summary("cov_moments", &observed)?;
        moments_row(&mut table, "estimated (bundle)", &observed);
        checks.push(check(
            "bundle",
            &theoretical,
            &observed,
            ErrorBars::BatchMeans,
        )?);
    }
    print_checks(&checks, &theoretical, &simulated);
    report.detail("checks", &checks)?;

    let stream = SeedStream::new(cfg.seed).split(tag::SPEC);
    let r = sample_matrix(&spec, cfg.spectral_length, &mut stream.rng(), false)?;
    let sc = spectral_check(&token_covariance(&r, Centering::None))?;
    let (a, b) = (theoretical.diag_mean, theoretical.offdiag_mean);
    let expected_lambda_max = ConstantStructure::new(a, b, cfg.spectral_length)
        .ok()
        .map(|s| constant_structure_spectrum(&s).lambda_max);
    report.detail(
        "spectral",
        &SpectralSummary {
            l: sc.l,
            lambda1: sc.lambda1,
            row_sum_low: sc.bounds.map(|b| b.low),
            row_sum_high: sc.bounds.map(|b| b.high),
            within_row_sum_bounds: sc
                .bounds
                .map(|b| b.low <= sc.lambda1 && sc.lambda1 <= b.high),
            constant_prediction: sc.constant_prediction,
            w_uniformity: sc.w_uniformity,
            expected_diag: a,
            expected_offdiag: b,
            expected_lambda_max,
        },
    )?;
    report.tables.push(table);
    Ok(report)
}

fn check<'a>(
    estimate: &'a str,
    theoretical: &CovMomentReport,
    estimated: &CovMomentReport,
    bars: ErrorBars,
) -> CmdResult<Check<'a>> {
    let z = compare_moments(theoretical, estimated, bars)?;
    Ok(Check {
        estimate,
        error_bars: bars,
        means_within_3se: z.means_within(3.0),
        variances_within_3se: z.variances_within(3.0),
        z_scores: z,
    })
}

fn print_checks(checks: &[Check], theoretical: &CovMomentReport, simulated: &CovMomentReport) {
    let Some(e) = simulated.errors else { return };
    let mut t = Table::new("", &["quantity", "theoretical", "simulated", "delta", "z"]);
    let z = &checks[0].z_scores;
    let rows = [
        (
            "diag_mean",
            theoretical.diag_mean,
            simulated.diag_mean,
            z.diag_mean_z,
        ),
        (
            "diag_var",
            theoretical.diag_std.powi(2),
            simulated.diag_std.powi(2),
            z.diag_var_z,
        ),
        (
            "offdiag_mean",
            theoretical.offdiag_mean,
            simulated.offdiag_mean,
            z.offdiag_mean_z,
        ),
        (
            "offdiag_var",
            theoretical.offdiag_std.powi(2),
            simulated.offdiag_std.powi(2),
            z.offdiag_var_z,
        ),
    ];
    for (name, th, est, zv) in rows {
        t.push(vec![
            Cell::from(name),
            th.into(),
            est.into(),
            (est - th).into(),
            zv.into(),
        ]);
    }
    println!(
        "deltas in units of standard error ({} diagonal, {} off-diagonal samples):",
        e.diag_samples, e.offdiag_samples
    );
    t.print();
    println!();
}
