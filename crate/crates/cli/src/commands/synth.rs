use std::path::PathBuf;

use clap::Args;
use repgeo::property::{batch_property, PcaConvention};
use repgeo::synth::{
    fit_spec, run_fixed_spec, run_table4, run_uniform_baseline, table4_sensitivity, HyperPrior,
    LengthLaw, SynthConfig,
};
use serde::{Deserialize, Serialize};

use super::{add_batch, load_bundle, summary_table};
use crate::failure::{load_config, overlay, required, usage, CmdResult, Failure};
use crate::report::{Report, Table};
use crate::Common;

/// Shape of the synthetic matrices.
#[derive(Args, Debug)]
pub struct ShapeArgs {
    /// Dimension of each representation.
    #[arg(long)]
    d: Option<usize>,
    /// Smallest number of tokens per matrix.
    #[arg(long)]
    min_len: Option<usize>,
    /// Largest number of tokens per matrix.
    #[arg(long)]
    max_len: Option<usize>,
    /// Number of matrices per row.
    #[arg(long)]
    n_tests: Option<usize>,
}

fn law(min: usize, max: usize) -> LengthLaw {
    if min == max {
        LengthLaw::Fixed(min)
    } else {
        LengthLaw::Uniform { min, max }
    }
}

fn synth_config(
    d: usize,
    min: usize,
    max: usize,
    n_tests: usize,
    seed: u64,
) -> CmdResult<SynthConfig> {
    let c = SynthConfig {
        d,
        length_law: law(min, max),
        n_tests,
        seed,
        ..SynthConfig::default()
    };
    c.validate().map_err(|e| usage(e.to_string()))?;
    Ok(c)
}

#[derive(Args, Debug)]
pub struct Table4Args {
    #[command(flatten)]
    shape: ShapeArgs,
    #[arg(long)]
    convention: Option<PcaConvention>,
    /// Shift every column to zero sum.
    #[arg(long)]
    zero_sum: Option<bool>,
    /// Draw fresh normal parameters for each test.
    #[arg(long)]
    resample_spec_per_test: Option<bool>,
    /// Also rerun the table across alternative shapes.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    sensitivity: Option<bool>,
    /// Tests per row in the sensitivity grid.
    #[arg(long)]
    sensitivity_tests: Option<usize>,
}

#[derive(Serialize, Deserialize, Debug)]
#[serde(default, deny_unknown_fields)]
pub struct Table4Config {
    d: usize,
    min_len: usize,
    max_len: usize,
    n_tests: usize,
    convention: PcaConvention,
    zero_sum: bool,
    resample_spec_per_test: bool,
    sensitivity: bool,
    sensitivity_tests: usize,
    seed: u64,
}

impl Default for Table4Config {
    fn default() -> Self {
        Self {
            d: 768,
            min_len: 8,
            max_len: 64,
            n_tests: 4000,
            convention: PcaConvention::default(),
            zero_sum: false,
            resample_spec_per_test: true,
            sensitivity: false,
            sensitivity_tests: 400,
            seed: 0,
        }
    }
}

#[derive(Serialize)]
struct QualitativeSplit {
    first_row_above_099: bool,
    other_rows_below_03: bool,
}

pub fn sensitivity_grid() -> Vec<(usize, LengthLaw)> {
    let mut grid = Vec::new();
    for d in [100, 300, 768] {
        for l in [
            LengthLaw::Fixed(8),
            LengthLaw::Uniform { min: 8, max: 64 },
            LengthLaw::Fixed(256),
        ] {
            grid.push((d, l));
        }
    }
    grid
}

pub fn table4(args: &Table4Args, common: &Common) -> CmdResult<Report> {
    let mut cfg: Table4Config = load_config(common.config.as_deref())?;
    overlay!(cfg, args.shape, d, min_len, max_len, n_tests);
    overlay!(
        cfg,
        args,
        convention,
        zero_sum,
        resample_spec_per_test,
        sensitivity,
        sensitivity_tests
    );
    overlay!(cfg, common, seed);
    let mut synth = synth_config(cfg.d, cfg.min_len, cfg.max_len, cfg.n_tests, cfg.seed)?;
    synth.zero_sum = cfg.zero_sum;
    synth.resample_spec_per_test = cfg.resample_spec_per_test;
    let priors = HyperPrior::table4();
    let rows = run_table4(&synth, &priors, cfg.convention)?;

    let mut report = Report::new("synth-table4", cfg.seed, &cfg)?;
    let mut table = summary_table();
    for r in &rows {
        add_batch(&mut report, &mut table, r)?;
    }
    report.detail(
        "qualitative_split",
        &QualitativeSplit {
            first_row_above_099: rows[0].average > 0.99,
            other_rows_below_03: rows[1..].iter().all(|r| r.average < 0.3),
        },
    )?;
    report.tables.push(table);

    if cfg.sensitivity {
        if cfg.sensitivity_tests == 0 {
            return Err(usage("--sensitivity-tests must be at least 1"));
        }
        let base = SynthConfig {
            n_tests: cfg.sensitivity_tests,
            ..synth
        };
        let sweep = table4_sensitivity(&base, &priors, cfg.convention, &sensitivity_grid())?;
        let mut t = Table::new(
            "_sensitivity",
            &[
                "d",
                "length_law",
                "prior",
                "average",
                "min",
                "n_tests",
                "skipped",
            ],
        );
        for row in &sweep {
            for s in &row.summaries {
                t.push(vec![
                    row.d.into(),
                    row.length_law.to_string().into(),
                    s.scenario.clone().into(),
                    s.average.into(),
                    s.min.into(),
                    s.n_tests.into(),
                    s.skipped.into(),
                ]);
            }
        }
        report.detail("sensitivity", &sweep)?;
        report.tables.push(t);
    }
    Ok(report)
}

#[derive(Args, Debug)]
pub struct FitArgs {
    /// Bundle whose per-dimension mean and standard deviation are fitted.
    #[arg(long)]
    bundle: Option<PathBuf>,
    #[arg(long)]
    convention: Option<PcaConvention>,
    /// Synthetic matrices [default: one per bundle sentence, same lengths].
    #[arg(long)]
    n_tests: Option<usize>,
    #[arg(long)]
    zero_sum: Option<bool>,
    /// Write the fitted parameters as JSON.
    #[arg(long)]
    spec_out: Option<PathBuf>,
}

#[derive(Serialize, Deserialize, Debug, Default)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    bundle: Option<PathBuf>,
    convention: PcaConvention,
    n_tests: Option<usize>,
    zero_sum: bool,
    spec_out: Option<PathBuf>,
    seed: u64,
}

pub fn fit(args: &FitArgs, common: &Common) -> CmdResult<Report> {
    let mut cfg: FitConfig = load_config(common.config.as_deref())?;
    overlay!(cfg, args, bundle, convention, n_tests, zero_sum, spec_out);
    overlay!(cfg, common, seed);
    let path = required(&cfg.bundle, "--bundle")?;
    let corpus = load_bundle("--bundle", path)?.into_matrices();
    let spec = fit_spec(&corpus)?;
    let lengths: Vec<usize> = corpus.iter().map(|m| m.len()).collect();
    let synth = SynthConfig {
        d: spec.d(),
        length_law: LengthLaw::Cycle(lengths),
        n_tests: cfg.n_tests.unwrap_or(corpus.len()),
        zero_sum: cfg.zero_sum,
        seed: cfg.seed,
        resample_spec_per_test: false,
    };
    synth.validate().map_err(|e| usage(e.to_string()))?;
    let observed = batch_property(&corpus, cfg.convention, true, "observed")?;
    let synthetic = run_fixed_spec(&spec, &synth, cfg.convention, "fitted normal model")?;

    let mut report = Report::new("fit-and-synth", cfg.seed, &cfg)?;
    let mut table = summary_table();
    add_batch(&mut report, &mut table, &observed)?;
    add_batch(&mut report, &mut table, &synthetic)?;
    report.detail("fitted_spec", &spec)?;
    report.tables.push(table);
    if let Some(out) = &cfg.spec_out {
        let text = serde_json::to_string_pretty(&spec).map_err(anyhow::Error::from)? + "\n";
        std::fs::write(out, text)
            .map_err(|e| Failure::Data(anyhow::anyhow!("--spec-out {}: {e}", out.display())))?;
    }
    Ok(report)
}

#[derive(Args, Debug)]
pub struct BaselineArgs {
    #[command(flatten)]
    shape: ShapeArgs,
    /// Lower end of the uniform entry distribution.
    #[arg(long, allow_hyphen_values = true)]
    low: Option<f64>,
    /// Upper end of the uniform entry distribution.
    #[arg(long, allow_hyphen_values = true)]
    high: Option<f64>,
    /// Conventions to run [default: A, B and C].
    #[arg(long, num_args = 1..)]
    conventions: Option<Vec<PcaConvention>>,
}

#[derive(Serialize, Deserialize, Debug)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineConfig {
    d: usize,
    min_len: usize,
    max_len: usize,
    n_tests: usize,
    low: f64,
    high: f64,
    conventions: Vec<PcaConvention>,
    seed: u64,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self {
            d: 768,
            min_len: 8,
            max_len: 64,
            n_tests: 4000,
            low: -1.0,
            high: 1.0,
            conventions: PcaConvention::ALL.to_vec(),
            seed: 0,
        }
    }
}

pub fn baseline(args: &BaselineArgs, common: &Common) -> CmdResult<Report> {
    let mut cfg: BaselineConfig = load_config(common.config.as_deref())?;
    overlay!(cfg, args.shape, d, min_len, max_len, n_tests);
    overlay!(cfg, args, low, high, conventions);
    overlay!(cfg, common, seed);
    if !(cfg.low < cfg.high) {
        return Err(usage(format!(
            "--low must be below --high, got [{}, {}]",
            cfg.low, cfg.high
        )));
    }
    if cfg.conventions.is_empty() {
        return Err(usage("--conventions needs at least one value"));
    }
    let synth = synth_config(cfg.d, cfg.min_len, cfg.max_len, cfg.n_tests, cfg.seed)?;
    let mut report = Report::new("baseline-random", cfg.seed, &cfg)?;
    let mut table = Table::new("", &["convention", "average", "min", "n_tests", "skipped"]);
    for &conv in &cfg.conventions {
        let mut s = run_uniform_baseline(&synth, (cfg.low, cfg.high), conv)?;
        s.scenario = format!("{} ({})", s.scenario, conv.letter());
        report.summary("batch_summary", &s)?;
        report.degenerate_skipped += s.skipped;
        table.push(vec![
            conv.letter().to_string().into(),
            s.average.into(),
            s.min.into(),
            s.n_tests.into(),
            s.skipped.into(),
        ]);
    }
    report.tables.push(table);
    Ok(report)
}
