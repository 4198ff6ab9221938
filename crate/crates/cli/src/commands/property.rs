use std::path::PathBuf;

use clap::Args;
use repgeo::property::{property_cosines, summarize, PcaConvention};
use serde::{Deserialize, Serialize};

use super::{add_batch, load_bundle, summary_table};
use crate::failure::{load_config, overlay, required, CmdResult};
use crate::report::Report;
use crate::Common;

#[derive(Args, Debug)]
pub struct PropertyArgs {
    /// Representation bundle (text or binary).
    #[arg(long)]
    bundle: Option<PathBuf>,
    /// PCA convention: A (token-centered), B (dimension samples), C (uncentered).
    #[arg(long)]
    convention: Option<PcaConvention>,
    /// Fail on degenerate matrices instead of skipping them.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    strict: Option<bool>,
    /// Include every sentence's cosine in the report.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    per_sentence: Option<bool>,
}

#[derive(Serialize, Deserialize, Debug, Default)]
#[serde(default, deny_unknown_fields)]
pub struct PropertyConfig {
    bundle: Option<PathBuf>,
    convention: PcaConvention,
    strict: bool,
    per_sentence: bool,
    seed: u64,
}

#[derive(Serialize)]
struct SentenceCosine<'a> {
    id: &'a str,
    abs_cos: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
}

pub fn run(args: &PropertyArgs, common: &Common) -> CmdResult<Report> {
    let mut cfg: PropertyConfig = load_config(common.config.as_deref())?;
    overlay!(cfg, args, bundle, convention, strict, per_sentence);
    overlay!(cfg, common, seed);
    let path = required(&cfg.bundle, "--bundle")?;
    let bundle = load_bundle("--bundle", path)?;
    let results = property_cosines(&bundle.matrices(), cfg.convention);

    let mut report = Report::new("property", cfg.seed, &cfg)?;
    if !bundle.metadata.is_empty() {
        report.detail("bundle_metadata", &bundle.metadata)?;
    }
    if cfg.per_sentence {
        let rows: Vec<SentenceCosine> = bundle
            .sentences()
            .iter()
            .zip(&results)
            .map(|(s, r)| SentenceCosine {
                id: &s.id,
                abs_cos: r.as_ref().ok().map(|p| p.abs_cos),
                error: r.as_ref().err().map(ToString::to_string),
            })
            .collect();
        report.detail("per_sentence", &rows)?;
    }
    let scenario = format!("{} ({})", path.display(), cfg.convention.letter());
    let summary = summarize(scenario, results, !cfg.strict)?;
    let mut table = summary_table();
    add_batch(&mut report, &mut table, &summary)?;
    report.tables.push(table);
    Ok(report)
}
