use std::path::PathBuf;

use clap::Args;
use repgeo::ingest::{
    parse_word_vectors, read_sentences, sentences_to_repr, write_bundle, OovPolicy,
};
use repgeo::property::{property_cosines, summarize, PcaConvention};
use serde::{Deserialize, Serialize};

use super::{add_batch, summary_table};
use crate::failure::{load_config, overlay, required, CmdResult, Context};
use crate::report::Report;
use crate::Common;

#[derive(Args, Debug)]
pub struct WordvecArgs {
    /// Word-vector text file (`word v1 .. vd` per line).
    #[arg(long)]
    vectors: Option<PathBuf>,
    /// The vector file starts with a `count dim` line.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    header: Option<bool>,
    /// Tokenized sentences, one per line, whitespace-separated.
    #[arg(long)]
    sentences: Option<PathBuf>,
    /// Lowercase tokens before lookup.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    lowercase: Option<bool>,
    /// Out-of-vocabulary tokens: skip or error.
    #[arg(long)]
    oov: Option<OovPolicy>,
    #[arg(long)]
    convention: Option<PcaConvention>,
    /// Include every sentence's cosine in the report.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    per_sentence: Option<bool>,
    /// Write the sentence matrices as a bundle.
    #[arg(long)]
    export: Option<PathBuf>,
}

#[derive(Serialize, Deserialize, Debug, Default)]
#[serde(default, deny_unknown_fields)]
pub struct WordvecConfig {
    vectors: Option<PathBuf>,
    header: bool,
    sentences: Option<PathBuf>,
    lowercase: bool,
    oov: OovPolicy,
    convention: PcaConvention,
    per_sentence: bool,
    export: Option<PathBuf>,
    seed: u64,
}

#[derive(Serialize)]
struct Conversion {
    sentences: usize,
    vocabulary: usize,
    d: usize,
    oov_skipped: usize,
}

pub fn run(args: &WordvecArgs, common: &Common) -> CmdResult<Report> {
    let mut cfg: WordvecConfig = load_config(common.config.as_deref())?;
    overlay!(
        cfg,
        args,
        vectors,
        header,
        sentences,
        lowercase,
        oov,
        convention,
        per_sentence,
        export
    );
    overlay!(cfg, common, seed);
    let vectors = required(&cfg.vectors, "--vectors")?;
    let sentences_path = required(&cfg.sentences, "--sentences")?;
    let table = parse_word_vectors(vectors, cfg.header).file("--vectors", vectors)?;
    let sentences =
        read_sentences(sentences_path, cfg.lowercase).file("--sentences", sentences_path)?;
    let converted =
        sentences_to_repr(&table, &sentences, cfg.oov).file("--sentences", sentences_path)?;
    if let Some(out) = &cfg.export {
        write_bundle(&converted.bundle, out).file("--export", out)?;
    }
    let corpus = converted.bundle.matrices();
    let results = property_cosines(&corpus, cfg.convention);

    let mut report = Report::new("wordvec-property", cfg.seed, &cfg)?;
    report.detail(
        "conversion",
        &Conversion {
            sentences: corpus.len(),
            vocabulary: table.len(),
            d: table.d(),
            oov_skipped: converted.oov_skipped,
        },
    )?;
    if cfg.per_sentence {
        let values: Vec<Option<f64>> = results
            .iter()
            .map(|r| r.as_ref().ok().map(|p| p.abs_cos))
            .collect();
        report.detail("per_sentence", &values)?;
    }
    let scenario = format!("{} ({})", vectors.display(), cfg.convention.letter());
    let summary = summarize(scenario, results, true)?;
    let mut t = summary_table();
    add_batch(&mut report, &mut t, &summary)?;
    report.tables.push(t);
    Ok(report)
}
