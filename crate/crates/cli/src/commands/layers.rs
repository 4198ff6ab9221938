use std::path::{Path, PathBuf};

use clap::Args;
use repgeo::ingest::{write_bundle, ReprBundle};
use repgeo::linalg::ReprMatrix;
use repgeo::property::{batch_property, PcaConvention};
use repgeo::synth::LengthLaw;
use repgeo::toymodel::{
    init_model, mix_random_layers, random_sequences, shuffle_cross_sequence, sweep_layers,
    ToyModelConfig,
};
use serde::{Deserialize, Serialize};

use super::{add_batch, load_bundle, summary_row, summary_table};
use crate::failure::{load_config, overlay, usage, CmdResult, Failure};
use crate::report::{Cell, Report, Table};
use crate::Common;

/// Where per-layer representations come from: the toy model run on random
/// token sequences, or one bundle per layer.
#[derive(Args, Debug)]
pub struct SourceArgs {
    /// Per-layer bundles, lookup layer first. Replaces the toy model.
    #[arg(long, num_args = 1..)]
    bundles: Option<Vec<PathBuf>>,
    /// Toy model config (JSON); overrides `model` in --config.
    #[arg(long)]
    model_config: Option<PathBuf>,
    /// Toy model initialisation seed.
    #[arg(long)]
    model_seed: Option<u64>,
    /// Number of random token sequences.
    #[arg(long)]
    n_sequences: Option<usize>,
    #[arg(long)]
    min_len: Option<usize>,
    #[arg(long)]
    max_len: Option<usize>,
    /// Forbid repeated tokens within a sequence.
    #[arg(long)]
    distinct_tokens: Option<bool>,
    #[arg(long)]
    convention: Option<PcaConvention>,
    /// Directory for per-layer bundles of the toy model outputs.
    #[arg(long)]
    export_dir: Option<PathBuf>,
}

#[derive(Serialize, Deserialize, Debug)]
#[serde(default, deny_unknown_fields)]
pub struct SourceConfig {
    bundles: Vec<PathBuf>,
    model: ToyModelConfig,
    n_sequences: usize,
    min_len: usize,
    max_len: usize,
    distinct_tokens: bool,
    convention: PcaConvention,
    export_dir: Option<PathBuf>,
    seed: u64,
}

impl Default for SourceConfig {
    fn default() -> Self {
        Self {
            bundles: Vec::new(),
            model: ToyModelConfig::default(),
            n_sequences: 500,
            min_len: 8,
            max_len: 64,
            distinct_tokens: true,
            convention: PcaConvention::default(),
            export_dir: None,
            seed: 0,
        }
    }
}

fn source_config(args: &SourceArgs, common: &Common) -> CmdResult<SourceConfig> {
    let mut cfg: SourceConfig = load_config(common.config.as_deref())?;
    overlay!(
        cfg,
        args,
        bundles,
        n_sequences,
        min_len,
        max_len,
        distinct_tokens,
        convention,
        export_dir
    );
    overlay!(cfg, common, seed);
    if let Some(path) = &args.model_config {
        cfg.model = load_config(Some(path)).map_err(|e| match e {
            Failure::Usage(m) => usage(m.replace("--config", "--model-config")),
            other => other,
        })?;
    }
    if let Some(s) = args.model_seed {
        cfg.model.seed = s;
    }
    if cfg.bundles.is_empty() {
        cfg.model
            .validate()
            .map_err(|e| usage(format!("toy model: {e}")))?;
        if cfg.min_len < 2 || cfg.min_len > cfg.max_len || cfg.max_len > cfg.model.max_len {
            return Err(usage(format!(
                "--min-len/--max-len must satisfy 2 <= min <= max <= model max_len ({})",
                cfg.model.max_len
            )));
        }
        if cfg.n_sequences == 0 {
            return Err(usage("--n-sequences must be at least 1"));
        }
    } else if cfg.export_dir.is_some() {
        return Err(usage(
            "--export-dir applies to the toy model, not to --bundles",
        ));
    }
    Ok(cfg)
}

/// Layer-major representations, `layers[k][s]`.
fn load_layers(cfg: &SourceConfig) -> CmdResult<Vec<Vec<ReprMatrix>>> {
    if !cfg.bundles.is_empty() {
        let bundles = cfg
            .bundles
            .iter()
            .map(|p| load_bundle("--bundles", p))
            .collect::<CmdResult<Vec<_>>>()?;
        check_aligned(&bundles, &cfg.bundles)?;
        return Ok(bundles.into_iter().map(ReprBundle::into_matrices).collect());
    }
    let model = init_model(&cfg.model)?;
    let law = LengthLaw::Uniform {
        min: cfg.min_len,
        max: cfg.max_len,
    };
    let corpus = random_sequences(
        cfg.n_sequences,
        &law,
        cfg.model.vocab_size,
        cfg.distinct_tokens,
        cfg.seed,
    )?;
    let layers = model.layer_outputs(&corpus)?;
    if let Some(dir) = &cfg.export_dir {
        export_layers(&layers, dir)?;
    }
    Ok(layers)
}

/// Layer bundles must describe the same sentences in the same order.
fn check_aligned(bundles: &[ReprBundle], paths: &[PathBuf]) -> CmdResult<()> {
    let first = &bundles[0];
    for (b, p) in bundles.iter().zip(paths).skip(1) {
        let same = b.len() == first.len()
            && b.sentences()
                .iter()
                .zip(first.sentences())
                .all(|(x, y)| x.id == y.id && x.matrix.len() == y.matrix.len());
        if !same {
            return Err(Failure::Data(anyhow::anyhow!(
                "--bundles {}: sentences differ from {} (ids and lengths must match)",
                p.display(),
                paths[0].display()
            )));
        }
    }
    Ok(())
}

fn export_layers(layers: &[Vec<ReprMatrix>], dir: &Path) -> CmdResult<()> {
    std::fs::create_dir_all(dir)
        .map_err(|e| Failure::Data(anyhow::anyhow!("--export-dir {}: {e}", dir.display())))?;
    for (k, layer) in layers.iter().enumerate() {
        let bundle = ReprBundle::from_corpus(layer.clone())?
            .with_metadata("model", "toy")
            .with_metadata("layer", k.to_string());
        write_bundle(&bundle, dir.join(format!("layer_{k:02}.bin")))?;
    }
    Ok(())
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    #[command(flatten)]
    source: SourceArgs,
}

pub fn sweep(args: &SweepArgs, common: &Common) -> CmdResult<Report> {
    let cfg = source_config(&args.source, common)?;
    let layers = load_layers(&cfg)?;
    let sweep = sweep_layers(&layers, cfg.convention)?;
    let mut report = Report::new("layer-sweep", cfg.seed, &cfg)?;
    report.summary("layer_sweep", &sweep)?;
    let mut table = Table::new("", &["layer", "average", "min", "n_tests", "skipped"]);
    for (k, s) in sweep.per_layer.iter().enumerate() {
        report.degenerate_skipped += s.skipped;
        let mut row = summary_row(s);
        row[0] = Cell::from(k);
        table.push(row);
    }
    report.tables.push(table);
    Ok(report)
}

#[derive(Args, Debug)]
pub struct MixArgs {
    #[command(flatten)]
    source: SourceArgs,
    /// First layer of the range [default: last layer − 3].
    #[arg(long)]
    layer_lo: Option<usize>,
    /// Last layer of the range [default: last layer].
    #[arg(long)]
    layer_hi: Option<usize>,
}

#[derive(Serialize)]
struct MixConfig<'a> {
    #[serde(flatten)]
    source: &'a SourceConfig,
    layer_lo: usize,
    layer_hi: usize,
}

#[derive(Serialize)]
struct Delta {
    reference: String,
    scenario: String,
    average_delta: f64,
}

pub fn mix(args: &MixArgs, common: &Common) -> CmdResult<Report> {
    let cfg = source_config(&args.source, common)?;
    let layers = load_layers(&cfg)?;
    let last = layers.len() - 1;
    let hi = args.layer_hi.unwrap_or(last);
    let lo = args.layer_lo.unwrap_or_else(|| hi.saturating_sub(3));
    if lo > hi || hi > last {
        return Err(usage(format!(
            "--layer-lo/--layer-hi must satisfy lo <= hi <= {last}, got {lo}..={hi}"
        )));
    }
    let mixed = mix_random_layers(&layers, lo, hi, cfg.seed)?;
    let base = batch_property(&layers[last], cfg.convention, true, format!("layer {last}"))?;
    let scenario = format!("random layer {lo}..={hi}");
    let mixed_summary = batch_property(&mixed, cfg.convention, true, scenario)?;

    let echo = MixConfig {
        source: &cfg,
        layer_lo: lo,
        layer_hi: hi,
    };
    let mut report = Report::new("mix-layers", cfg.seed, &echo)?;
    let mut table = summary_table();
    add_batch(&mut report, &mut table, &base)?;
    add_batch(&mut report, &mut table, &mixed_summary)?;
    report.detail("delta", &delta(&base, &mixed_summary))?;
    report.tables.push(table);
    Ok(report)
}

fn delta(
    reference: &repgeo::property::BatchSummary,
    other: &repgeo::property::BatchSummary,
) -> Delta {
    Delta {
        reference: reference.scenario.clone(),
        scenario: other.scenario.clone(),
        average_delta: other.average - reference.average,
    }
}

#[derive(Args, Debug)]
pub struct ShuffleArgs {
    #[command(flatten)]
    source: SourceArgs,
}

pub fn shuffle(args: &ShuffleArgs, common: &Common) -> CmdResult<Report> {
    let cfg = source_config(&args.source, common)?;
    let layers = load_layers(&cfg)?;
    let last = layers.len() - 1;
    let shuffled = shuffle_cross_sequence(&layers[last], cfg.seed)?;
    let base = batch_property(&layers[last], cfg.convention, true, format!("layer {last}"))?;
    let shuffled_summary = batch_property(
        &shuffled,
        cfg.convention,
        true,
        format!("layer {last}, shuffled across sequences"),
    )?;
    let mut report = Report::new("shuffle", cfg.seed, &cfg)?;
    let mut table = summary_table();
    add_batch(&mut report, &mut table, &base)?;
    add_batch(&mut report, &mut table, &shuffled_summary)?;
    report.detail("delta", &delta(&base, &shuffled_summary))?;
    report.tables.push(table);
    Ok(report)
}
